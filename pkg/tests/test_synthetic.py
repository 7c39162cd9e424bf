import numpy as np

from midcap_neutral.config import Config
from midcap_neutral.panel import build_panel, midcap_filter
from midcap_neutral.synthetic import generate_synthetic


def test_same_seed_writes_identical_files(tmp_path):
    cfg = Config(synth_n_stocks=40, synth_n_months=30)
    a = generate_synthetic(cfg).write(tmp_path / "a")
    b = generate_synthetic(cfg).write(tmp_path / "b")
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes()
    c = generate_synthetic(cfg, seed=1).write(tmp_path / "c")
    assert c["crsp"].read_bytes() != a["crsp"].read_bytes()


def test_inputs_load_and_straddle_the_band(synthetic_dir, default_panel, default_config):
    caps = default_panel.frame["market_cap"]
    assert (caps < default_config.midcap_min).any()
    assert (caps > default_config.midcap_max).any()
    filtered = midcap_filter(default_panel, default_config.midcap_min, default_config.midcap_max)
    assert filtered.frame["permno"].nunique() > 100


def test_some_prices_are_quoted_negative():
    data = generate_synthetic(Config(synth_n_stocks=60, synth_n_months=24))
    assert (data.crsp["prc"] < 0).any()
    assert np.isfinite(data.benchmark["ret"]).all()
