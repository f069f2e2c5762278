import pytest

from galerkinlab.config import ConfigError, ExperimentConfig, load_config, parse_config

FULL = """
[experiment]
mode = ladder          # comment
problem = manufactured
eval_n = 64
resolutions = [12, 16]
out = runs/x

[solver]
nu = 0.05
dt = 5e-3
steady_method = ab3

[expansion]
scales = [[1.0, 0.5], [0.5, 0.25]]
max_terms = 2

[comparability]
slope = 0.05

[diagnostics]
alphas = [0.5, 1.0]
b_mode = raw

[timedep]
T = 0.5
norm = hgamma
"""


def test_full_config_parses():
    cfg = parse_config(FULL)
    assert cfg.mode == "ladder" and cfg.resolutions == (12, 16) and cfg.eval_n == 64
    assert cfg.solver.nu == 0.05 and cfg.solver.steady_method == "ab3"
    assert cfg.scales == ((1.0, 0.5), (0.5, 0.25))
    assert cfg.expansion_options(cfg.scales[1]).max_terms == 2
    assert cfg.thresholds.slope == 0.05
    assert cfg.diagnostics.alphas == (0.5, 1.0) and cfg.diagnostics.b_mode == "raw"
    assert cfg.timedep.T == 0.5 and cfg.timedep.norm == "hgamma"


def test_overrides_win():
    cfg = parse_config(FULL, {"out": "elsewhere"})
    assert cfg.out == "elsewhere"


@pytest.mark.parametrize(
    "text,match",
    [
        ("[experiment]\nproblem = manufactured\n", "mode"),
        ("[experiment]\nmode = fly\n", "mode"),
        ("[experiment]\nmode = ladder\n[bogus]\nx = 1\n", "section"),
        ("[experiment]\nmode = ladder\ncolour = 1\n", "colour"),
        ("[experiment]\nmode = ladder\n[solver]\nwarp = 9\n", "warp"),
        ("[experiment]\nmode = ladder\n[solver]\nnu = -1\n", "solver"),
        ("[experiment]\nmode = ladder\nresolutions = [33]\n", "2\\^p 3\\^q"),
        ("[experiment]\nmode = ladder\neval_n = 64\nresolutions = [48]\n", "twice"),
        ("[experiment]\nmode = diagnose\n", "archive"),
        ("[experiment]\nmode = ladder\n[expansion]\nscales = [[0.5, 1.0]]\n", "scale"),
        ("[experiment]\nmode = ladder\n[expansion]\nwidget = 1\n", "expansion"),
        ("[experiment]\nmode = ladder\n[timedep]\nnorm = h1\n", "norm"),
        ("[experiment]\nmode = example3\n[example3]\nforcing = nope\n", "forcing"),
        ("not an ini file", "parse"),
    ],
)
def test_bad_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


def test_defaults_validate():
    cfg = ExperimentConfig(mode="ladder")
    assert cfg.eval_n >= 2 * cfg.resolutions[-1]


@pytest.mark.parametrize("name", ["manufactured", "diagnose", "expand", "heat", "example3"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    cfg = load_config(Path(__file__).parents[1] / "configs" / f"{name}.ini")
    assert cfg.out.startswith("runs/")
