import hashlib
import math

import numpy as np
import pytest

from onet.cli import main
from onet.experiments import FAST_EXPERIMENTS, REGISTRY
from onet.harness import (
    ConfigError,
    fit_rate,
    parse_config,
    resolve_parameters,
    slopes_so_far,
    to_csv,
    write_atomic,
)


def test_fit_rate_exact_power_law():
    fit = fit_rate([(x, 3.0 * x**-2) for x in (4, 8, 16, 32)])
    assert fit.slope == pytest.approx(-2.0, abs=1e-12)
    assert math.exp(fit.intercept) == pytest.approx(3.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0) and fit.n_points == 4


def test_fit_rate_vs_normal_equations():
    rng = np.random.default_rng(0)
    xs = np.array([2.0, 5.0, 9.0, 30.0, 71.0])
    ys = np.exp(rng.standard_normal(5)) * xs**0.7
    lx, ly = np.log(xs), np.log(ys)
    n = len(xs)
    slope = (n * np.sum(lx * ly) - lx.sum() * ly.sum()) / (n * np.sum(lx**2) - lx.sum() ** 2)
    intercept = (ly.sum() - slope * lx.sum()) / n
    r = np.corrcoef(lx, ly)[0, 1]
    fit = fit_rate(zip(xs, ys))
    assert fit.slope == pytest.approx(slope, rel=1e-12)
    assert fit.intercept == pytest.approx(intercept, rel=1e-12, abs=1e-12)
    assert fit.r_squared == pytest.approx(r * r, rel=1e-10)


def test_fit_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rate([(1, 1)])
    with pytest.raises(ValueError):
        fit_rate([(1, 1), (2, -1)])


def test_slopes_so_far():
    out = slopes_so_far([1, 2, 4], [1, 0.25, 0.0625])
    assert math.isnan(out[0]) and out[1] == pytest.approx(-2) and out[2] == pytest.approx(-2)


def test_parse_config():
    cfg = parse_config(
        'experiment = "spectral-rate"  # comment\n'
        "seeds = [1, 2]\nN_list = [4, 8]\nband = 0.5\nsvg = false\nname = 'a#b'\n"
    )
    assert cfg.experiment == "spectral-rate" and cfg.seeds == [1, 2] and cfg.svg is False
    assert cfg.parameters == {"N_list": [4, 8], "band": 0.5, "name": "a#b"}
    assert parse_config('experiment = "x"').seeds == list(range(10))


@pytest.mark.parametrize("text", [
    "band = 1",
    'experiment = "x"\n[table]',
    'experiment = "x"\nexperiment = "y"',
    'experiment = "x"\nband = oops',
    'experiment = "x"\nno equals sign',
    'experiment = "x"\nseeds = [-1]',
])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_resolve_parameters():
    defaults = {"a": 1.0, "b": 2, "c": (1, 2), "e": "x", "f": True}
    out = resolve_parameters(defaults, {"a": 3, "c": [5]})
    assert out == {"a": 3.0, "b": 2, "c": (5,), "e": "x", "f": True}
    for bad in ({"z": 1}, {"b": 1.5}, {"a": "s"}, {"c": []}, {"f": 1}, {"b": True}):
        with pytest.raises(ConfigError):
            resolve_parameters(defaults, bad)


def test_csv_and_atomic_write(tmp_path):
    text = to_csv(["a", "b", "c"], [(1, 0.1, float("nan")), (True, "s", np.float64(2.5))])
    assert text == "a,b,c\n1,0.1,\ntrue,s,2.5\n"
    path = tmp_path / "sub" / "x.csv"
    write_atomic(path, text)
    write_atomic(path, text + "more\n")
    assert path.read_text().endswith("more\n")
    assert [p.name for p in path.parent.iterdir()] == ["x.csv"]


def test_registry_has_all_experiments():
    for name in ("spectral-rate", "lipschitz-P", "pu-properties", "trunk-exactness",
                 "local-approx-rate", "end-to-end-poisson", "branch-depth-study",
                 "gap-vs-M", "gap-vs-P"):
        assert name in REGISTRY
    assert set(FAST_EXPERIMENTS) <= set(REGISTRY)


def _write(tmp_path, body, out):
    path = tmp_path / "cfg.toml"
    path.write_text(body + f'\noutput_dir = "{out}"\n')
    return str(path)


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "out"
    ok = _write(tmp_path, 'experiment = "pu-properties"\nK_list = [1, 2]', out)
    assert main(["run", ok]) == 0
    assert (out / "pu-properties.csv").exists() and (out / "pu-properties-summary.csv").exists()
    bad = _write(tmp_path, 'experiment = "spectral-rate"\ns = 1.5\nN_list = [4, 8, 16]', out)
    assert main(["run", bad]) == 1
    assert "accepted,false" in (out / "spectral-rate-summary.csv").read_text()
    assert main(["run", _write(tmp_path, 'experiment = "nope"', out)]) == 2
    assert main(["run", _write(tmp_path, 'experiment = "pu-properties"\nbogus = 1', out)]) == 2
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    capsys.readouterr()


def test_cli_output_is_deterministic(tmp_path, monkeypatch):
    cfg = _write(tmp_path, 'experiment = "local-approx-rate"\nK_list = [2, 4, 8]\nseeds = [3]', "unused")
    digests = []
    for run in ("a", "b"):
        monkeypatch.setenv("ONET_OUT", str(tmp_path / run))
        main(["run", cfg])
        data = (tmp_path / run / "local-approx-rate.csv").read_bytes()
        digests.append(hashlib.sha256(data).hexdigest())
    assert digests[0] == digests[1]
    assert not (tmp_path / "unused").exists()


def test_cli_list_and_check(capsys):
    assert main(["list"]) == 0
    listing = capsys.readouterr().out
    assert all(name in listing for name in REGISTRY)
    assert main(["list", "-v"]) == 0
    assert "N_list" in capsys.readouterr().out
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert all(f"{name}: PASS" in out for name in FAST_EXPERIMENTS)
