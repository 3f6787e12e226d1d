"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import itertools
import time

import numpy as np
import pytest

from onet import nn, pde
from onet.experiments import REGISTRY
from onet.harness import resolve_parameters
from onet.nn import SIGMA1, SIGMA2, NetworkSpec
from onet.pde import OperatorSpec
from onet.spectral import FieldEnsemble, sobolev_norm

SEEDS = list(range(10))


def report(n, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.1f} s, budget {budget} s)")
    return ok


def run_experiment(name, seeds=SEEDS, **overrides):
    exp = REGISTRY[name]
    start = time.perf_counter()
    result = exp.run(resolve_parameters(exp.defaults, overrides), seeds)
    return result, time.perf_counter() - start


def summary_text(result):
    return " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in result.summary.items())


def test_criterion_01_exactness():
    result, t = run_experiment("trunk-exactness", n_points=1000)
    kinds = {r[0] for r in result.rows}
    enough = all(r[2] >= 1000 for r in result.rows)
    worst = max(r[3] for r in result.rows)
    ok = kinds == {"product", "monomial", "bump", "trunk"} and enough and worst <= 1e-11
    ok = report(1, ok, f"max_abs_err={worst:.3g} over {len(result.rows)} networks", t, 5)
    assert ok, "criterion 1 not met"


def _random_net(seed, act, max_params=2000):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    widths = tuple(int(w) for w in rng.integers(3, 16, size=int(rng.integers(1, 4))))
    spec = NetworkSpec(d, tuple((w, act) for w in widths), int(rng.integers(1, 4)))
    assert nn.count_params(spec) <= max_params
    theta = 0.8 * nn.init_params(spec, seed) + 0.1 * rng.standard_normal(nn.count_params(spec))
    X = rng.uniform(-1, 1, (100, d))
    return spec, theta, X, rng


def _kink_margin(spec, theta, X):
    """Smallest |pre-activation| over hidden neurons, per row."""
    margin = np.full(X.shape[0], np.inf)
    z = X
    for (W, b), act in zip(nn.unpack(spec, theta)[:-1], spec.activations):
        h = z @ W.T + b
        margin = np.minimum(margin, np.abs(h).min(axis=1))
        z = np.maximum(h, 0) ** (2 if act == SIGMA2 else 1)
    return margin


def _rel(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-12))


def test_criterion_02_derivative_oracles():
    start = time.perf_counter()
    jet_err = param_err = 0.0
    probes = 0
    for seed in SEEDS:
        # input jets of a smooth network
        spec, theta, X, rng = _random_net(seed, SIGMA2)
        v, g, lap = nn.jet_batch(spec, theta, X)
        h = 1e-5
        f = lambda Y: nn.forward_batch(spec, theta, Y)
        fd_g = np.stack([(f(X + h * e) - f(X - h * e)) / (2 * h) for e in np.eye(spec.input_dim)], axis=-1)
        hl = 1e-3
        fd_l = sum((f(X + hl * e) - 2 * f(X) + f(X - hl * e)) / hl**2 for e in np.eye(spec.input_dim))
        keep = _kink_margin(spec, theta, X) > 1e-2
        probes += int(keep.sum())
        jet_err = max(jet_err, _rel(g[keep], fd_g[keep]), _rel(lap[keep], fd_l[keep]))

        # parameter gradients: value cotangent on a ReLU net, full jet cotangent on a ReQU net
        for act in (SIGMA1, SIGMA2):
            spec, theta, X, rng = _random_net(seed + 1000, act)
            cv = rng.standard_normal((X.shape[0], spec.output_dim))
            if act == SIGMA1:
                grad = nn.backprop_batch(spec, theta, X, cv)
                J = lambda th: float(np.sum(cv * nn.forward_batch(spec, th, X)))
            else:
                cg = rng.standard_normal((X.shape[0], spec.output_dim, spec.input_dim))
                cl = rng.standard_normal((X.shape[0], spec.output_dim))
                grad = nn.backprop_batch(spec, theta, X, cv, cg, cl)

                def J(th):
                    a, b, c = nn.jet_batch(spec, th, X)
                    return float(np.sum(cv * a) + np.sum(cg * b) + np.sum(cl * c))

            hp = 1e-6
            fd = np.empty_like(theta)
            for i in range(theta.size):
                e = np.zeros_like(theta)
                e[i] = hp
                fd[i] = (J(theta + e) - J(theta - e)) / (2 * hp)
            param_err = max(param_err, _rel(grad, fd))
    t = time.perf_counter() - start
    ok = jet_err <= 1e-5 and param_err <= 1e-4 and probes >= 500
    ok = report(2, ok, f"jet_rel_err={jet_err:.3g} param_rel_err={param_err:.3g} probes={probes}", t, 30)
    assert ok, "criterion 2 not met"


def test_criterion_03_spectral_rate():
    result, t = run_experiment("spectral-rate", s=4.0, s_prime=2.0, d=1, N_list=(4, 8, 16, 32, 64), band=0.4)
    slope = result.summary["slope"]
    ok = report(3, -2.4 <= slope <= -1.6, summary_text(result), t, 10)
    assert ok, "criterion 3 not met"


def test_criterion_04_lipschitz():
    result, t = run_experiment("lipschitz-P", s_prime=2.0, d=1, N_list=(4, 8, 16, 32, 64), band=0.2)
    s = result.summary
    max_dev = max(abs(r[1] - r[2]) / max(1.0, r[2]) for r in result.rows)
    ok = s["oracle_match"] and max_dev <= 1e-12 and 1.8 <= s["slope"] <= 2.2
    ok = report(4, ok, f"{summary_text(result)} oracle_dev={max_dev:.3g}", t, 5)
    assert ok, "criterion 4 not met"


def test_criterion_05_partition():
    result, t = run_experiment("pu-properties", K_list=(1, 2, 4, 8), slack=1e-6)
    ok = True
    for K, sup, w1, b1, w2, b2, raw, dev in result.rows:
        ok &= sup <= 1.0 and w1 <= b1 * (1 + 1e-6) and w2 <= b2 * (1 + 1e-6) and dev <= 1e-12
    ok &= result.summary["raw_sum_at_K2_x7_16"] == 1.5
    worst = max(r[7] for r in result.rows)
    ok = report(5, ok, f"{summary_text(result)} normalized_dev={worst:.3g}", t, 10)
    assert ok, "criterion 5 not met"


def test_criterion_06_local_rate():
    result, t = run_experiment("local-approx-rate", n=4, d=1, K_list=(2, 4, 8, 16))
    s = result.summary
    ok = -2.5 <= s["slope"] <= -1.5 and s["r_squared"] >= 0.9
    ok = report(6, ok, summary_text(result), t, 60)
    assert ok, "criterion 6 not met"


def test_criterion_07_ground_truth():
    start = time.perf_counter()
    op = OperatorSpec(0.5, 1)
    # stability constant by enumerating |k| <= 64
    c_stab = max((1 + 4 * np.pi**2 * k * k) / (4 * np.pi**2 * k * k + op.c) for k in range(-64, 65))
    ens = FieldEnsemble(1, 1.0, 8)
    fields = ens.sample_many(7, 400)
    worst_ratio, roundtrip = 0.0, 0.0
    for f1, f2 in zip(fields[::2], fields[1::2]):
        du = pde.solve_truth(f1, op) - pde.solve_truth(f2, op)
        worst_ratio = max(worst_ratio, sobolev_norm(du, 2.0) / (c_stab * sobolev_norm(f1 - f2, 0.0)))
        back = pde.apply_L_field(pde.solve_truth(f1, op), op)
        roundtrip = max(roundtrip, float(np.abs(back.coeffs - f1.coeffs).max()))
    t = time.perf_counter() - start
    ok = worst_ratio <= 1 + 1e-10 and roundtrip <= 1e-12
    ok = report(7, ok, f"C_stab={c_stab:.6g} max_ratio={worst_ratio:.6g} roundtrip={roundtrip:.3g} pairs=200", t, 10)
    assert ok, "criterion 7 not met"


@pytest.mark.slow
def test_criterion_08_training_sanity():
    result, t = run_experiment(
        "end-to-end-poisson", d=1, N=2, p=8, q=2000, M=64, P=256, steps=5000,
        holdout=16, threshold=0.2, min_pass=7,
    )
    ok = report(8, result.accepted, summary_text(result), t, 15 * 60)
    assert ok, "criterion 8 not met"


@pytest.mark.slow
def test_criterion_09_gap_scaling():
    res_m, t_m = run_experiment("gap-vs-M", M_list=(8, 16, 32, 64, 128), P=4096, target=-0.5, band=0.3)
    res_p, t_p = run_experiment("gap-vs-P", P_list=(64, 256, 1024, 4096), M=64)
    slope = res_m.summary["slope"]
    ok = -0.8 <= slope <= -0.2 and res_p.summary["monotone_decreasing"] is True
    detail = f"{summary_text(res_m)} | {summary_text(res_p)}"
    ok = report(9, ok, detail, t_m + t_p, 60 * 60)
    assert ok, "criterion 9 not met"


@pytest.mark.slow
def test_criterion_10_branch_depth():
    result, t = run_experiment("branch-depth-study", q_list=(1000, 4000), lam_list=(1.0, 1.5, 2.0))
    s = result.summary
    wins = [q for q in (1000, 4000) if s[f"median_q{q}_lam2.0"] <= s[f"median_q{q}_lam1.0"]]
    ok = report(10, len(wins) >= 1, summary_text(result), t, 60 * 60)
    assert ok, "criterion 10 not met"
