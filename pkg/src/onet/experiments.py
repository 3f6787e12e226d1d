"""Registered experiments.  Each is a pure function of (parameters, seeds)."""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import nn
from .harness import ConfigError, Experiment, ExperimentResult, fit_rate, slopes_so_far
from .model import BRANCH_INITS, BranchRegime, build_deeponet, eval_model_jet
from .pde import OperatorSpec, solve_truth
from .spectral import (
    FieldEnsemble,
    FourierField,
    GridSample,
    encode_D,
    evaluate,
    lipschitz_const_P,
    multi_indices,
    norm_sq,
    project,
    reconstruct_P,
    sobolev_norm,
    sobolev_seminorm,
)
from .train import (
    BoundEnvelope,
    TrainConfig,
    TrainingDiverged,
    draw_samples,
    generalization_gap,
    midpoint_points,
    theoretical_envelope,
    train,
)
from .trunk import (
    assemble_vK,
    bump_net,
    cover_indices,
    h2_error,
    monomial_net,
    product_net,
    pu_normalized,
    pu_raw_sum,
    s_m,
    s_m_derivs,
    stack_trunk,
    trunk_basis,
)

REGISTRY: dict = {}


def register(name, description, defaults):
    def wrap(fn):
        REGISTRY[name] = Experiment(name, description, defaults, fn)
        return fn

    return wrap


def _within(x, center, half):
    return math.isfinite(x) and abs(x - center) <= half


# -- approximation-theory experiments ------------------------------------------


def decay_field(s: float, d: int, K: int) -> FourierField:
    """Deterministic field with |c_k| = (1 + |k|)^-(s + d/2 + 1/2)."""
    k = np.sqrt(norm_sq(K, d))
    return FourierField((1.0 + k) ** (-(s + d / 2 + 0.5)) + 0j)


@register(
    "spectral-rate",
    "H^s' error of the pseudo-spectral projection vs N",
    {"s": 4.0, "s_prime": 2.0, "d": 1, "K_f": 1024, "N_list": (4, 8, 16, 32, 64), "band": 0.4},
)
def spectral_rate(p, seeds):
    f = decay_field(p["s"], p["d"], p["K_f"])
    Ns = list(p["N_list"])
    errs = [sobolev_norm(f - project(f, N), p["s_prime"]) for N in Ns]
    running = slopes_so_far(Ns, errs)
    fit = fit_rate(list(zip(Ns, errs)))
    target = -(p["s"] - p["s_prime"])
    return ExperimentResult(
        ["N", "error", "slope_so_far"],
        [list(r) for r in zip(Ns, errs, running)],
        {"slope": fit.slope, "r_squared": fit.r_squared, "target": target},
        _within(fit.slope, target, p["band"]),
        ("N", "error"),
    )


def lipschitz_P_oracle(N: int, d: int, s_prime: float) -> float:
    """Direct loop over the grid modes."""
    total = 0.0
    for k in itertools.product(range(-N, N + 1), repeat=d):
        r2 = float(sum(v * v for v in k))
        total += r2**s_prime if r2 > 0 or s_prime == 0 else 0.0
    return math.sqrt(total / (2 * N + 1) ** d)


@register(
    "lipschitz-P",
    "Lipschitz constant of the reconstruction map in the H^s' seminorm",
    {"s_prime": 2.0, "d": 1, "N_list": (4, 8, 16, 32, 64), "n_probe": 20, "band": 0.2},
)
def lipschitz_P(p, seeds):
    Ns = list(p["N_list"])
    d, sp = p["d"], p["s_prime"]
    rng = np.random.default_rng(seeds[0])
    rows, exact = [], []
    ok_oracle, ok_bound = True, True
    for N in Ns:
        C = lipschitz_const_P(N, d, sp)
        oracle = lipschitz_P_oracle(N, d, sp)
        ratio = 0.0
        for _ in range(p["n_probe"]):
            g = rng.standard_normal((2 * N + 1,) * d)
            ratio = max(
                ratio, sobolev_seminorm(reconstruct_P(GridSample(d, N, g)), sp) / np.linalg.norm(g)
            )
        ok_oracle &= abs(C - oracle) <= 1e-12 * max(1.0, oracle)
        ok_bound &= ratio <= C * (1 + 1e-12)
        exact.append(C)
        rows.append([N, C, oracle, ratio])
    for row, sl in zip(rows, slopes_so_far(Ns, exact)):
        row.append(sl)
    fit = fit_rate(list(zip(Ns, exact)))
    return ExperimentResult(
        ["N", "C_exact", "C_oracle", "probe_ratio_max", "slope_so_far"],
        rows,
        {"slope": fit.slope, "target": sp, "oracle_match": ok_oracle, "probe_bound": ok_bound},
        ok_oracle and ok_bound and _within(fit.slope, sp, p["band"]),
        ("N", "C_exact"),
    )


@register(
    "pu-properties",
    "Bump sup and derivative bounds, raw-sum overlap, normalized partition",
    {"K_list": (1, 2, 4, 8), "grid": 20001, "slack": 1e-6},
)
def pu_properties(p, seeds):
    x = np.linspace(0.0, 1.0, p["grid"])
    rows, ok = [], True
    for K in p["K_list"]:
        sup = w1 = w2 = 0.0
        for m in range(1, K + 1):
            v, d1, d2 = s_m_derivs(x, K, m)
            sup = max(sup, float(np.abs(v).max()))
            w1 = max(w1, sup, float(np.abs(d1).max()))
            w2 = max(w2, w1, float(np.abs(d2).max()))
        raw_max = float(pu_raw_sum(x[:, None], K).max())
        total = sum(pu_normalized(x[:, None], K, (m,)) for m in range(1, K + 1))
        dev = float(np.abs(total - 1.0).max())
        slack = 1 + p["slack"]
        ok &= sup <= 1.0 and w1 <= 8 * K * slack and w2 <= 64 * K * K * slack and dev <= 1e-12
        rows.append([K, sup, w1, 8 * K, w2, 64 * K * K, raw_max, dev])
    counter = float(pu_raw_sum(np.array([[7 / 16]]), 2)[0])
    ok &= counter == 1.5
    return ExperimentResult(
        ["K", "sup", "w1inf", "w1inf_bound", "w2inf", "w2inf_bound", "raw_sum_max", "normalized_dev"],
        rows,
        {"raw_sum_at_K2_x7_16": counter},
        bool(ok),
    )


def _exact_rows(n_points, rng):
    rows = []
    X = rng.uniform(-1, 1, (n_points, 2))
    spec, theta = product_net()
    rows.append(["product", "x*y", n_points, float(np.abs(nn.forward_batch(spec, theta, X)[:, 0] - X[:, 0] * X[:, 1]).max())])
    for d in (1, 2):
        Y = rng.uniform(0, 1, (n_points, d))
        for alpha in multi_indices(4, d):
            if not any(alpha):
                continue
            spec, theta = monomial_net(alpha, d)
            err = np.abs(nn.forward_batch(spec, theta, Y)[:, 0] - np.prod(Y ** np.array(alpha), axis=1)).max()
            rows.append(["monomial", "x^" + "-".join(map(str, alpha)), n_points, float(err)])
        for K in (1, 2, 4):
            for m in cover_indices(K, d):
                spec, theta = bump_net(K, m, d)
                err = np.abs(nn.forward_batch(spec, theta, Y)[:, 0] - s_m(Y, K, m)).max()
                rows.append(["bump", f"K{K}-m" + "-".join(map(str, m)), n_points, float(err)])
        for K, n in ((2, 3), (3, 2)):
            elements = trunk_basis(K, n, d)
            spec, theta = stack_trunk(elements)
            out = nn.forward_batch(spec, theta, Y)
            target = np.stack([e.target(Y) for e in elements], axis=1)
            rows.append(["trunk", f"d{d}-K{K}-n{n}", n_points, float(np.abs(out - target).max())])
    return rows


@register(
    "trunk-exactness",
    "ReQU gadgets and trunk basis vs closed forms",
    {"n_points": 1000, "tol": 1e-11},
)
def trunk_exactness(p, seeds):
    rows = _exact_rows(p["n_points"], np.random.default_rng(seeds[0]))
    worst = max(r[3] for r in rows)
    return ExperimentResult(
        ["kind", "target", "n_points", "max_abs_err"],
        rows,
        {"max_abs_err": worst},
        worst <= p["tol"],
    )


class ExpFunction:
    """v(x) = exp(a * (x_1 + ... + x_d)) with all derivatives in closed form."""

    def __init__(self, a: float = 1.0):
        self.a = a

    def __call__(self, X) -> np.ndarray:
        return np.exp(self.a * np.atleast_2d(X).sum(axis=1))

    def derivative_values(self, beta, X) -> np.ndarray:
        return self.a ** sum(beta) * self(X)


def smooth_test_field(d: int) -> FourierField:
    if d == 1:
        return FourierField.from_modes(1, {(1,): 0.5, (2,): 0.25j})
    return FourierField.from_modes(d, {(1,) + (0,) * (d - 1): 0.5, (1,) * d: 0.25j})


@register(
    "local-approx-rate",
    "H^2 error of the local polynomial approximant vs K",
    {
        "n": 4,
        "d": 1,
        "K_list": (2, 4, 8, 16),
        "coeff_mode": "ls",
        "target_fn": "random",
        "field_s": 3.0,
        "field_K": 2,
        "band": 0.5,
        "min_r2": 0.9,
    },
)
def local_approx_rate(p, seeds):
    if p["target_fn"] == "random":
        v = FieldEnsemble(p["d"], p["field_s"], p["field_K"]).sample(seeds[0])
    elif p["target_fn"] == "exp":
        v = ExpFunction(1.0)
    elif p["target_fn"] == "fourier":
        v = smooth_test_field(p["d"])
    else:
        raise ConfigError("target_fn must be 'random', 'exp' or 'fourier'")
    Ks = list(p["K_list"])
    errs = [h2_error(assemble_vK(v, K, p["n"], p["coeff_mode"], d=p["d"]), v) for K in Ks]
    n_basis = len(multi_indices(p["n"] - 1, p["d"]))
    ps = [K ** p["d"] * n_basis for K in Ks]
    fit = fit_rate(list(zip(Ks, errs)))
    target = -(p["n"] - 2)
    rows = [list(r) for r in zip(Ks, ps, errs, slopes_so_far(Ks, errs))]
    return ExperimentResult(
        ["K", "p", "h2_error", "slope_so_far"],
        rows,
        {"slope": fit.slope, "r_squared": fit.r_squared, "target": target},
        _within(fit.slope, target, p["band"]) and fit.r_squared >= p["min_r2"],
        ("K", "h2_error"),
    )


# -- training experiments ------------------------------------------------------

TRAIN_DEFAULTS = {
    "d": 1,
    "N": 2,
    "p": 8,
    "trunk_n": 4,
    "q": 2000,
    "lam": 1.0,
    "base_width": 8,
    "base_depth": 1,
    "M": 64,
    "P": 256,
    "steps": 5000,
    "step_size": 3e-6,
    "momentum": 0.9,
    "B_clip": 100.0,
    "c": 1.0,
    "s": 3.0,
    "K_f": 2,
    "M_bound": math.inf,
    "branch_init": "identity",
}


def _ensemble(p):
    return FieldEnsemble(p["d"], p["s"], p["K_f"], p["M_bound"])


def _train_cfg(p, seed, **over):
    q = dict(p, **over)
    return TrainConfig(
        M=q["M"],
        P=q["P"],
        steps=q["steps"],
        step_size=q["step_size"],
        seed=seed,
        B_clip=q["B_clip"],
        operator=OperatorSpec(q["c"], q["d"]),
        ensemble=_ensemble(q),
        momentum=q["momentum"],
    )


def _model(p, seed, **over):
    q = dict(p, **over)
    regime = BranchRegime(q["lam"], q["q"], q["base_width"], q["base_depth"])
    if q["branch_init"] not in BRANCH_INITS:
        raise ConfigError(f"branch_init must be one of {BRANCH_INITS}")
    return build_deeponet(
        q["p"], q["N"], regime, "constructed", seed, d=q["d"], trunk_n=q["trunk_n"], branch_init=q["branch_init"]
    )


def _fit(p, seed, **over):
    """Train one model; a diverged run yields None."""
    model = _model(p, seed, **over)
    cfg = _train_cfg(p, seed, **over)
    try:
        return train(model, cfg), cfg
    except TrainingDiverged:
        return None, cfg


def relative_errors(model, fields, op, quad_res=256) -> tuple:
    """Relative H^1 and H^2 errors of G(f) against the true solution, per field.

    H^2 uses the Laplacian for the second-order part, which is the full
    second derivative in d = 1; in higher d it is reported as nan.
    """
    Y = midpoint_points(quad_res, model.d)
    h1, h2 = [], []
    for f in fields:
        u = solve_truth(f, op)
        jet = eval_model_jet(model, encode_D(f, model.N), Y)
        e0 = jet.value - evaluate(u, Y)
        grads = np.stack(
            [evaluate(u.derivative(tuple(int(i == j) for i in range(model.d))), Y) for j in range(model.d)],
            axis=1,
        )
        e1 = jet.gradient - grads
        e2 = jet.laplacian - evaluate(u.laplacian(), Y)
        u0, u2 = evaluate(u, Y), evaluate(u.laplacian(), Y)
        num1 = np.mean(e0**2) + np.mean(np.sum(e1**2, axis=1))
        den1 = np.mean(u0**2) + np.mean(np.sum(grads**2, axis=1))
        h1.append(math.sqrt(num1 / den1))
        if model.d == 1:
            h2.append(math.sqrt((num1 + np.mean(e2**2)) / (den1 + np.mean(u2**2))))
        else:
            h2.append(float("nan"))
    return np.array(h1), np.array(h2)


def _holdout_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 2]).generate_state(1)[0])


@register(
    "end-to-end-poisson",
    "Train on the residual loss, report relative H1/H2 error on held-out inputs",
    dict(TRAIN_DEFAULTS, holdout=16, threshold=0.2, min_pass=7),
)
def end_to_end(p, seeds):
    rows, passes = [], 0
    op = OperatorSpec(p["c"], p["d"])
    for seed in seeds:
        res, cfg = _fit(p, seed)
        if res is None:
            rows.append([seed, math.inf, math.inf, math.inf, False])
            continue
        fields = cfg.ensemble.sample_many(_holdout_seed(seed), p["holdout"])
        h1, h2 = relative_errors(res.model, fields, op)
        good = bool(h1.mean() < p["threshold"])
        passes += good
        rows.append([seed, res.trace[-1], float(h1.mean()), float(h2.mean()), good])
    return ExperimentResult(
        ["seed", "final_LS", "h1_rel_mean", "h2_rel_mean", "below_threshold"],
        rows,
        {"seeds_below_threshold": passes, "n_seeds": len(seeds)},
        passes >= p["min_pass"],
    )


@register(
    "branch-depth-study",
    "Trained L_S at fixed branch budget across depth regimes",
    dict(TRAIN_DEFAULTS, q_list=(1000, 4000), lam_list=(1.0, 1.5, 2.0)),
)
def branch_depth(p, seeds):
    rows, med = [], {}
    for q in p["q_list"]:
        for lam in p["lam_list"]:
            vals = []
            for seed in seeds:
                res, _ = _fit(p, seed, q=q, lam=lam)
                model = _model(p, seed, q=q, lam=lam)
                spec = model.branch_specs[0]
                loss = res.trace[-1] if res is not None else math.inf
                vals.append(loss)
                rows.append([q, lam, seed, spec.width, spec.depth, nn.count_params(spec), loss])
            med[(q, lam)] = float(np.median(vals))
    lo, hi = min(p["lam_list"]), max(p["lam_list"])
    wins = [q for q in p["q_list"] if med[(q, hi)] <= med[(q, lo)]]
    summary = {f"median_q{q}_lam{lam}": v for (q, lam), v in med.items()}
    summary["budgets_where_deep_not_worse"] = " ".join(map(str, wins)) or "none"
    return ExperimentResult(
        ["q", "lambda", "seed", "width", "depth", "branch_params", "final_LS"],
        rows,
        summary,
        len(wins) > 0,
    )


def _gap_rows(p, seeds, key, values, **fixed):
    rows, med = [], {}
    for v in values:
        gaps = []
        for seed in seeds:
            over = dict(fixed, **{key: v})
            res, cfg = _fit(p, seed, **over)
            if res is None:
                rows.append([v, seed, math.inf, math.inf, math.nan, math.nan, math.nan])
                gaps.append(math.nan)
                continue
            rep = generalization_gap(
                res.model, cfg, p["n_fresh"], samples=res.samples, quad_res=p["quad_res"]
            )
            mask = res.model.trainable_mask()
            env = theoretical_envelope(
                BoundEnvelope(p["kappa"], 1.0, p["B_clip"], int(mask.sum())), cfg.M, cfg.P
            )
            gaps.append(rep.gap)
            rows.append([v, seed, rep.L_S_val, rep.L_D_est, rep.gap, rep.stderr, env])
        med[v] = float(np.nanmedian(gaps))
    return rows, med


GAP_DEFAULTS = dict(TRAIN_DEFAULTS, n_fresh=256, quad_res=256, kappa=1.0)


@register(
    "gap-vs-M",
    "Generalization gap vs number of input functions at fixed P",
    dict(GAP_DEFAULTS, M_list=(8, 16, 32, 64, 128), P=4096, target=-0.5, band=0.3),
)
def gap_vs_M(p, seeds):
    Ms = list(p["M_list"])
    rows, med = _gap_rows(p, seeds, "M", Ms)
    pos = [(m, med[m]) for m in Ms if med[m] > 0]
    slope = fit_rate(pos).slope if len(pos) >= 2 else math.nan
    d_theta = int(_model(p, seeds[0]).trainable_mask().sum())
    env = [theoretical_envelope(BoundEnvelope(p["kappa"], 1.0, p["B_clip"], d_theta), m, p["P"]) for m in Ms]
    summary = {f"median_gap_M{m}": med[m] for m in Ms}
    summary.update(slope=slope, target=p["target"], envelope_slope=fit_rate(list(zip(Ms, env))).slope)
    return ExperimentResult(
        ["M", "seed", "L_S", "L_D", "gap", "stderr", "envelope"],
        rows,
        summary,
        len(pos) == len(Ms) and _within(slope, p["target"], p["band"]),
        ("M", "gap"),
    )


@register(
    "gap-vs-P",
    "Generalization gap vs number of collocation points at fixed M",
    dict(GAP_DEFAULTS, P_list=(64, 256, 1024, 4096), M=64),
)
def gap_vs_P(p, seeds):
    Ps = list(p["P_list"])
    rows, med = _gap_rows(p, seeds, "P", Ps)
    meds = [med[v] for v in Ps]
    monotone = all(b < a for a, b in zip(meds, meds[1:]))
    summary = {f"median_gap_P{v}": med[v] for v in Ps}
    summary["monotone_decreasing"] = monotone
    return ExperimentResult(
        ["P", "seed", "L_S", "L_D", "gap", "stderr", "envelope"],
        rows,
        summary,
        monotone,
        ("P", "gap"),
    )


FAST_EXPERIMENTS = ("spectral-rate", "lipschitz-P", "pu-properties", "trunk-exactness", "local-approx-rate")
