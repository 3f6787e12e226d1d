import math

import numpy as np
import pytest

from conftest import central_diff
from onet import nn
from onet.model import BranchRegime, DeepONetModel, build_deeponet, eval_model_jet
from onet.nn import SIGMA1, SIGMA2, NetworkSpec
from onet.pde import OperatorSpec
from onet.spectral import FieldEnsemble, FourierField, encode_D
from onet.train import (
    BoundEnvelope,
    TrainConfig,
    TrainingDiverged,
    draw_samples,
    generalization_gap,
    gaps_to_csv,
    loss_and_grad,
    loss_LD,
    loss_LM,
    loss_LS,
    make_samples,
    residuals,
    theoretical_envelope,
    trace_to_csv,
    train,
)

ENS = FieldEnsemble(1, 3.0, 2)


def small_model(mode="trainable", seed=0, scale=0.3, **kw):
    model = build_deeponet(4, 1, BranchRegime(1.0, 120), trunk_mode=mode, seed=seed,
                           trunk_n=kw.pop("trunk_n", 4) if mode == "constructed" else 4,
                           trunk_width=6, trunk_depth=1, branch_init="uniform-he", **kw)
    rng = np.random.default_rng(seed + 100)
    return model.with_theta(model.theta + scale * rng.standard_normal(model.d_theta))


def affine_branch_model(c_trunk_bias=1.0):
    """p=1, N=1: affine branch (no hidden layer) and a constant trunk."""
    bspec = NetworkSpec(3, (), 1)
    tspec = NetworkSpec(1, ((1, SIGMA2),), 1)
    ttheta = nn.pack(tspec, [(np.zeros((1, 1)), np.zeros(1)), (np.zeros((1, 1)), np.array([c_trunk_bias]))])
    return DeepONetModel(1, 1, 1, [bspec], tspec, "constructed", np.concatenate([np.zeros(4), ttheta]))


def test_zero_model_on_unit_field():
    model = build_deeponet(8, 2, BranchRegime(1.0, 300))
    f = FourierField.constant(1.0)
    assert loss_LS(model, [f], np.linspace(0, 1, 9)) == 1.0
    assert loss_LM(model, [f], 16) == 1.0


def test_exact_solution_has_zero_loss():
    # positive constant fields a: u = a / c; branch relu(sum z) / (c m) times trunk 1
    c = 2.5
    op = OperatorSpec(c)
    model = affine_branch_model()
    bspec = NetworkSpec(3, ((1, SIGMA1),), 1)
    btheta = nn.pack(bspec, [(np.ones((1, 3)), np.zeros(1)), (np.array([[1 / (3 * c)]]), np.zeros(1))])
    model = DeepONetModel(1, 1, 1, [bspec], model.trunk_spec, "constructed",
                          np.concatenate([btheta, model.theta[4:]]))
    fields = [FourierField.constant(a) for a in (0.5, 1.0, 3.0)]
    assert loss_LS(model, fields, np.random.default_rng(0).random(50), op) <= 1e-20


def test_residuals_vs_double_loop():
    model = small_model(seed=1)
    op = OperatorSpec(1.7)
    fields = ENS.sample_many(3, 4)
    ys = np.random.default_rng(2).random(6)
    R = residuals(model, fields, ys, op)
    for i, f in enumerate(fields):
        g = encode_D(f, model.N)
        for j, y in enumerate(ys):
            jet = eval_model_jet(model, g, y)
            ref = -jet.laplacian + op.c * jet.value - f(np.array([y]))
            assert abs(R[i, j] - ref) <= 1e-10 * max(1.0, abs(ref))


def test_loss_permutation_invariant():
    model = small_model(seed=2)
    fields = ENS.sample_many(4, 6)
    ys = np.random.default_rng(3).random(10)
    a = loss_LS(model, fields, ys)
    b = loss_LS(model, fields[::-1], ys[::-1])
    assert a == pytest.approx(b, rel=1e-13)


@pytest.mark.parametrize("mode", ["trainable", "constructed"])
def test_gradient_vs_finite_differences(mode):
    model = small_model(mode, seed=3)
    op = OperatorSpec(1.3)
    S = make_samples(ENS.sample_many(5, 5), np.random.default_rng(4).random(12), model.N)
    loss, grad = loss_and_grad(model, S, op)
    assert loss == pytest.approx(loss_LS(model, S, op=op), rel=1e-14)
    fd = central_diff(lambda th: loss_LS(model.with_theta(th), S, op=op), model.theta, 1e-6)
    mask = model.trainable_mask()
    assert np.all(grad[~mask] == 0)
    scale = max(1.0, np.abs(fd[mask]).max())
    assert np.abs(grad[mask] - fd[mask]).max() <= 1e-4 * scale


def test_loss_LM_matches_dense_sampling():
    model = small_model(seed=4)
    fields = ENS.sample_many(6, 4)
    lm = loss_LM(model, fields, 1024)
    ls = loss_LS(model, fields, np.random.default_rng(5).random(100_000))
    assert ls == pytest.approx(lm, rel=0.01)
    # midpoint rule: halving the resolution roughly quadruples the error
    coarse = abs(loss_LM(model, fields, 256) - lm)
    fine = abs(loss_LM(model, fields, 512) - lm)
    assert fine < 0.5 * coarse and fine <= 1e-3 * lm


def test_loss_LD_zero_model_and_single_draw():
    model = build_deeponet(8, 2, BranchRegime(1.0, 300))
    mean, se = loss_LD(model, 400, 128, seed=7, ensemble=ENS)
    assert abs(mean - ENS.second_moment(0.0)) <= 3 * se
    trained = small_model(seed=5)
    one, se1 = loss_LD(trained, 1, 64, seed=8, ensemble=ENS)
    assert math.isnan(se1)
    assert one == pytest.approx(loss_LM(trained, ENS.sample_many(8, 1), 64), rel=1e-14)
    with pytest.raises(ValueError):
        loss_LD(trained, 0, 64, seed=0)


def test_quadratic_problem_reaches_least_squares_optimum():
    # affine branch and frozen trunk: the loss is a convex quadratic in theta
    op = OperatorSpec(1.0)
    ens = FieldEnsemble(1, 0.5, 1)
    model = affine_branch_model()
    S = draw_samples(TrainConfig(M=16, P=8, ensemble=ens), model.N)
    A = np.kron(np.hstack([S.Z, np.ones((16, 1))]), op.c * np.ones((8, 1)))
    sol, *_ = np.linalg.lstsq(A, S.F.ravel(), rcond=None)
    best = float(np.mean((A @ sol - S.F.ravel()) ** 2))
    lo, hi = np.linalg.eigvalsh(2.0 / A.shape[0] * A.T @ A)[[0, -1]]
    # heavy-ball parameters for a quadratic with spectrum in [lo, hi]
    step = 4.0 / (math.sqrt(hi) + math.sqrt(lo)) ** 2
    mom = ((math.sqrt(hi / lo) - 1) / (math.sqrt(hi / lo) + 1)) ** 2
    steps = int(30 * math.sqrt(hi / lo)) + 100
    cfg = TrainConfig(M=16, P=8, steps=steps, step_size=step, momentum=mom,
                      operator=op, ensemble=ens, B_clip=1e6)
    res = train(model, cfg, S)
    assert res.trace[-1] - best <= 1e-6 * res.trace[0]
    assert np.allclose(res.model.theta[:4], sol, rtol=1e-4, atol=1e-6 * np.abs(sol).max())


def test_training_descends_and_trace_length():
    model = build_deeponet(8, 2, BranchRegime(1.0, 300))
    cfg = TrainConfig(M=16, P=64, steps=200, step_size=3e-6, momentum=0.9, ensemble=ENS)
    res = train(model, cfg)
    assert len(res.trace) == 201
    assert res.trace[-1] < 0.5 * res.trace[0]
    assert res.trace[-1] == pytest.approx(loss_LS(res.model, res.samples, op=cfg.operator), rel=1e-12)


def test_clipping_bounds_parameters():
    model = small_model(seed=6)
    cfg = TrainConfig(M=4, P=16, steps=30, step_size=1e-2, B_clip=0.05, ensemble=ENS)
    res = train(model, cfg)
    assert np.abs(res.model.theta).max() <= 0.05


def test_divergence_aborts_with_trace():
    model = small_model(seed=7, scale=1.0)
    cfg = TrainConfig(M=4, P=16, steps=500, step_size=1e3, B_clip=1e300, ensemble=ENS)
    with np.errstate(all="ignore"), pytest.raises(TrainingDiverged) as info:
        train(model, cfg)
    assert len(info.value.trace) >= 1


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(M=0)
    with pytest.raises(ValueError):
        TrainConfig(step_size=0.0)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)


def test_untrained_model_has_small_gap():
    model = small_model(seed=8, scale=0.0)
    cfg = TrainConfig(M=256, P=1024, steps=1, ensemble=ENS)
    rep = generalization_gap(model, cfg, n_fresh=256, quad_res=256)
    per_field = residuals(model, draw_samples(cfg, model.N), op=cfg.operator)
    spread = np.mean(per_field**2, axis=1).std() / math.sqrt(cfg.M)
    assert abs(rep.gap) <= 4 * math.hypot(rep.stderr, spread)
    assert rep.gap == pytest.approx(rep.L_D_est - rep.L_S_val, abs=0)


def test_envelope_examples():
    env = BoundEnvelope(kappa=1.0, C_env=1.0, B=1.0, d_theta=10)
    M, P = math.e**2, math.e**2
    expected = (1 + 10) ** 2.5 / math.e + 10 * math.sqrt(2) / math.e
    assert theoretical_envelope(env, M, P) == pytest.approx(expected, rel=1e-14)
    env0 = BoundEnvelope(kappa=0.0, C_env=2.0, B=1.0, d_theta=1)
    assert theoretical_envelope(env0, math.e**2, math.e) == pytest.approx(
        2 * (math.sqrt(2) / math.e + 1 / math.sqrt(math.e)), rel=1e-14
    )


def test_envelope_monotone_and_regime():
    env = BoundEnvelope(kappa=0.0, C_env=1.0, B=2.0, d_theta=10)
    Ms = [8, 16, 32, 64, 128, 1024]
    vals = [theoretical_envelope(env, M, 4096) for M in Ms]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    Ps = [4, 64, 256, 1024, 4096]
    vals = [theoretical_envelope(env, 64, P) for P in Ps]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        theoretical_envelope(BoundEnvelope(1.0, 1.0, 0.1, 10), 4, 100)
    with pytest.raises(ValueError):
        theoretical_envelope(env, 64, 1)
    with pytest.raises(ValueError):
        BoundEnvelope(-1.0, 1.0, 1.0, 10)


def test_csv_writers():
    assert trace_to_csv([1.0, 0.5]).splitlines() == ["step,value,stderr", "0,1.0,", "1,0.5,"]
    from onet.train import GapReport

    text = gaps_to_csv([GapReport(1.0, 1.5, 0.5, 0.1)])
    assert text.splitlines()[1] == "0,0.5,0.1"


def test_loss_LM_refinement_for_band_limited_residual():
    # the zero model leaves the residual -f, a trigonometric polynomial
    model = build_deeponet(8, 2, BranchRegime(1.0, 300))
    fields = ENS.sample_many(9, 5)
    a, b = loss_LM(model, fields, 32), loss_LM(model, fields, 64)
    assert abs(a - b) <= 1e-4 * b


def test_loss_LD_deterministic():
    model = small_model(seed=10)
    assert loss_LD(model, 8, 32, seed=4, ensemble=ENS) == loss_LD(model, 8, 32, seed=4, ensemble=ENS)
