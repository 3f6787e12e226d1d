"""Sobolev (PDE-residual) losses, the clipped gradient-descent trainer and
the generalization-gap estimator.

The residual of a model at (f, y) is L G(f)(y) - f(y) with L = -Laplacian + c
applied to the trunk analytically through its 2-jet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .model import DeepONetModel
from .pde import OperatorSpec
from .spectral import FieldEnsemble, FourierField, encode_D, evaluate


class TrainingDiverged(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TrainConfig:
    M: int = 64
    P: int = 256
    steps: int = 1000
    step_size: float = 1e-3
    seed: int = 0
    B_clip: float = 100.0
    operator: OperatorSpec = field(default_factory=OperatorSpec)
    ensemble: FieldEnsemble = field(default_factory=FieldEnsemble)
    momentum: float = 0.0

    def __post_init__(self):
        if min(self.M, self.P, self.steps) < 1:
            raise ValueError("M, P and steps must be at least 1")
        if not self.step_size > 0 or not self.B_clip > 0:
            raise ValueError("step_size and B_clip must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class SampleSet:
    """Training inputs: fields, their grid encodings (M, m), points (P, d), f values (M, P)."""

    fields: list
    Z: np.ndarray
    ys: np.ndarray
    F: np.ndarray


def make_samples(fields, ys, N: int) -> SampleSet:
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[1] != fields[0].d:
        ys = ys.reshape(-1, fields[0].d)
    Z = np.stack([encode_D(f, N).flat() for f in fields])
    F = np.stack([evaluate(f, ys) for f in fields])
    return SampleSet(list(fields), Z, ys, F)


def draw_samples(cfg: TrainConfig, N: int) -> SampleSet:
    """M ensemble draws and P uniform points in [0,1]^d, both from cfg.seed."""
    s_fields, s_points = np.random.SeedSequence(cfg.seed).spawn(2)
    fields = cfg.ensemble.sample_many(int(s_fields.generate_state(1)[0]), cfg.M)
    ys = np.random.default_rng(s_points).random((cfg.P, cfg.ensemble.d))
    return make_samples(fields, ys, N)


def _as_samples(model: DeepONetModel, fs, ys) -> SampleSet:
    if isinstance(fs, SampleSet):
        return fs
    fs = [f[1] if isinstance(f, tuple) else f for f in fs]
    return make_samples(fs, ys, model.N)


def _L_trunk(model: DeepONetModel, ys: np.ndarray, op: OperatorSpec):
    """Trunk values T (P,p) and L T = -Laplacian T + c T (P,p)."""
    tv, _, tl = model.trunk_jet(ys)
    return tv, op.c * tv - tl


def residuals(model: DeepONetModel, fs, ys=None, op: Optional[OperatorSpec] = None) -> np.ndarray:
    """R[i, j] = L G(f_i)(y_j) - f_i(y_j)."""
    op = op or OperatorSpec(d=model.d)
    S = _as_samples(model, fs, ys)
    _, LT = _L_trunk(model, S.ys, op)
    return model.branch_outputs(S.Z) @ LT.T - S.F


def loss_LS(model: DeepONetModel, fs, ys=None, op: Optional[OperatorSpec] = None) -> float:
    """Mean squared PDE residual over the M x P sample pairs."""
    R = residuals(model, fs, ys, op)
    return float(np.mean(R * R))


def midpoint_points(quad_res: int, d: int) -> np.ndarray:
    ax = (np.arange(quad_res) + 0.5) / quad_res
    return np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)


def _per_field_integral(model, fields, quad_res, op) -> np.ndarray:
    S = make_samples(fields, midpoint_points(quad_res, model.d), model.N)
    _, LT = _L_trunk(model, S.ys, op)
    R = model.branch_outputs(S.Z) @ LT.T - S.F
    return np.mean(R * R, axis=1)


def loss_LM(model: DeepONetModel, fs, quad_res: int = 256, op: Optional[OperatorSpec] = None) -> float:
    """Mean over fields of the squared residual integrated over [0,1]^d (midpoint rule)."""
    op = op or OperatorSpec(d=model.d)
    fields = fs.fields if isinstance(fs, SampleSet) else [f[1] if isinstance(f, tuple) else f for f in fs]
    return float(np.mean(_per_field_integral(model, fields, quad_res, op)))


def loss_LD(
    model: DeepONetModel,
    n_fresh: int,
    quad_res: int,
    seed: int,
    ensemble: Optional[FieldEnsemble] = None,
    op: Optional[OperatorSpec] = None,
) -> tuple:
    """(mean, standard error) of the population loss from n_fresh fresh draws."""
    if n_fresh < 1:
        raise ValueError("n_fresh must be at least 1")
    ensemble = ensemble or FieldEnsemble(d=model.d)
    op = op or OperatorSpec(d=model.d)
    vals = _per_field_integral(model, ensemble.sample_many(seed, n_fresh), quad_res, op)
    se = float(np.std(vals, ddof=1) / math.sqrt(n_fresh)) if n_fresh > 1 else float("nan")
    return float(np.mean(vals)), se


def loss_and_grad(model: DeepONetModel, S: SampleSet, op: OperatorSpec, trunk_cache=None) -> tuple:
    """loss_LS and its gradient over the full parameter vector (zeros on frozen parts)."""
    if trunk_cache is None:
        trunk_cache = _L_trunk(model, S.ys, op)
    _, LT = trunk_cache
    B = model.branch_outputs(S.Z)
    R = B @ LT.T - S.F
    Mn, Pn = R.shape
    loss = float(np.mean(R * R))
    scale = 2.0 / (Mn * Pn)
    grad = np.zeros(model.d_theta)
    dB = scale * (R @ LT)
    col = 0
    for spec, sl in zip(model.branch_specs, model.branch_slices):
        k = spec.output_dim
        grad[sl] = nn.backprop_batch(spec, model.theta[sl], S.Z, dB[:, col : col + k])
        col += k
    if model.trunk_mode != "constructed":
        dLT = scale * (R.T @ B)
        sl = model.trunk_slice
        grad[sl] = nn.backprop_batch(
            model.trunk_spec, model.theta[sl], S.ys, op.c * dLT, cot_lap=-dLT
        )
    return loss, grad


@dataclass
class TrainResult:
    model: DeepONetModel
    trace: list
    samples: SampleSet


def train(model: DeepONetModel, cfg: TrainConfig, samples: Optional[SampleSet] = None) -> TrainResult:
    """Full-batch gradient descent on loss_LS with clipping to [-B_clip, B_clip].

    trace[t] is the loss before step t; the final entry is the loss after
    the last step, so len(trace) == steps + 1.
    """
    S = samples if samples is not None else draw_samples(cfg, model.N)
    op = cfg.operator
    mask = model.trainable_mask()
    theta = model.theta.copy()
    velocity = np.zeros_like(theta)
    cache = _L_trunk(model, S.ys, op) if model.trunk_mode == "constructed" else None
    trace = []
    current = model
    for step in range(cfg.steps + 1):
        loss, grad = loss_and_grad(current, S, op, cache)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDiverged(f"non-finite loss at step {step}", trace)
        trace.append(loss)
        if step == cfg.steps:
            break
        velocity = cfg.momentum * velocity - cfg.step_size * grad
        theta[mask] = np.clip(theta[mask] + velocity[mask], -cfg.B_clip, cfg.B_clip)
        current = current.with_theta(theta)
    return TrainResult(current, trace, S)


# -- generalization ----------------------------------------------------------


@dataclass(frozen=True)
class GapReport:
    L_S_val: float
    L_D_est: float
    gap: float
    stderr: float


def generalization_gap(
    model: DeepONetModel,
    cfg: TrainConfig,
    n_fresh: int,
    samples: Optional[SampleSet] = None,
    quad_res: int = 256,
    seed: Optional[int] = None,
) -> GapReport:
    """L_D (fresh draws) minus L_S (training sample) at the given parameters.

    The fresh draws use a seed stream disjoint from the training sample.
    The standard error is that of the L_D estimate; L_S is exact.
    """
    S = samples if samples is not None else draw_samples(cfg, model.N)
    ls = loss_LS(model, S, op=cfg.operator)
    fresh_seed = seed if seed is not None else int(
        np.random.SeedSequence([cfg.seed, 1]).generate_state(1)[0]
    )
    ld, se = loss_LD(model, n_fresh, quad_res, fresh_seed, cfg.ensemble, cfg.operator)
    return GapReport(ls, ld, ld - ls, se)


@dataclass(frozen=True)
class BoundEnvelope:
    kappa: float
    C_env: float
    B: float
    d_theta: int

    def __post_init__(self):
        if not (self.kappa >= 0 and self.C_env > 0 and self.B > 0 and self.d_theta > 0):
            raise ValueError("envelope parameters must be positive")


def theoretical_envelope(env: BoundEnvelope, M: float, P: float) -> float:
    """C[(1 + d log(B sqrt M))^(2 kappa + 1/2) / sqrt M + d sqrt(log P) / sqrt P]."""
    if env.B * math.sqrt(M) <= 1.0:
        raise ValueError("out of regime: B * sqrt(M) must exceed 1")
    if P <= 1:
        raise ValueError("out of regime: P must exceed 1")
    first = (1.0 + env.d_theta * math.log(env.B * math.sqrt(M))) ** (2 * env.kappa + 0.5) / math.sqrt(M)
    second = env.d_theta * math.sqrt(math.log(P)) / math.sqrt(P)
    return env.C_env * (first + second)


def trace_to_csv(trace) -> str:
    lines = ["step,value,stderr"] + [f"{i},{v!r}," for i, v in enumerate(map(float, trace))]
    return "\n".join(lines) + "\n"


def gaps_to_csv(reports) -> str:
    lines = ["trial,value,stderr"] + [
        f"{i},{float(r.gap)!r},{float(r.stderr)!r}" for i, r in enumerate(reports)
    ]
    return "\n".join(lines) + "\n"
