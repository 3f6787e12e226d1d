"""DeepONet: G(f)(y) = sum_k branch_k(D f) * trunk_k(y).

The branch consumes the raw grid samples D(f) (no derivative features).
It is either one ReLU network with p outputs (shared torso, the default)
or p scalar ReLU networks.  The trunk is one ReQU network with p outputs,
either the frozen constructive basis y^alpha s_m(y) or a trainable MLP.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import nn
from .nn import SIGMA1, SIGMA2, Jet2, NetworkSpec
from .spectral import GridSample, multi_indices
from .trunk import stack_trunk, trunk_basis

TRUNK_MODES = ("constructed", "trainable")
BRANCH_INITS = ("identity", "zero-readout", "uniform-he")


@dataclass(frozen=True)
class BranchRegime:
    """Branch shape at a parameter budget q; lam=1 shallow/wide, lam=2 deep/narrow."""

    lam: float = 1.0
    q: int = 1000
    base_width: int = 8
    base_depth: int = 1

    def __post_init__(self):
        if not 1.0 <= self.lam <= 2.0:
            raise ValueError(f"lambda must lie in [1, 2], got {self.lam}")
        if self.q < 1 or self.base_width < 1 or self.base_depth < 1:
            raise ValueError("q, base_width and base_depth must be positive")


def regime_shapes(q: int, lam: float, W0: int, L0: int, in_dim: int = 1, out_dim: int = 1) -> tuple:
    """(width, depth) of a budget-q ReLU branch in regime lam.

    Width follows q^((2-lam)/2) (floored at W0).  The depth is then the
    one whose parameter count lies closest to q, which realizes
    depth ~ q^(lam-1) since parameters ~ width^2 * depth; it is floored at L0.
    """
    if not 1.0 <= lam <= 2.0:
        raise ValueError(f"lambda must lie in [1, 2], got {lam}")
    width = max(W0, int(round(q ** ((2.0 - lam) / 2.0))))
    fixed = (in_dim + 1) * width + (width + 1) * out_dim
    depth = 1 + (q - fixed) / (width * width + width)
    return width, max(L0, int(round(depth)), 1)


def branch_spec(regime: BranchRegime, in_dim: int, out_dim: int, activation=SIGMA1) -> NetworkSpec:
    width, depth = regime_shapes(
        regime.q, regime.lam, regime.base_width, regime.base_depth, in_dim, out_dim
    )
    return NetworkSpec.mlp(in_dim, width, depth, out_dim, activation)


@dataclass
class DeepONetModel:
    p: int
    N: int
    d: int
    branch_specs: list
    trunk_spec: NetworkSpec
    trunk_mode: str
    theta: np.ndarray
    regime: Optional[BranchRegime] = None
    trunk_info: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return (2 * self.N + 1) ** self.d

    @property
    def shared_branch(self) -> bool:
        return len(self.branch_specs) == 1

    def _slices(self) -> list:
        out, pos = [], 0
        for spec in self.branch_specs + [self.trunk_spec]:
            n = nn.count_params(spec)
            out.append(slice(pos, pos + n))
            pos += n
        return out

    @property
    def branch_slices(self) -> list:
        return self._slices()[:-1]

    @property
    def trunk_slice(self) -> slice:
        return self._slices()[-1]

    @property
    def d_theta(self) -> int:
        return self.theta.size

    def trainable_mask(self) -> np.ndarray:
        mask = np.ones(self.d_theta, dtype=bool)
        if self.trunk_mode == "constructed":
            mask[self.trunk_slice] = False
        return mask

    def with_theta(self, theta: np.ndarray) -> "DeepONetModel":
        return replace(self, theta=np.asarray(theta, dtype=float).copy())

    def branch_outputs(self, Z: np.ndarray) -> np.ndarray:
        """Branch values (M, p) for grid data Z of shape (M, m)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.m:
            raise ValueError(f"branch input has {Z.shape[1]} values, expected m={self.m}")
        outs = [
            nn.forward_batch(spec, self.theta[sl], Z)
            for spec, sl in zip(self.branch_specs, self.branch_slices)
        ]
        return np.hstack(outs)

    def trunk_values(self, Y: np.ndarray) -> np.ndarray:
        return nn.forward_batch(self.trunk_spec, self.theta[self.trunk_slice], Y)

    def trunk_jet(self, Y: np.ndarray):
        """(value (P,p), grad (P,p,d), laplacian (P,p)) of the trunk."""
        return nn.jet_batch(self.trunk_spec, self.theta[self.trunk_slice], Y)


def _grid_batch(model: DeepONetModel, g) -> tuple:
    if isinstance(g, GridSample):
        return g.flat()[None, :], True
    Z = np.asarray(g, dtype=float)
    if Z.ndim == 1:
        return Z[None, :], True
    if isinstance(g, (list, tuple)) and g and isinstance(g[0], GridSample):
        return np.stack([x.flat() for x in g]), False
    return Z, False


def _point_batch(model: DeepONetModel, y) -> tuple:
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 0:
        Y = Y.reshape(1)
    if Y.ndim == 1:
        if Y.shape[0] == model.d:
            return Y[None, :], True
        if model.d == 1:
            return Y[:, None], False
    if Y.ndim != 2 or Y.shape[1] != model.d:
        raise ValueError(f"query points have shape {Y.shape}, expected (..., {model.d})")
    return Y, False


def _squeeze(arr, single_g, single_y):
    if single_g:
        arr = arr[0]
        if single_y:
            arr = arr[0]
    elif single_y:
        arr = arr[:, 0]
    if isinstance(arr, np.ndarray) and arr.ndim == 0:
        return float(arr)
    return arr


def eval_model(model: DeepONetModel, g, y):
    """G(f)(y) from grid data g and query point(s) y; shape (M, P) for batches."""
    Z, sg = _grid_batch(model, g)
    Y, sy = _point_batch(model, y)
    G = model.branch_outputs(Z) @ model.trunk_values(Y).T
    return _squeeze(G, sg, sy)


def eval_model_jet(model: DeepONetModel, g, y) -> Jet2:
    """Jet of y -> G(f)(y); the branch contributes constant coefficients."""
    Z, sg = _grid_batch(model, g)
    Y, sy = _point_batch(model, y)
    B = model.branch_outputs(Z)
    tv, tg, tl = model.trunk_jet(Y)
    value = B @ tv.T
    grad = np.einsum("mk,pkd->mpd", B, tg)
    lap = B @ tl.T
    return Jet2(
        value=_squeeze(value, sg, sy),
        gradient=_squeeze(grad, sg, sy),
        laplacian=_squeeze(lap, sg, sy),
    )


def _constructed_trunk(p: int, d: int, n: int) -> tuple:
    per_box = len(multi_indices(n - 1, d))
    if p % per_box:
        raise ValueError(f"p={p} is not a multiple of the {per_box} monomials of degree < {n}")
    K = round((p // per_box) ** (1.0 / d))
    if K < 1 or K**d * per_box != p:
        raise ValueError(f"p={p} does not factor as K^d * {per_box} for d={d}")
    spec, theta = stack_trunk(trunk_basis(K, n, d))
    return spec, theta, {"K": K, "n": n}


def build_deeponet(
    p: int,
    N: int,
    regime: BranchRegime,
    trunk_mode: str = "constructed",
    seed: int = 0,
    d: int = 1,
    trunk_n: int = 4,
    trunk_width: int = 16,
    trunk_depth: int = 2,
    shared_branch: bool = True,
    branch_activation: str = SIGMA1,
    branch_init: str = "identity",
) -> DeepONetModel:
    """Assemble a DeepONet with m = (2N+1)^d branch inputs and p branch-trunk pairs.

    Branch weights are uniform-he; with ``branch_init="zero-readout"`` the
    last affine map of every branch starts at zero, so the untrained model
    is G = 0 and the first loss equals the mean of f^2.  ``identity`` also
    sets every square hidden-to-hidden map to the identity, which keeps deep
    narrow ReLU branches from collapsing at initialization.
    """
    if p < 1:
        raise ValueError("p must be positive")
    if N < 0:
        raise ValueError("N must be nonnegative")
    if trunk_mode not in TRUNK_MODES:
        raise ValueError(f"trunk_mode must be one of {TRUNK_MODES}")
    if branch_init not in BRANCH_INITS:
        raise ValueError(f"branch_init must be one of {BRANCH_INITS}")
    m = (2 * N + 1) ** d
    seeds = np.random.SeedSequence(seed).generate_state(p + 1, dtype=np.uint64)
    if shared_branch:
        specs = [branch_spec(regime, m, p, branch_activation)]
    else:
        specs = [branch_spec(regime, m, 1, branch_activation) for _ in range(p)]
    parts = [nn.init_params(s, int(sd)) for s, sd in zip(specs, seeds)]
    if branch_init != "uniform-he":
        for spec, theta in zip(specs, parts):
            layers = nn.unpack(spec, theta)
            layers[-1][0][...] = 0.0
            if branch_init == "identity":
                for W, _ in layers[1:-1]:
                    if W.shape[0] == W.shape[1]:
                        W[...] = np.eye(W.shape[0])
    if trunk_mode == "constructed":
        tspec, ttheta, info = _constructed_trunk(p, d, trunk_n)
    else:
        tspec = NetworkSpec.mlp(d, trunk_width, trunk_depth, p, SIGMA2)
        ttheta = nn.init_params(tspec, int(seeds[-1]))
        info = {"width": trunk_width, "depth": trunk_depth}
    return DeepONetModel(
        p=p,
        N=N,
        d=d,
        branch_specs=specs,
        trunk_spec=tspec,
        trunk_mode=trunk_mode,
        theta=np.concatenate(parts + [ttheta]),
        regime=regime,
        trunk_info=info,
    )


def classical_preset(m: int, q_branch: int, p: int, seed: int = 0, d: int = 1) -> DeepONetModel:
    """Shallow DeepONet: per-k one-hidden-layer ReLU branches, one ReLU trunk neuron per k.

    The trunk is a single hidden layer of p ReLU neurons followed by an
    identity read-out, i.e. trunk_k(y) = relu(w_k . y + zeta_k).
    """
    if p < 1 or q_branch < 1:
        raise ValueError("p and q_branch must be positive")
    side = round(m ** (1.0 / d))
    if side**d != m or side % 2 == 0:
        raise ValueError(f"m={m} is not (2N+1)^{d}")
    N = (side - 1) // 2
    seeds = np.random.SeedSequence(seed).generate_state(p + 1, dtype=np.uint64)
    specs = [NetworkSpec(m, ((q_branch, SIGMA1),), 1) for _ in range(p)]
    parts = [nn.init_params(s, int(sd)) for s, sd in zip(specs, seeds)]
    tspec = NetworkSpec(d, ((p, SIGMA1),), p)
    rng = np.random.default_rng(int(seeds[-1]))
    ttheta = nn.pack(
        tspec,
        [(rng.uniform(-1, 1, (p, d)), rng.uniform(-1, 1, p)), (np.eye(p), np.zeros(p))],
    )
    return DeepONetModel(
        p=p,
        N=N,
        d=d,
        branch_specs=specs,
        trunk_spec=tspec,
        trunk_mode="trainable",
        theta=np.concatenate(parts + [ttheta]),
        regime=BranchRegime(1.0, q_branch * (m + 2) + 1, q_branch, 1),
        trunk_info={"classical": True},
    )


# -- checkpoints -------------------------------------------------------------


def _spec_line(spec: NetworkSpec) -> str:
    layers = ",".join(f"{w}:{a}" for w, a in spec.layers)
    return f"{spec.input_dim} [{layers}] {spec.output_dim}"


def _parse_spec(text: str) -> NetworkSpec:
    a, layers, c = text.split()
    body = layers.strip("[]")
    hidden = tuple(
        (int(w), act) for w, act in (item.split(":") for item in body.split(",") if item)
    )
    return NetworkSpec(int(a), hidden, int(c))


def params_to_text(spec: NetworkSpec, theta: np.ndarray) -> str:
    """One line per parameter: ``layer kind row col value`` (col 0 for biases)."""
    lines = []
    for layer, (W, b) in enumerate(nn.unpack(spec, theta)):
        for r in range(W.shape[0]):
            for c in range(W.shape[1]):
                lines.append(f"{layer} matrix {r} {c} {float(W[r, c])!r}")
        for r in range(b.shape[0]):
            lines.append(f"{layer} bias {r} 0 {float(b[r])!r}")
    return "\n".join(lines)


def params_from_text(spec: NetworkSpec, text: str) -> np.ndarray:
    theta = np.full(nn.count_params(spec), np.nan)
    for line in text.strip().splitlines():
        layer, kind, r, c, v = line.split()
        theta[nn.param_index(spec, int(layer), kind, int(r), int(c))] = float(v)
    if np.isnan(theta).any():
        raise ValueError("parameter listing is incomplete")
    return theta


def save_checkpoint(model: DeepONetModel) -> str:
    reg = model.regime or BranchRegime()
    head = [
        "# onet checkpoint",
        f"p = {model.p}",
        f"N = {model.N}",
        f"d = {model.d}",
        f"trunk_mode = {model.trunk_mode}",
        f"lambda = {reg.lam!r}",
        f"q = {reg.q}",
        f"base_width = {reg.base_width}",
        f"base_depth = {reg.base_depth}",
        f"n_branch = {len(model.branch_specs)}",
    ]
    body = []
    for i, (spec, sl) in enumerate(zip(model.branch_specs, model.branch_slices)):
        body += [f"@branch {i} {_spec_line(spec)}", params_to_text(spec, model.theta[sl])]
    body += [
        f"@trunk {_spec_line(model.trunk_spec)}",
        params_to_text(model.trunk_spec, model.theta[model.trunk_slice]),
    ]
    return "\n".join(head + body) + "\n"


def load_checkpoint(text: str) -> DeepONetModel:
    header, sections, current = {}, [], None
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith("@"):
            tag, rest = line[1:].split(" ", 1)
            if tag == "branch":
                rest = rest.split(" ", 1)[1]
            current = [tag, _parse_spec(rest), []]
            sections.append(current)
        elif current is None:
            key, val = (t.strip() for t in line.split("=", 1))
            header[key] = val
        else:
            current[2].append(line)
    specs, parts, tspec = [], [], None
    for tag, spec, lines in sections:
        theta = params_from_text(spec, "\n".join(lines))
        if tag == "branch":
            specs.append(spec)
            parts.append(theta)
        else:
            tspec, ttheta = spec, theta
    regime = BranchRegime(
        float(header["lambda"]), int(header["q"]), int(header["base_width"]), int(header["base_depth"])
    )
    return DeepONetModel(
        p=int(header["p"]),
        N=int(header["N"]),
        d=int(header["d"]),
        branch_specs=specs,
        trunk_spec=tspec,
        trunk_mode=header["trunk_mode"],
        theta=np.concatenate(parts + [ttheta]),
        regime=regime,
    )
