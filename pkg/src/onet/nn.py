"""Fully connected networks with ReLU / ReQU activations.

Parameters live in one flat float64 vector.  Every affine map ``i`` owns a
row-major weight block ``W_i`` of shape ``(out, in)`` followed by its bias
``b_i``; maps are stored in network order.

Besides plain evaluation the module propagates second-order input jets
(value, gradient, Laplacian or Hessian) forward through the network and
differentiates any linear functional of such a jet with respect to the
parameters by reverse accumulation through the jet computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Optional, Sequence

import numpy as np

SIGMA1 = "sigma1"
SIGMA2 = "sigma2"
IDENTITY = "identity"
ACTIVATIONS = (SIGMA1, SIGMA2, IDENTITY)

INIT_SCHEMES = ("uniform-he", "zero", "explicit")

# full-Hessian jets are only offered for low input dimension
MAX_HESSIAN_DIM = 3


class NonsmoothNetworkError(ValueError):
    """Raised when a second-order jet is requested through a ReLU layer."""


@dataclass(frozen=True)
class NetworkSpec:
    """Layer structure of a feedforward network.

    ``layers`` lists the hidden layers as ``(width, activation)`` pairs; the
    output layer is affine.  A spec without hidden layers is a single
    affine map.
    """

    input_dim: int
    layers: tuple = ()
    output_dim: int = 1

    def __post_init__(self):
        layers = tuple((int(w), str(a)) for w, a in self.layers)
        object.__setattr__(self, "layers", layers)
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        for width, act in layers:
            if width < 1:
                raise ValueError(f"hidden width must be positive, got {width}")
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        return max((w for w, _ in self.layers), default=0)

    @property
    def activations(self) -> list:
        return [a for _, a in self.layers]

    def shapes(self) -> list:
        """(out, in) shape of every affine map, in order."""
        dims = [self.input_dim] + [w for w, _ in self.layers] + [self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @classmethod
    def mlp(cls, input_dim, width, depth, output_dim=1, activation=SIGMA2):
        return cls(input_dim, tuple((width, activation) for _ in range(depth)), output_dim)


def count_params(spec: NetworkSpec) -> int:
    return sum(o * i + o for o, i in spec.shapes())


def layout(spec: NetworkSpec) -> list:
    """(weight slice, bias slice) into the flat vector for each affine map."""
    out = []
    pos = 0
    for o, i in spec.shapes():
        w = slice(pos, pos + o * i)
        pos += o * i
        b = slice(pos, pos + o)
        pos += o
        out.append((w, b))
    return out


def param_index(spec: NetworkSpec, layer: int, kind: str, row: int, col: int = 0) -> int:
    """Flat index of ``W_layer[row, col]`` (kind="matrix") or ``b_layer[row]``."""
    shapes = spec.shapes()
    o, i = shapes[layer]
    wsl, bsl = layout(spec)[layer]
    if not 0 <= row < o:
        raise IndexError(f"row {row} out of range for layer {layer}")
    if kind == "matrix":
        if not 0 <= col < i:
            raise IndexError(f"col {col} out of range for layer {layer}")
        return wsl.start + row * i + col
    if kind == "bias":
        return bsl.start + row
    raise ValueError(f"kind must be 'matrix' or 'bias', got {kind!r}")


def unpack(spec: NetworkSpec, theta: np.ndarray) -> list:
    """Views ``[(W, b), ...]`` into ``theta``; writing to them writes to theta."""
    theta = np.asarray(theta)
    if theta.shape != (count_params(spec),):
        raise ValueError(
            f"parameter vector has shape {theta.shape}, expected ({count_params(spec)},)"
        )
    return [
        (theta[w].reshape(o, i), theta[b])
        for (w, b), (o, i) in zip(layout(spec), spec.shapes())
    ]


def pack(spec: NetworkSpec, mats: Sequence) -> np.ndarray:
    """Inverse of :func:`unpack`."""
    theta = np.zeros(count_params(spec))
    views = unpack(spec, theta)
    if len(mats) != len(views):
        raise ValueError(f"expected {len(views)} affine maps, got {len(mats)}")
    for (W, b), (Wv, bv) in zip(mats, views):
        Wv[...] = W
        bv[...] = b
    return theta


def init_params(spec: NetworkSpec, seed: int, scheme: str = "uniform-he", values=None) -> np.ndarray:
    """Initial parameter vector.

    ``uniform-he`` draws weights from U(-a, a) with a = sqrt(6 / fan_in) and
    zero biases.  ``explicit`` copies ``values`` after a length check.
    """
    n = count_params(spec)
    if scheme == "zero":
        return np.zeros(n)
    if scheme == "explicit":
        if values is None:
            raise ValueError("explicit scheme needs values")
        theta = np.array(values, dtype=float)
        if theta.shape != (n,):
            raise ValueError(f"explicit values have shape {theta.shape}, expected ({n},)")
        return theta
    if scheme != "uniform-he":
        raise ValueError(f"unknown init scheme {scheme!r}; choose from {INIT_SCHEMES}")
    rng = np.random.default_rng(seed)
    theta = np.zeros(n)
    for (W, _), (o, i) in zip(unpack(spec, theta), spec.shapes()):
        a = np.sqrt(6.0 / i)
        W[...] = rng.uniform(-a, a, size=(o, i))
    return theta


def _activate(act: str, h: np.ndarray):
    """Activation value with first and second derivatives.

    At h == 0 the derivatives of max(0, .) are taken as 0.
    """
    if act == SIGMA2:
        r = np.maximum(h, 0.0)
        return r * r, 2.0 * r, 2.0 * (h > 0)
    if act == SIGMA1:
        return np.maximum(h, 0.0), (h > 0).astype(float), None
    return h, None, None


def _as_batch(spec: NetworkSpec, x) -> tuple:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"input has shape {x.shape}, expected (..., {spec.input_dim})")
    return X, single


def _shape_out(spec: NetworkSpec, arr: np.ndarray, single: bool):
    # arr has leading (n, out) axes
    if spec.output_dim == 1:
        arr = arr[:, 0]
    if single:
        arr = arr[0]
    if isinstance(arr, np.ndarray) and arr.ndim == 0:
        return float(arr)
    return arr


def forward_batch(spec: NetworkSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Network outputs, shape (n, output_dim), for inputs of shape (n, input_dim)."""
    params = unpack(spec, theta)
    z = X
    for (W, b), act in zip(params[:-1], spec.activations):
        z = _activate(act, z @ W.T + b)[0]
    W, b = params[-1]
    return z @ W.T + b


def forward(spec: NetworkSpec, theta: np.ndarray, x):
    """Evaluate the network at one point (shape (d_in,)) or a batch (n, d_in)."""
    X, single = _as_batch(spec, x)
    return _shape_out(spec, forward_batch(spec, theta, X), single)


@dataclass
class Jet2:
    """Value, gradient and Laplacian (and optionally Hessian) in the input.

    For a scalar network evaluated at one point: ``value`` is a float,
    ``gradient`` has shape (d,), ``hessian`` (d, d).  Batched inputs and
    vector outputs prepend ``(n,)`` and append ``(out,)`` before the
    derivative axes.
    """

    value: object
    gradient: np.ndarray
    laplacian: object
    hessian: Optional[np.ndarray] = None

    @property
    def mode(self) -> str:
        return "laplacian" if self.hessian is None else "full"


@dataclass
class _Tape:
    inputs: list = field(default_factory=list)  # (z, Gz, Lz) entering each affine map
    pre: list = field(default_factory=list)  # (h, Gh, Lh) of each hidden layer


def _check_smooth(spec: NetworkSpec):
    if SIGMA1 in spec.activations:
        raise NonsmoothNetworkError(
            "nonsmooth trunk: second-order jets need sigma2 or identity hidden layers"
        )


def _jet_forward(spec: NetworkSpec, theta: np.ndarray, X: np.ndarray, want_tape=False):
    """Laplacian-mode jet of every output over a batch.

    Returns ``(value (n,out), grad (n,out,d), lap (n,out), tape)``.
    """
    _check_smooth(spec)
    params = unpack(spec, theta)
    n, d = X.shape
    z = X
    G = np.broadcast_to(np.eye(d), (n, d, d))
    L = np.zeros((n, d))
    tape = _Tape() if want_tape else None
    for (W, b), act in zip(params[:-1], spec.activations):
        h = z @ W.T + b
        Gh = np.einsum("oi,nid->nod", W, G)
        Lh = L @ W.T
        if tape is not None:
            tape.inputs.append((z, G, L))
            tape.pre.append((h, Gh, Lh))
        a, d1, d2 = _activate(act, h)
        if d1 is None:
            z, G, L = a, Gh, Lh
        else:
            z = a
            G = d1[..., None] * Gh
            L = d1 * Lh + d2 * np.einsum("nod,nod->no", Gh, Gh)
    W, b = params[-1]
    if tape is not None:
        tape.inputs.append((z, G, L))
    value = z @ W.T + b
    grad = np.einsum("oi,nid->nod", W, G)
    lap = L @ W.T
    return value, grad, lap, tape


def _hessian_forward(spec: NetworkSpec, theta: np.ndarray, X: np.ndarray):
    """Full-mode jet; the Hessian is carried as its upper triangle only."""
    _check_smooth(spec)
    params = unpack(spec, theta)
    n, d = X.shape
    pairs = list(combinations_with_replacement(range(d), 2))
    pi = np.array([p[0] for p in pairs])
    pj = np.array([p[1] for p in pairs])
    z = X
    G = np.broadcast_to(np.eye(d), (n, d, d))
    H = np.zeros((n, d, len(pairs)))
    for (W, b), act in zip(params[:-1], spec.activations):
        h = z @ W.T + b
        Gh = np.einsum("oi,nid->nod", W, G)
        Hh = np.einsum("oi,nip->nop", W, H)
        a, d1, d2 = _activate(act, h)
        if d1 is None:
            z, G, H = a, Gh, Hh
        else:
            z = a
            G = d1[..., None] * Gh
            H = d1[..., None] * Hh + d2[..., None] * (Gh[..., pi] * Gh[..., pj])
    W, b = params[-1]
    value = z @ W.T + b
    grad = np.einsum("oi,nid->nod", W, G)
    Hp = np.einsum("oi,nip->nop", W, H)
    hess = np.empty(Hp.shape[:2] + (d, d))
    hess[..., pi, pj] = Hp
    hess[..., pj, pi] = Hp
    return value, grad, hess


def jet_batch(spec: NetworkSpec, theta: np.ndarray, X: np.ndarray):
    """Laplacian-mode jet over a batch: (value (n,out), grad (n,out,d), lap (n,out))."""
    value, grad, lap, _ = _jet_forward(spec, theta, X)
    return value, grad, lap


def forward_jet2(spec: NetworkSpec, theta: np.ndarray, x, mode: str = "full") -> Jet2:
    """Second-order input jet of the network output.

    ``mode="full"`` also returns the Hessian (input dimension at most 3);
    ``mode="laplacian"`` carries only its trace.
    """
    X, single = _as_batch(spec, x)
    if mode == "full":
        if spec.input_dim > MAX_HESSIAN_DIM:
            raise ValueError(
                f"full Hessian mode supports input_dim <= {MAX_HESSIAN_DIM}; use mode='laplacian'"
            )
        value, grad, hess = _hessian_forward(spec, theta, X)
        lap = np.trace(hess, axis1=-2, axis2=-1)
    elif mode == "laplacian":
        value, grad, lap, _ = _jet_forward(spec, theta, X)
        hess = None
    else:
        raise ValueError(f"mode must be 'full' or 'laplacian', got {mode!r}")
    return Jet2(
        value=_shape_out(spec, value, single),
        gradient=_shape_out(spec, grad, single),
        laplacian=_shape_out(spec, lap, single),
        hessian=None if hess is None else _shape_out(spec, hess, single),
    )


def _value_tape(spec, theta, X):
    params = unpack(spec, theta)
    tape = _Tape()
    z = X
    for (W, b), act in zip(params[:-1], spec.activations):
        h = z @ W.T + b
        tape.inputs.append((z, None, None))
        tape.pre.append((h, None, None))
        z = _activate(act, h)[0]
    tape.inputs.append((z, None, None))
    return z @ params[-1][0].T + params[-1][1], tape


def _backward(spec, theta, tape, cv, cg=None, cl=None) -> np.ndarray:
    """Reverse sweep.  cv (n,out), cg (n,out,d), cl (n,out) are output cotangents."""
    params = unpack(spec, theta)
    grad = np.zeros_like(theta)
    gparams = unpack(spec, grad)
    acts = spec.activations
    for layer in range(len(params) - 1, -1, -1):
        W, _ = params[layer]
        gW, gb = gparams[layer]
        z, Gz, Lz = tape.inputs[layer]
        gW += cv.T @ z
        gb += cv.sum(axis=0)
        if cg is not None:
            gW += np.einsum("nod,nid->oi", cg, Gz)
        if cl is not None:
            gW += cl.T @ Lz
        if layer == 0:
            break
        # cotangents of the activations feeding this map
        zv = cv @ W
        zg = None if cg is None else np.einsum("oi,nod->nid", W, cg)
        zl = None if cl is None else cl @ W
        h, Gh, Lh = tape.pre[layer - 1]
        _, d1, d2 = _activate(acts[layer - 1], h)
        if d1 is None:
            cv, cg, cl = zv, zg, zl
            continue
        hv = zv * d1
        if zg is not None:
            hv = hv + d2 * np.einsum("nid,nid->ni", zg, Gh)
            hg = d1[..., None] * zg
        else:
            hg = None
        if zl is not None:
            hv = hv + zl * d2 * Lh
            gsum = 2.0 * (zl * d2)[..., None] * Gh
            hg = gsum if hg is None else hg + gsum
            hl = zl * d1
        else:
            hl = None
        cv, cg, cl = hv, hg, hl
    return grad


def backprop_batch(spec, theta, X, cot_value, cot_grad=None, cot_lap=None) -> np.ndarray:
    """Gradient over theta of sum_n <cot, jet(X_n)>, summed over the batch.

    ``cot_value`` has shape (n, out); ``cot_grad`` (n, out, d) and
    ``cot_lap`` (n, out) are optional and need a smooth network.
    """
    cot_value = np.asarray(cot_value, dtype=float).reshape(X.shape[0], spec.output_dim)
    if cot_grad is None and cot_lap is None:
        _, tape = _value_tape(spec, theta, X)
        return _backward(spec, theta, tape, cot_value)
    _, _, _, tape = _jet_forward(spec, theta, X, want_tape=True)
    n, d = X.shape
    if cot_grad is None:
        cot_grad = np.zeros((n, spec.output_dim, d))
    if cot_lap is None:
        cot_lap = np.zeros((n, spec.output_dim))
    cot_grad = np.asarray(cot_grad, dtype=float).reshape(n, spec.output_dim, d)
    cot_lap = np.asarray(cot_lap, dtype=float).reshape(n, spec.output_dim)
    return _backward(spec, theta, tape, cot_value, cot_grad, cot_lap)


def backprop_value(spec: NetworkSpec, theta: np.ndarray, x) -> np.ndarray:
    """d(output)/d(theta) at a single point for a scalar network."""
    X, _ = _as_batch(spec, np.atleast_1d(x))
    if spec.output_dim != 1 or X.shape[0] != 1:
        raise ValueError("backprop_value expects one point and a scalar output")
    return backprop_batch(spec, theta, X, np.ones((1, 1)))


def backprop_jet(spec: NetworkSpec, theta: np.ndarray, x, seed_weights) -> np.ndarray:
    """d/d(theta) of w_val*value + w_grad.gradient + w_lap*laplacian at one point."""
    w_val, w_grad, w_lap = seed_weights
    X, _ = _as_batch(spec, np.atleast_1d(x))
    if spec.output_dim != 1 or X.shape[0] != 1:
        raise ValueError("backprop_jet expects one point and a scalar output")
    d = spec.input_dim
    w_grad = np.broadcast_to(np.asarray(w_grad, dtype=float), (d,))
    return backprop_batch(
        spec,
        theta,
        X,
        np.full((1, 1), float(w_val)),
        w_grad.reshape(1, 1, d),
        np.full((1, 1), float(w_lap)),
    )
