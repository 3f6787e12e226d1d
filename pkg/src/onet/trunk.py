"""Constructive trunk networks on [0, 1]^d.

The trunk basis is ``y^alpha * s_m(y)``: monomials of degree <= n-1 times
the C^1 piecewise-quadratic bumps ``s_m`` attached to the overlapping cover
boxes of [0,1]^d.  Every basis function is realized *exactly* by a ReQU
(sigma2) network assembled from small gadgets:

* product ``xy = ((x+y)^2 - (x-y)^2)/4``: one hidden layer, four neurons;
* identity ``x = ((x+1)^2 - x^2 - 1)/2``: four neurons, used to pass
  channels through layers;
* the 1-d bump: six neurons, one per knot of ``s``.

Networks are handled here as lists of affine maps ``[(W, b), ...]`` with a
sigma2 activation between consecutive maps, and converted to
``(NetworkSpec, theta)`` at the end.

The module also provides the local polynomial coefficient functionals
(weighted least squares and the averaged Taylor polynomial) and the
assembled approximant ``v_K``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .nn import SIGMA2, NetworkSpec, pack
from .spectral import FourierField, evaluate, multi_indices

# -- bumps and cover ----------------------------------------------------------

# knots of s and the jumps of s'' there, halved: s(t) = sum c_i sigma2(t - t_i)
S_KNOTS = np.array([0.0, 0.5, 1.0, 5.0, 5.5, 6.0])
S_WEIGHTS = np.array([2.0, -4.0, 2.0, -2.0, 4.0, -2.0])


def s_scalar(x):
    """The C^1 bump: 2x^2 on [0,1/2], rising to 1 on [1,5], back to 0 at 6."""
    return s_derivs(x)[0]


def s_derivs(x):
    """(s, s', s'') evaluated elementwise."""
    x = np.asarray(x, dtype=float)
    v = np.zeros_like(x)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    pieces = [
        ((x >= 0) & (x <= 0.5), lambda t: (2 * t * t, 4 * t, 4.0)),
        ((x > 0.5) & (x <= 1), lambda t: (1 - 2 * (t - 1) ** 2, -4 * (t - 1), -4.0)),
        ((x > 1) & (x <= 5), lambda t: (np.ones_like(t), np.zeros_like(t), 0.0)),
        ((x > 5) & (x <= 5.5), lambda t: (1 - 2 * (t - 5) ** 2, -4 * (t - 5), -4.0)),
        ((x > 5.5) & (x <= 6), lambda t: (2 * (t - 6) ** 2, 4 * (t - 6), 4.0)),
    ]
    for mask, fn in pieces:
        if np.any(mask):
            a, b, c = fn(x[mask])
            v[mask], d1[mask], d2[mask] = a, b, c
    if v.ndim == 0:
        return float(v), float(d1), float(d2)
    return v, d1, d2


def s_m_scalar(x, K: int, m: int):
    """s_m(x) = s(4Kx + 5 - 4m) for a single cover index m in 1..K."""
    return s_scalar(4 * K * np.asarray(x, dtype=float) + 5 - 4 * m)


def s_m_derivs(x, K: int, m: int):
    v, d1, d2 = s_derivs(4 * K * np.asarray(x, dtype=float) + 5 - 4 * m)
    return v, 4 * K * d1, 16 * K * K * d2


def s_m(X, K: int, m) -> np.ndarray:
    """Tensor bump prod_j s_{m_j}(x_j) for points X of shape (n, d)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = tuple(np.atleast_1d(m))
    if X.shape[1] != len(m):
        raise ValueError("point and cover index dimensions differ")
    out = np.ones(X.shape[0])
    for j, mj in enumerate(m):
        out = out * s_m_scalar(X[:, j], K, mj)
    return out


@dataclass(frozen=True)
class CoverBox:
    K: int
    m: tuple

    def intervals(self) -> list:
        K = self.K
        return [
            (max(0.0, (mj - 1) / K - 1 / (4 * K)), min(1.0, mj / K + 1 / (4 * K)))
            for mj in self.m
        ]

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        inside = np.ones(X.shape[0], dtype=bool)
        for j, (lo, hi) in enumerate(self.intervals()):
            inside &= (X[:, j] >= lo) & (X[:, j] <= hi)
        return inside

    def center(self) -> np.ndarray:
        return np.array([(lo + hi) / 2 for lo, hi in self.intervals()])


def cover_indices(K: int, d: int) -> list:
    return list(itertools.product(range(1, K + 1), repeat=d))


def cover_boxes(K: int, d: int) -> list:
    return [CoverBox(K, m) for m in cover_indices(K, d)]


def _check_unit_cube(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.any(X < 0) or np.any(X > 1):
        raise ValueError("points must lie in [0, 1]^d")
    return X


def pu_raw_sum(X, K: int) -> np.ndarray:
    """sum_m s_m(x).  Equals 1 only off the overlaps; it lies in [1, 2^d]."""
    X = _check_unit_cube(X)
    out = np.ones(X.shape[0])
    for j in range(X.shape[1]):
        out = out * sum(s_m_scalar(X[:, j], K, mj) for mj in range(1, K + 1))
    return out


def pu_normalized(X, K: int, m) -> np.ndarray:
    """s_m(x) / sum_m' s_m'(x); these sum to one on [0,1]^d."""
    X = _check_unit_cube(X)
    return s_m(X, K, m) / pu_raw_sum(X, K)


def _pu_1d_derivs(x, K):
    """Normalized 1-d bumps and two derivatives, each of shape (K, n)."""
    raw = [s_m_derivs(x, K, mj) for mj in range(1, K + 1)]
    s = np.array([r[0] for r in raw])
    s1 = np.array([r[1] for r in raw])
    s2 = np.array([r[2] for r in raw])
    S, S1, S2 = s.sum(0), s1.sum(0), s2.sum(0)
    psi = s / S
    num = s1 * S - s * S1
    psi1 = num / S**2
    psi2 = (s2 * S - s * S2) / S**2 - 2 * S1 * num / S**3
    return psi, psi1, psi2


# -- ReQU gadgets -----------------------------------------------------------------


def _compose(outer: list, inner: list) -> list:
    """Maps of outer(inner(x)); the last map of inner merges into outer's first."""
    Wi, bi = inner[-1]
    Wo, bo = outer[0]
    return inner[:-1] + [(Wo @ Wi, Wo @ bi + bo)] + outer[1:]


def _block_diag(mats):
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r : r + m.shape[0], c : c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def _parallel(nets: list) -> list:
    """Shared input, concatenated outputs.  Nets are padded to a common depth."""
    depth = max(len(n) for n in nets) - 1
    nets = [_pad(n, depth) for n in nets]
    first = (np.vstack([n[0][0] for n in nets]), np.concatenate([n[0][1] for n in nets]))
    rest = [
        (_block_diag([n[i][0] for n in nets]), np.concatenate([n[i][1] for n in nets]))
        for i in range(1, depth + 1)
    ]
    return [first] + rest


def _identity_layer(k: int) -> list:
    """One hidden layer (4k neurons) passing k channels through unchanged."""
    e = np.eye(k)
    W1 = np.vstack([e, -e, e, -e])
    b1 = np.concatenate([np.ones(k), -np.ones(k), np.zeros(k), np.zeros(k)])
    W2 = 0.5 * np.hstack([e, e, -e, -e])
    b2 = -0.5 * np.ones(k)
    return [(W1, b1), (W2, b2)]


def _pad(net: list, depth: int) -> list:
    k = net[-1][0].shape[0]
    while len(net) - 1 < depth:
        net = _compose(_identity_layer(k), net)
    return net


def _product_maps() -> list:
    W1 = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    W2 = np.array([[0.25, 0.25, -0.25, -0.25]])
    return [(W1, np.zeros(4)), (W2, np.zeros(1))]


def _tree_level(r: int) -> list:
    """One hidden layer multiplying inputs pairwise; an odd last input passes through."""
    gadgets = []
    for i in range(0, r - 1, 2):
        sel = np.zeros((2, r))
        sel[0, i] = sel[1, i + 1] = 1.0
        gadgets.append(_compose(_product_maps(), [(sel, np.zeros(2))]))
    if r % 2:
        sel = np.zeros((1, r))
        sel[0, r - 1] = 1.0
        gadgets.append(_compose(_identity_layer(1), [(sel, np.zeros(1))]))
    return _parallel(gadgets)


def _product_tree(r: int) -> list:
    """Maps computing the product of r >= 1 inputs, depth ceil(log2 r)."""
    net = [(np.eye(r), np.zeros(r))]
    while r > 1:
        net = _compose(_tree_level(r), net)
        r = (r + 1) // 2
    return net


def _monomial_maps(alpha, d: int) -> list:
    factors = [j for j, a in enumerate(alpha) for _ in range(a)]
    if not factors:
        return [(np.zeros((1, d)), np.ones(1))]
    sel = np.zeros((len(factors), d))
    for row, j in enumerate(factors):
        sel[row, j] = 1.0
    return _compose(_product_tree(len(factors)), [(sel, np.zeros(len(factors)))])


def _bump1d_maps(K: int, m: int, j: int, d: int) -> list:
    W1 = np.zeros((len(S_KNOTS), d))
    W1[:, j] = 4.0 * K
    b1 = 5.0 - 4.0 * m - S_KNOTS
    return [(W1, b1), (S_WEIGHTS[None, :].copy(), np.zeros(1))]


def _bump_maps(K: int, m, d: int) -> list:
    m = tuple(np.atleast_1d(m))
    factors = _parallel([_bump1d_maps(K, mj, j, d) for j, mj in enumerate(m)])
    return _compose(_product_tree(d), factors)


def _to_network(maps: list) -> tuple:
    in_dim = maps[0][0].shape[1]
    out_dim = maps[-1][0].shape[0]
    spec = NetworkSpec(in_dim, tuple((W.shape[0], SIGMA2) for W, _ in maps[:-1]), out_dim)
    return spec, pack(spec, maps)


def product_net() -> tuple:
    """sigma2 network with 4 hidden neurons computing x*y exactly."""
    return _to_network(_product_maps())


def identity_net(k: int = 1, depth: int = 1) -> tuple:
    return _to_network(_pad([(np.eye(k), np.zeros(k))], depth))


def monomial_net(alpha, d: Optional[int] = None) -> tuple:
    """Exact sigma2 realization of x^alpha via a binary tree of product gadgets."""
    alpha = tuple(int(a) for a in np.atleast_1d(alpha))
    if d is None:
        d = len(alpha)
    if len(alpha) != d or min(alpha) < 0:
        raise ValueError(f"invalid multi-index {alpha} for dimension {d}")
    return _to_network(_monomial_maps(alpha, d))


def bump_net(K: int, m, d: Optional[int] = None) -> tuple:
    """Exact sigma2 realization of the tensor bump s_m."""
    m = tuple(int(v) for v in np.atleast_1d(m))
    d = len(m) if d is None else d
    if len(m) != d or not all(1 <= v <= K for v in m):
        raise ValueError(f"cover index {m} invalid for K={K}, d={d}")
    return _to_network(_bump_maps(K, m, d))


def trunk_budget(n: int, d: int) -> tuple:
    """(depth, width) budget quoted for the trunk: 3+log2 d-1+log2 n-1 and 4n-4+6d."""
    return 3 + math.log2(d) - 1 + math.log2(n) - 1, 4 * n - 4 + 6 * d


@dataclass
class TrunkElement:
    index: int
    alpha: tuple
    m: tuple
    K: int
    spec: NetworkSpec
    theta: np.ndarray

    def target(self, Y) -> np.ndarray:
        """Closed form y^alpha s_m(y)."""
        Y = np.atleast_2d(Y)
        return np.prod(Y ** np.array(self.alpha), axis=1) * s_m(Y, self.K, self.m)

    def manifest(self) -> dict:
        return {
            "index": self.index,
            "alpha": list(self.alpha),
            "m": list(self.m),
            "width": self.spec.width,
            "depth": self.spec.depth,
        }


def _element_maps(alpha, K, m, d):
    bump = _bump_maps(K, m, d)
    if not any(alpha):
        return bump
    pair = _parallel([_monomial_maps(alpha, d), bump])
    return _compose(_product_maps(), pair)


def trunk_basis(K: int, n: int, d: int) -> list:
    """All y^alpha s_m(y) with |alpha| <= n-1 and m in [K]^d, as exact sigma2 nets.

    Ordered by cover index first, then graded multi-index.  The achieved
    p is ``len(result)`` = K^d * #{|alpha| <= n-1}.
    """
    if K < 1 or n < 1 or d < 1:
        raise ValueError("K, n and d must be positive")
    out = []
    for m in cover_indices(K, d):
        for alpha in multi_indices(n - 1, d):
            spec, theta = _to_network(_element_maps(alpha, K, m, d))
            out.append(TrunkElement(len(out), alpha, m, K, spec, theta))
    return out


def basis_size(K: int, n: int, d: int) -> int:
    return K**d * len(multi_indices(n - 1, d))


def stack_trunk(elements: list) -> tuple:
    """One sigma2 network whose p outputs are the basis elements."""
    return _to_network(_parallel([_element_maps(e.alpha, e.K, e.m, len(e.m)) for e in elements]))


def basis_manifest(elements: list) -> str:
    return json.dumps([e.manifest() for e in elements], indent=1)


# -- local polynomial coefficient functionals -------------------------------------


@dataclass
class LocalPoly:
    """q_m(x) = sum_alpha c_alpha x^alpha on cover box m."""

    m: tuple
    alphas: list
    coeffs: np.ndarray
    converged: bool = True

    def as_dict(self) -> dict:
        return dict(zip(self.alphas, self.coeffs))

    def __call__(self, X) -> np.ndarray:
        return _monomials(np.atleast_2d(X), self.alphas) @ self.coeffs


@dataclass
class PolyFunction:
    """A global polynomial sum_alpha c_alpha x^alpha with exact derivatives."""

    terms: dict

    def __call__(self, X) -> np.ndarray:
        return self.derivative_values((0,) * self._d(), X)

    def _d(self) -> int:
        return len(next(iter(self.terms)))

    def derivative_values(self, beta, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for alpha, c in self.terms.items():
            if any(b > a for a, b in zip(alpha, beta)):
                continue
            factor = c
            for a, b in zip(alpha, beta):
                factor *= math.perm(a, b)
            out += factor * np.prod(X ** (np.array(alpha) - np.array(beta)), axis=1)
        return out


def _monomials(X, alphas) -> np.ndarray:
    return np.stack([np.prod(X ** np.array(a), axis=1) for a in alphas], axis=1)


def _values(v, X) -> np.ndarray:
    if isinstance(v, FourierField):
        return evaluate(v, X)
    return np.asarray(v(X), dtype=float).reshape(X.shape[0])


def _derivative_values(v, beta, X) -> np.ndarray:
    if isinstance(v, FourierField):
        return evaluate(v.derivative(beta), X)
    if hasattr(v, "derivative_values"):
        return v.derivative_values(beta, X)
    raise TypeError("v must be a FourierField or provide derivative_values(beta, X)")


def _gauss_box(intervals, res):
    """Tensor Gauss-Legendre nodes (q, d) and weights (q,) on a box."""
    t, w = np.polynomial.legendre.leggauss(res)
    axes, weights = [], []
    for lo, hi in intervals:
        axes.append((hi - lo) / 2 * t + (hi + lo) / 2)
        weights.append((hi - lo) / 2 * w)
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(intervals))
    W = np.ones(1)
    for wj in weights:
        W = np.multiply.outer(W, wj)
    return X, W.reshape(-1)


def ls_functional(m, K: int, n: int, quad_res: int) -> tuple:
    """Nodes X (q, d) and matrix R (#alpha, q) with coefficients = R @ v(X)."""
    m = tuple(np.atleast_1d(m))
    d = len(m)
    if quad_res < n:
        raise ValueError(f"quad_res={quad_res} < n={n}: Gram matrix would be singular")
    alphas = multi_indices(n - 1, d)
    X, w = _gauss_box(CoverBox(K, m).intervals(), quad_res)
    sw = np.sqrt(w)
    V = _monomials(X, alphas) * sw[:, None]
    R = np.linalg.pinv(V) * sw[None, :]
    return X, R, alphas


def local_poly_coeffs_ls(v, m, K: int, n: int, quad_res: int = 8) -> LocalPoly:
    """L^2(Omega_m) least-squares fit of a degree n-1 polynomial, via Gauss quadrature."""
    X, R, alphas = ls_functional(m, K, n, quad_res)
    return LocalPoly(tuple(np.atleast_1d(m)), alphas, R @ _values(v, X))


def _ball_quadrature(center, r, res):
    d = len(center)
    X, w = _gauss_box([(c - r, c + r) for c in center], res)
    rho2 = ((X - center) ** 2).sum(1) / r**2
    b = np.zeros_like(rho2)
    inside = rho2 < 1
    b[inside] = np.exp(-1.0 / (1.0 - rho2[inside]))
    w = w * b
    return X, w / w.sum()


def _taylor_coeffs(v, box: CoverBox, n: int, res: int):
    ivs = box.intervals()
    center = box.center()
    r = min(hi - lo for lo, hi in ivs) / 2
    X, w = _ball_quadrature(center, r, res)
    d = len(center)
    alphas = multi_indices(n - 1, d)
    means = {}
    out = np.zeros(len(alphas))
    for ai, alpha in enumerate(alphas):
        for beta in multi_indices(n - 1 - sum(alpha), d):
            gamma = tuple(a + b for a, b in zip(alpha, beta))
            if gamma not in means:
                means[gamma] = _derivative_values(v, gamma, X)
            yb = np.prod((-X) ** np.array(beta), axis=1)
            fac = math.prod(math.factorial(a) for a in alpha) * math.prod(
                math.factorial(b) for b in beta
            )
            out[ai] += float(np.sum(w * means[gamma] * yb)) / fac
    return alphas, out


def averaged_taylor_coeffs(v, m, K: int, n: int, quad_res: int = 32, tol: float = 1e-6) -> LocalPoly:
    """Coefficients of the Taylor polynomial of order n averaged over the ball of Omega_m.

    The ball is inscribed in the cover box; the averaging weight is the
    normalized C^inf bump exp(-1/(1-|y-x0|^2/r^2)).  Derivatives of ``v`` are
    exact (spectral for a FourierField).  ``converged`` is False when doubling
    the quadrature resolution moves any coefficient by more than ``tol``.
    """
    box = CoverBox(K, tuple(np.atleast_1d(m)))
    alphas, c = _taylor_coeffs(v, box, n, quad_res)
    _, c2 = _taylor_coeffs(v, box, n, 2 * quad_res)
    converged = bool(np.max(np.abs(c - c2), initial=0.0) <= tol)
    return LocalPoly(box.m, alphas, c2, converged)


def coefficient_bound_constant(n: int, d: int) -> float:
    """C_2(n, d) = sum_{|alpha+beta| <= n-1} 1/(alpha! beta!)."""
    total = 0.0
    for alpha in multi_indices(n - 1, d):
        for beta in multi_indices(n - 1 - sum(alpha), d):
            total += 1.0 / (
                math.prod(math.factorial(a) for a in alpha)
                * math.prod(math.factorial(b) for b in beta)
            )
    return total


# -- assembled approximant ----------------------------------------------------------


@dataclass
class LocalApproximant:
    """v_K(x) = sum_m q_m(x) * normalized bump_m(x) on [0,1]^d."""

    K: int
    n: int
    d: int
    polys: list = field(default_factory=list)

    def __call__(self, X) -> np.ndarray:
        return self.derivatives(X)[0]

    def derivatives(self, X):
        """Value (q,), gradient (q, d) and Hessian (q, d, d) at points X (q, d)."""
        X = _check_unit_cube(X)
        q, d = X.shape
        pu = [_pu_1d_derivs(X[:, j], self.K) for j in range(d)]
        val = np.zeros(q)
        grad = np.zeros((q, d))
        hess = np.zeros((q, d, d))
        for poly in self.polys:
            m = poly.m
            psi = [pu[j][0][m[j] - 1] for j in range(d)]
            psi1 = [pu[j][1][m[j] - 1] for j in range(d)]
            psi2 = [pu[j][2][m[j] - 1] for j in range(d)]
            phi = np.prod(psi, axis=0)
            if not np.any(phi) and not any(np.any(p) for p in psi1):
                continue
            phig = np.zeros((q, d))
            phih = np.zeros((q, d, d))
            for a in range(d):
                for b in range(d):
                    fac = np.ones(q)
                    for j in range(d):
                        if a == b == j:
                            fac = fac * psi2[j]
                        elif j in (a, b):
                            fac = fac * psi1[j]
                        else:
                            fac = fac * psi[j]
                    phih[:, a, b] = fac
                fac = np.ones(q)
                for j in range(d):
                    fac = fac * (psi1[j] if j == a else psi[j])
                phig[:, a] = fac
            pv, pg, ph = _poly_derivs(poly, X)
            val += pv * phi
            grad += pg * phi[:, None] + pv[:, None] * phig
            hess += (
                ph * phi[:, None, None]
                + pg[:, :, None] * phig[:, None, :]
                + phig[:, :, None] * pg[:, None, :]
                + pv[:, None, None] * phih
            )
        return val, grad, hess


def _poly_derivs(poly: LocalPoly, X):
    q, d = X.shape
    terms = dict(zip(poly.alphas, poly.coeffs))
    pf = PolyFunction(terms)
    val = pf.derivative_values((0,) * d, X)
    grad = np.zeros((q, d))
    hess = np.zeros((q, d, d))
    for a in range(d):
        e = [0] * d
        e[a] = 1
        grad[:, a] = pf.derivative_values(tuple(e), X)
        for b in range(d):
            e2 = list(e)
            e2[b] += 1
            hess[:, a, b] = pf.derivative_values(tuple(e2), X)
    return val, grad, hess


def assemble_vK(v, K: int, n: int, coeff_mode: str = "ls", quad_res: Optional[int] = None, d=None):
    """Blend local degree n-1 polynomial fits of v with the normalized partition."""
    if d is None:
        if isinstance(v, FourierField):
            d = v.d
        elif isinstance(v, PolyFunction):
            d = v._d()
        else:
            raise ValueError("pass d for a plain callable")
    polys = []
    for m in cover_indices(K, d):
        if coeff_mode == "ls":
            polys.append(local_poly_coeffs_ls(v, m, K, n, quad_res or max(n + 2, 8)))
        elif coeff_mode == "taylor":
            polys.append(averaged_taylor_coeffs(v, m, K, n, quad_res or 32))
        else:
            raise ValueError(f"coeff_mode must be 'ls' or 'taylor', got {coeff_mode!r}")
    return LocalApproximant(K, n, d, polys)


def _composite_gauss(panels: int, order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    x = (edges[:-1, None] + h[:, None] * (t[None, :] + 1) / 2).reshape(-1)
    wx = (h[:, None] * w[None, :] / 2).reshape(-1)
    return x, wx


def h2_error(approx: LocalApproximant, v, panels: Optional[int] = None, order: int = 6) -> float:
    """||v - v_K||_{H^2([0,1]^d)} = sqrt(sum_{|alpha|<=2} ||D^alpha (v - v_K)||^2).

    Composite Gauss-Legendre with panel edges on the bump knots (multiples
    of 1/(8K)), so each panel sees a smooth integrand.
    """
    d = approx.d
    panels = panels or 8 * approx.K * 2
    x, wx = _composite_gauss(panels, order)
    X = np.stack(np.meshgrid(*([x] * d), indexing="ij"), -1).reshape(-1, d)
    W = np.ones(1)
    for _ in range(d):
        W = np.multiply.outer(W, wx)
    W = W.reshape(-1)
    val, grad, hess = approx.derivatives(X)
    total = np.sum(W * (_derivative_values(v, (0,) * d, X) - val) ** 2)
    for a in range(d):
        e = [0] * d
        e[a] = 1
        total += np.sum(W * (_derivative_values(v, tuple(e), X) - grad[:, a]) ** 2)
    for alpha in multi_indices(2, d, exact=True):
        idx = [j for j, a in enumerate(alpha) for _ in range(a)]
        total += np.sum(W * (_derivative_values(v, alpha, X) - hess[:, idx[0], idx[1]]) ** 2)
    return float(np.sqrt(total))
