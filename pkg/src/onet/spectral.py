"""Periodic functions on the unit torus in Fourier form.

A :class:`FourierField` stores the coefficients of
``f(x) = sum_k c_k exp(2 pi i k.x)`` for ``max|k_j| <= K`` in a dense array
of shape ``(2K+1,)*d``; entry ``[k_1+K, ..., k_d+K]`` holds ``c_k``.  Fields
are real valued, so the coefficients are kept exactly conjugate symmetric.

The grid encoder samples a field on the ``(2N+1)^d`` uniform grid
``x_nu = nu/(2N+1)``; the reconstruction maps grid values back to the
trigonometric interpolant on modes ``max|k_j| <= N``.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
import numpy as np

TWO_PI = 2.0 * np.pi

# relative tolerance of the conjugate-symmetry check on construction
_SYMMETRY_RTOL = 1e-10


def _hermitize(c: np.ndarray) -> np.ndarray:
    flipped = np.conj(c[(slice(None, None, -1),) * c.ndim])
    return (c + flipped) / 2


@dataclass(frozen=True)
class FourierField:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim < 1 or any(n != c.shape[0] or n % 2 == 0 for n in c.shape):
            raise ValueError(f"coefficient array must have shape (2K+1,)*d, got {c.shape}")
        scale = max(float(np.abs(c).max(initial=0.0)), 1.0)
        flipped = np.conj(c[(slice(None, None, -1),) * c.ndim])
        if np.abs(c - flipped).max(initial=0.0) > _SYMMETRY_RTOL * scale:
            raise ValueError("coefficients are not conjugate symmetric (field not real)")
        c = _hermitize(c)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def d(self) -> int:
        return self.coeffs.ndim

    @property
    def max_mode(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @classmethod
    def zeros(cls, d: int, max_mode: int = 0) -> "FourierField":
        return cls(np.zeros((2 * max_mode + 1,) * d, dtype=complex))

    @classmethod
    def constant(cls, c: float, d: int = 1) -> "FourierField":
        return cls(np.full((1,) * d, complex(c)))

    @classmethod
    def from_modes(cls, d: int, modes: dict) -> "FourierField":
        """Build from ``{k tuple: coefficient}``; missing conjugates are added."""
        K = max((max(abs(j) for j in k) for k in modes), default=0)
        c = np.zeros((2 * K + 1,) * d, dtype=complex)
        for k, v in modes.items():
            if len(k) != d:
                raise ValueError(f"mode {k} does not have dimension {d}")
            c[tuple(j + K for j in k)] = v
        for k, v in modes.items():
            neg = tuple(-j for j in k)
            if neg not in modes:
                c[tuple(j + K for j in neg)] = np.conj(v)
        return cls(c)

    @classmethod
    def cosine(cls, k, amplitude: float = 1.0) -> "FourierField":
        """amplitude * cos(2 pi k.x)."""
        k = tuple(int(j) for j in np.atleast_1d(k))
        if not any(k):
            return cls.constant(amplitude, len(k))
        return cls.from_modes(len(k), {k: amplitude / 2, tuple(-j for j in k): amplitude / 2})

    def coeff(self, k) -> complex:
        k = tuple(np.atleast_1d(k))
        K = self.max_mode
        if max(abs(j) for j in k) > K:
            return 0j
        return complex(self.coeffs[tuple(j + K for j in k)])

    def padded(self, K: int) -> "FourierField":
        """Same field with a coefficient array of max mode ``K`` (>= current)."""
        k0 = self.max_mode
        if K < k0:
            raise ValueError("padding cannot truncate; use truncated()")
        c = np.zeros((2 * K + 1,) * self.d, dtype=complex)
        sl = (slice(K - k0, K + k0 + 1),) * self.d
        c[sl] = self.coeffs
        return FourierField(c)

    def truncated(self, K: int) -> "FourierField":
        k0 = self.max_mode
        if K >= k0:
            return self.padded(K)
        sl = (slice(k0 - K, k0 + K + 1),) * self.d
        return FourierField(self.coeffs[sl])

    def _binary(self, other, op):
        if not isinstance(other, FourierField):
            return NotImplemented
        if other.d != self.d:
            raise ValueError("fields have different dimensions")
        K = max(self.max_mode, other.max_mode)
        return FourierField(op(self.padded(K).coeffs, other.padded(K).coeffs))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, a):
        if isinstance(a, FourierField):
            return NotImplemented
        return FourierField(self.coeffs * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return FourierField(-self.coeffs)

    def __call__(self, x):
        return evaluate(self, x)

    def wavenumbers(self) -> np.ndarray:
        return wavenumbers(self.max_mode, self.d)

    def multiply_spectrum(self, m: np.ndarray) -> "FourierField":
        """Apply a real, even Fourier multiplier given on the coefficient grid."""
        return FourierField(self.coeffs * m)

    def derivative(self, alpha) -> "FourierField":
        """Exact partial derivative D^alpha.  The result is real for any alpha."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.d:
            raise ValueError("multi-index has the wrong dimension")
        k = self.wavenumbers()
        m = np.ones(self.coeffs.shape, dtype=complex)
        for j, a in enumerate(alpha):
            if a:
                m = m * (1j * TWO_PI * k[..., j]) ** a
        return FourierField(self.coeffs * m)

    def laplacian(self) -> "FourierField":
        return FourierField(self.coeffs * (-(TWO_PI**2) * norm_sq(self.max_mode, self.d)))


def wavenumbers(K: int, d: int) -> np.ndarray:
    """Integer vectors k on the coefficient grid, shape (2K+1,)*d + (d,)."""
    r = np.arange(-K, K + 1)
    return np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1)


def norm_sq(K: int, d: int) -> np.ndarray:
    """|k|^2 on the coefficient grid."""
    return (wavenumbers(K, d) ** 2).sum(axis=-1).astype(float)


def _contract_points(coeffs: np.ndarray, X: np.ndarray) -> np.ndarray:
    """sum_k c_k exp(2 pi i k.x_n) for scattered points X (n, d)."""
    K = (coeffs.shape[0] - 1) // 2
    r = np.arange(-K, K + 1)
    n, d = X.shape
    E0 = np.exp(1j * TWO_PI * np.outer(X[:, 0], r))
    T = E0 @ coeffs.reshape(coeffs.shape[0], -1)  # (n, rest)
    for j in range(1, d):
        T = T.reshape(n, 2 * K + 1, -1)
        Ej = np.exp(1j * TWO_PI * np.outer(X[:, j], r))
        T = np.einsum("nk,nkr->nr", Ej, T)
    return T.reshape(n)


def _contract_tensor(coeffs: np.ndarray, axis_points: np.ndarray) -> np.ndarray:
    """Field values on the tensor grid axis_points^d, shape (len(axis_points),)*d."""
    K = (coeffs.shape[0] - 1) // 2
    r = np.arange(-K, K + 1)
    E = np.exp(1j * TWO_PI * np.outer(axis_points, r))
    T = coeffs
    for axis in range(coeffs.ndim):
        T = np.tensordot(E, T, axes=([1], [axis]))
        T = np.moveaxis(T, 0, axis)
    return T


def evaluate(f: FourierField, x):
    """Real value of the field at a point (d,) or points (n, d)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.shape[-1] != f.d:
        if f.d == 1 and x.ndim == 1:
            X, single = x.reshape(-1, 1), False
        else:
            raise ValueError(f"points have dimension {X.shape[-1]}, field has {f.d}")
    v = _contract_points(f.coeffs, X).real
    return float(v[0]) if single else v


def evaluate_grid(f: FourierField, axis_points) -> np.ndarray:
    """Real values on the tensor-product grid ``axis_points^d``."""
    return _contract_tensor(f.coeffs, np.asarray(axis_points, dtype=float)).real


@dataclass(frozen=True)
class GridSample:
    """Values on the grid x_nu = nu/(2N+1), nu in {0..2N}^d (row-major)."""

    d: int
    N: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if not np.iscomplexobj(v):
            v = v.astype(float)
        shape = (2 * self.N + 1,) * self.d
        if v.shape != shape:
            if v.size == int(np.prod(shape)):
                v = v.reshape(shape)
            else:
                raise ValueError(f"grid values have shape {v.shape}, expected {shape}")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return (2 * self.N + 1) ** self.d

    def points(self) -> np.ndarray:
        return grid_points(self.N, self.d)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __sub__(self, other: "GridSample") -> "GridSample":
        return GridSample(self.d, self.N, self.values - other.values)


def grid_axis(N: int) -> np.ndarray:
    return np.arange(2 * N + 1) / (2 * N + 1)


def grid_points(N: int, d: int) -> np.ndarray:
    """All grid points, shape (m, d), in the row-major order of GridSample.flat()."""
    ax = grid_axis(N)
    return np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)


def encode_D(f: FourierField, N: int) -> GridSample:
    """Point samples of f on the (2N+1)^d grid; no derivative information."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    return GridSample(f.d, N, evaluate_grid(f, grid_axis(N)))


def _dft_matrix(N: int) -> np.ndarray:
    n = 2 * N + 1
    k = np.arange(-N, N + 1)
    nu = np.arange(n)
    return np.exp(-1j * TWO_PI * np.outer(k, nu) / n) / n


def reconstruct_P(g: GridSample, fast: bool = False) -> FourierField:
    """Trigonometric interpolant through the grid values (modes |k|_inf <= N).

    Coefficients are the discrete inner products (g, phi_k)_N, computed by a
    direct transform along each axis.  ``fast=True`` uses the FFT instead.
    """
    v = np.asarray(g.values)
    if fast:
        n = 2 * g.N + 1
        c = np.fft.fftshift(np.fft.fftn(v)) / n**g.d
    else:
        F = _dft_matrix(g.N)
        c = v.astype(complex)
        for axis in range(g.d):
            c = np.moveaxis(np.tensordot(F, c, axes=([1], [axis])), 0, axis)
    return FourierField(_hermitize(c))


def project(f: FourierField, N: int) -> FourierField:
    """Pseudo-spectral projection: reconstruct_P(encode_D(f, N))."""
    return reconstruct_P(encode_D(f, N))


def discrete_inner(f: GridSample, g: GridSample) -> complex:
    """(f, g)_N = (2N+1)^-d sum_nu f(x_nu) conj(g(x_nu))."""
    if (f.d, f.N) != (g.d, g.N):
        raise ValueError("grid samples live on different grids")
    return complex(np.mean(np.asarray(f.values) * np.conj(g.values)))


def basis_sample(k, N: int) -> GridSample:
    """phi_k = exp(2 pi i k.x) sampled on the grid (complex values)."""
    k = np.atleast_1d(k)
    X = grid_points(N, len(k))
    vals = np.exp(1j * TWO_PI * X @ k)
    return GridSample(len(k), N, vals.reshape((2 * N + 1,) * len(k)))


def sobolev_weight(K: int, d: int, s: float) -> np.ndarray:
    return (1.0 + TWO_PI**2 * norm_sq(K, d)) ** s


def sobolev_norm(f: FourierField, s: float) -> float:
    """(sum_k (1 + 4 pi^2 |k|^2)^s |c_k|^2)^(1/2)."""
    if s < 0:
        raise ValueError("Sobolev order must be nonnegative")
    w = sobolev_weight(f.max_mode, f.d, s)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def sobolev_seminorm(f: FourierField, s: float) -> float:
    """(sum_k |k|^(2s) |c_k|^2)^(1/2); the weight carried by the Lipschitz bound of P."""
    w = np.sqrt(norm_sq(f.max_mode, f.d)) ** (2 * s)
    if s == 0:
        w = np.ones_like(w)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def multi_indices(max_order: int, d: int, exact: bool = False) -> list:
    """Multi-indices with |alpha| <= max_order (or == with exact), graded order."""
    out = []
    for total in range(0 if not exact else max_order, max_order + 1):
        for alpha in itertools.product(range(total + 1), repeat=d):
            if sum(alpha) == total:
                out.append(alpha)
    return out


def wninf_norm_estimate(f: FourierField, n: int, grid_res: int) -> float:
    """max_{|alpha| <= n} max over a uniform grid of |D^alpha f|.

    A lower estimate of the W^{n,inf} norm; refuses grids too coarse to
    resolve the field's modes.
    """
    if grid_res < 2 * f.max_mode + 1:
        raise ValueError(
            f"grid_res {grid_res} undersamples a field with max mode {f.max_mode}"
        )
    ax = np.arange(grid_res) / grid_res
    best = 0.0
    for alpha in multi_indices(n, f.d):
        vals = evaluate_grid(f.derivative(alpha), ax)
        best = max(best, float(np.abs(vals).max()))
    return best


def lipschitz_const_P(N: int, d: int, s_prime: float) -> float:
    """sqrt( sum_{|k|_inf <= N} |k|^(2 s') / (2N+1)^d )."""
    ksq = norm_sq(N, d)
    terms = np.where(ksq > 0, ksq ** float(s_prime), 0.0 if s_prime > 0 else 1.0)
    return float(np.sqrt(terms.sum() / (2 * N + 1) ** d))


def spectral_decay(K: int, d: int, s: float, eps: float = 0.5) -> np.ndarray:
    """Standard deviation sigma_k = (1 + 4 pi^2 |k|^2)^(-(s + d/2 + eps)/2)."""
    return (1.0 + TWO_PI**2 * norm_sq(K, d)) ** (-(s + d / 2 + eps) / 2)


def _gaussian_coeffs(rng: np.random.Generator, sigma: np.ndarray) -> np.ndarray:
    shape = sigma.shape
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    a = (sigma * g / np.sqrt(2.0)).reshape(-1)
    size = a.size
    center = size // 2
    idx = np.arange(size)
    neg = idx < center
    a[neg] = np.conj(a[size - 1 - idx[neg]])
    a[center] = np.sqrt(2.0) * a[center].real
    return a.reshape(shape)


def sample_random_field(
    seed: int, d: int, s: float, K_f: int, bound: float = np.inf, eps: float = 0.5
) -> FourierField:
    """Gaussian field with spectral decay, rescaled so ||f||_{H^s} <= bound.

    Coefficients are sigma_k (g1 + i g2)/sqrt(2) with conjugate symmetry
    imposed (the constant mode is real with variance sigma_0^2).
    """
    if s <= 0 or K_f < 1:
        raise ValueError("need s > 0 and K_f >= 1")
    rng = np.random.default_rng(seed)
    f = FourierField(_gaussian_coeffs(rng, spectral_decay(K_f, d, s, eps)))
    if bound <= 0:
        return FourierField.zeros(d, K_f)
    nrm = sobolev_norm(f, s)
    if nrm > bound:
        f = f * (bound / nrm)
    return f


@dataclass(frozen=True)
class FieldEnsemble:
    """Input-function distribution: clipped Gaussian field with spectral decay."""

    d: int = 1
    s: float = 3.0
    K_f: int = 2
    bound: float = np.inf
    eps: float = 0.5

    def sample(self, seed: int) -> FourierField:
        return sample_random_field(seed, self.d, self.s, self.K_f, self.bound, self.eps)

    def sample_many(self, seed: int, count: int) -> list:
        seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
        return [self.sample(int(sd)) for sd in seeds]

    def second_moment(self, s_eval: float) -> float:
        """E ||f||^2_{H^s_eval} before clipping."""
        sig = spectral_decay(self.K_f, self.d, self.s, self.eps)
        return float(np.sum(sobolev_weight(self.K_f, self.d, s_eval) * sig**2))


# -- text formats ------------------------------------------------------------


def field_to_text(f: FourierField) -> str:
    """Header ``d N_max`` then one line ``k_1 .. k_d re im`` per mode."""
    K = f.max_mode
    lines = [f"{f.d} {K}"]
    for idx in np.ndindex(f.coeffs.shape):
        k = " ".join(str(i - K) for i in idx)
        c = f.coeffs[idx]
        lines.append(f"{k} {float(c.real)!r} {float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def field_from_text(text: str) -> FourierField:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    d, K = int(rows[0][0]), int(rows[0][1])
    c = np.zeros((2 * K + 1,) * d, dtype=complex)
    for row in rows[1:]:
        if len(row) != d + 2:
            raise ValueError(f"malformed mode line: {' '.join(row)!r}")
        k = tuple(int(v) + K for v in row[:d])
        c[k] = complex(float(row[d]), float(row[d + 1]))
    return FourierField(c)


def grid_to_csv(g: GridSample) -> str:
    """Row-major CSV; for d >= 2 each row holds the last axis."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    vals = np.asarray(g.values)
    for row in vals.reshape(-1, vals.shape[-1]):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def grid_from_csv(text: str, d: int) -> GridSample:
    rows = [list(map(float, r)) for r in csv.reader(io.StringIO(text)) if r]
    vals = np.array(rows)
    n = vals.shape[-1]
    N = (n - 1) // 2
    return GridSample(d, N, vals.reshape((n,) * d))
