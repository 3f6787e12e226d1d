"""Ground-truth solution operator of L = -Laplacian + c on the torus.

Everything is a diagonal Fourier multiplier, so the solution map, the
operator itself and its stability constants are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import TWO_PI, FourierField, GridSample, evaluate, multi_indices, norm_sq, reconstruct_P
from .trunk import basis_size, cover_indices, ls_functional


@dataclass(frozen=True)
class OperatorSpec:
    c: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("zeroth-order coefficient c must be positive")

    def symbol(self, K: int) -> np.ndarray:
        """4 pi^2 |k|^2 + c on the coefficient grid of max mode K."""
        return TWO_PI**2 * norm_sq(K, self.d) + self.c


def solve_truth(f: FourierField, op: OperatorSpec) -> FourierField:
    """u with -Laplacian u + c u = f."""
    _check_dim(f, op)
    return FourierField(f.coeffs / op.symbol(f.max_mode))


def apply_L_field(u: FourierField, op: OperatorSpec) -> FourierField:
    _check_dim(u, op)
    return FourierField(u.coeffs * op.symbol(u.max_mode))


def _check_dim(f, op):
    if f.d != op.d:
        raise ValueError(f"field dimension {f.d} does not match operator dimension {op.d}")


def stability_ratio(op: OperatorSpec, K: int) -> np.ndarray:
    """Per-mode ratio ||u||_{H^2} / ||f||_{L^2} = (1 + 4 pi^2 |k|^2) / (4 pi^2 |k|^2 + c)."""
    t = TWO_PI**2 * norm_sq(K, op.d)
    return (1.0 + t) / (t + op.c)


def check_assumption_constants(op: OperatorSpec, s_levels=(0.0, 2.0)) -> tuple:
    """Exact constants (C_stab, L_lip) of the solution map.

    C_stab = sup_k (1 + 4 pi^2 |k|^2)/(4 pi^2 |k|^2 + c): the ratio is
    monotone in |k|, so the sup is 1/c (at k = 0) when c <= 1 and the
    limit 1 otherwise.  L_lip is the norm of the solution map from H^s to
    H^s, sup_k 1/(4 pi^2 |k|^2 + c) = 1/c, the same for every s in s_levels
    because the map is a diagonal multiplier.
    """
    c_stab = max(1.0, 1.0 / op.c)
    l_lip = max(1.0 / op.c for _ in s_levels)
    return c_stab, l_lip


def coefficient_functional(k_index: int, K: int, n: int, d: int, quad_res: int = 8):
    """The k-th least-squares coefficient functional c_k, ordered like trunk_basis."""
    p = basis_size(K, n, d)
    if not 0 <= k_index < p:
        raise IndexError(f"k_index {k_index} out of range for p={p}")
    per_box = len(multi_indices(n - 1, d))
    m = cover_indices(K, d)[k_index // per_box]
    X, R, _ = ls_functional(m, K, n, quad_res)
    row = R[k_index % per_box]

    def c_k(v: FourierField) -> float:
        return float(row @ evaluate(v, X))

    return c_k


def lipschitz_probe(
    op: OperatorSpec,
    k_index: int,
    N: int,
    n_pairs: int,
    seed: int,
    K: int = 2,
    n: int = 2,
    bound: float = 1.0,
) -> float:
    """Largest observed |c_k(G P z1) - c_k(G P z2)| / |z1 - z2| over random grid data.

    z1, z2 are uniform on [-bound, bound]^m; identical pairs are skipped.
    """
    c_k = coefficient_functional(k_index, K, n, op.d)
    rng = np.random.default_rng(seed)
    m = (2 * N + 1) ** op.d
    best = 0.0
    for _ in range(n_pairs):
        z1 = rng.uniform(-bound, bound, m)
        z2 = rng.uniform(-bound, bound, m)
        dz = float(np.linalg.norm(z1 - z2))
        if dz == 0.0:
            continue
        v1 = c_k(solve_truth(reconstruct_P(GridSample(op.d, N, z1)), op))
        v2 = c_k(solve_truth(reconstruct_P(GridSample(op.d, N, z2)), op))
        best = max(best, abs(v1 - v2) / dz)
    return best
