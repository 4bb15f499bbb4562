"""Dense float64 matrix helpers: validation, symmetric eigensolver, QR.

All public entry points validate on construction; callers inside the
package may pass already-validated arrays to the private helpers.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, RankError, SymmetryError

SYMMETRY_TOL = 1e-10
JACOBI_MAX_SWEEPS = 100
JACOBI_REL_TOL = 1e-12


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-d float64 array with finite entries.

    1-d input is promoted to a single column.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionError(f"{name}: expected 2-d array, got ndim={a.ndim}")
    if a.size and not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: non-finite entries are not admitted")
    return np.ascontiguousarray(a)


def as_square(x, name: str = "matrix") -> np.ndarray:
    a = as_matrix(x, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name}: expected square matrix, got {a.shape}")
    return a


def check_symmetric(a: np.ndarray, name: str = "matrix", tol: float = SYMMETRY_TOL) -> None:
    if a.size and np.max(np.abs(a - a.T)) > tol:
        raise SymmetryError(f"{name}: not symmetric within {tol:g}")


def frobenius_dist_sq(a, b) -> float:
    """Squared Frobenius distance between two equal-shape matrices."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sum(d * d))


def sym_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues sorted descending, eigenvector matrix with columns
    in matching order). Accurate for the small dimensions used here
    (d <= 64); convergence is declared when the off-diagonal Frobenius
    norm drops below 1e-12 times the input norm, capped at 100 sweeps.
    """
    m = as_square(m, "sym_eig input")
    check_symmetric(m, "sym_eig input")
    n = m.shape[0]
    a = 0.5 * (m + m.T)
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n == 1 or norm == 0.0:
        return np.diag(a).copy(), v
    threshold = JACOBI_REL_TOL * norm

    for _ in range(JACOBI_MAX_SWEEPS):
        strict = a - np.diag(np.diag(a))
        off = np.linalg.norm(strict)
        if off < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= threshold / (n * n):
                    continue
                # Stable rotation: pick the smaller-magnitude tangent root.
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0.0 else 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], v[:, order]


def qr_orthogonalize(m, rng=None) -> np.ndarray:
    """Orthogonalize a square matrix via QR with positive diag(R).

    Singular input raises RankError unless `rng` is supplied, in which
    case fresh Gaussian draws replace the input until full rank.
    """
    a = as_square(m, "qr input")
    n = a.shape[0]
    for _ in range(100):
        q, r = np.linalg.qr(a)
        diag = np.diag(r)
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.min(np.abs(diag)) > 1e-10 * scale:
            signs = np.sign(diag)
            return q * signs
        if rng is None:
            raise RankError("qr input is numerically singular and no rng was supplied")
        a = rng.normal((n, n))
    raise RankError("could not draw a full-rank matrix in 100 attempts")


def random_orthogonal(n: int, rng) -> np.ndarray:
    """Random orthogonal matrix from a QR-orthogonalized Gaussian draw."""
    return qr_orthogonalize(rng.normal((n, n)), rng=rng)
