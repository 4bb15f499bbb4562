"""Learnable orthogonal alignment machinery.

An orthogonal matrix Q is parameterized by the Cayley transform of a
skew-symmetric generator A, stored as its strict upper triangle so the
skew invariant holds by construction. The closed-form minimizer of
||Sigma1 - Q^T Sigma0 Q||_F^2 over orthogonal Q follows from matching
sorted spectra (the Hoffman-Wielandt bound, attained at Q = U0 U1^T).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SymmetryError
from .linalg import as_matrix, as_square, check_symmetric, sym_eig
from .similarity import as_features

PSD_REL_TOL = 1e-8


@dataclass
class CovarianceStats:
    """Mean vector and covariance of a feature batch (population form)."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def validate(self) -> "CovarianceStats":
        """Check symmetry and positive semi-definiteness of sigma."""
        sigma = as_square(self.sigma, "sigma")
        check_symmetric(sigma, "sigma")
        if sigma.shape[0] != self.mu.shape[0]:
            raise DimensionError(f"mu dim {self.mu.shape[0]} vs sigma dim {sigma.shape[0]}")
        vals, _ = sym_eig(sigma)
        if vals.size and vals[-1] < -PSD_REL_TOL * max(vals[0], 0.0):
            raise ValueError(f"sigma is not PSD: min eigenvalue {vals[-1]:g}")
        return self


def cov_stats(f) -> CovarianceStats:
    """First and second moments of a feature matrix, dividing by n.

    The population convention matches the Gram-based CKA normalization.
    """
    f = as_features(f)
    n = f.shape[0]
    mu = f.mean(axis=0)
    fc = f - mu
    sigma = (fc.T @ fc) / n
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceStats(mu=mu, sigma=sigma, n=n)


def stats_backprop(f, grad_sigma, grad_mu=None) -> np.ndarray:
    """Pull gradients on (mu, sigma) back to the feature matrix.

    sigma = (1/n) Fc^T Fc and mu = (1/n) 1^T F, so
    dF = (1/n) Fc (S + S^T) + (1/n) 1 grad_mu^T.
    """
    f = as_features(f)
    n = f.shape[0]
    s = np.asarray(grad_sigma, dtype=np.float64)
    fc = f - f.mean(axis=0, keepdims=True)
    df = fc @ (s + s.T) / n
    if grad_mu is not None:
        df = df + np.asarray(grad_mu, dtype=np.float64).reshape(1, -1) / n
    return df


def _upper_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(d, k=1)


@dataclass
class OrthogonalParam:
    """Skew generator (strict upper triangle) plus a fixed positive scale.

    alpha stays at 1 by default; the combined effect of alpha * Q makes a
    separate mean constraint redundant, so only the ablation path reads it.
    """

    dim: int
    upper: np.ndarray = field(default=None)
    alpha: float = 1.0

    def __post_init__(self):
        if self.upper is None:
            self.upper = np.zeros(self.dim * (self.dim - 1) // 2)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.upper.shape != (self.dim * (self.dim - 1) // 2,):
            raise DimensionError(
                f"upper triangle for dim {self.dim} needs {self.dim * (self.dim - 1) // 2} entries"
            )
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @classmethod
    def from_skew(cls, a, alpha: float = 1.0) -> "OrthogonalParam":
        a = as_square(a, "skew generator")
        if a.size and np.max(np.abs(a + a.T)) > 1e-12:
            raise SymmetryError("generator must be skew-symmetric within 1e-12")
        d = a.shape[0]
        return cls(dim=d, upper=a[_upper_indices(d)].copy(), alpha=alpha)

    def skew(self) -> np.ndarray:
        """Materialize the full skew-symmetric generator."""
        a = np.zeros((self.dim, self.dim))
        iu = _upper_indices(self.dim)
        a[iu] = self.upper
        return a - a.T

    def copy(self) -> "OrthogonalParam":
        return OrthogonalParam(dim=self.dim, upper=self.upper.copy(), alpha=self.alpha)


def skew_upper(s) -> np.ndarray:
    """Strict upper triangle of a skew gradient matrix, as a flat vector."""
    s = as_square(s, "skew gradient")
    return s[_upper_indices(s.shape[0])].copy()


def cayley(p: OrthogonalParam) -> np.ndarray:
    """Q = (I + A)(I - A)^{-1}; always special-orthogonal for skew A."""
    a = p.skew()
    ident = np.eye(p.dim)
    # Q (I - A) = I + A  =>  (I + A) Q^T = I - A.
    qt = np.linalg.solve(ident + a, ident - a)
    return qt.T


def cayley_grad(p: OrthogonalParam, upstream) -> np.ndarray:
    """Backpropagate an upstream dL/dQ to the skew generator.

    Returns the full skew gradient matrix; its strict upper triangle is
    the gradient on the stored parameters. Uses
    dQ = (I + Q) dA (I - A)^{-1}, hence
    dL/dA = (I + Q^T) G (I + A)^{-1}, then skew-projected.
    """
    g = as_matrix(upstream, "upstream")
    if g.shape != (p.dim, p.dim):
        raise DimensionError(f"upstream shape {g.shape} does not match dim {p.dim}")
    a = p.skew()
    ident = np.eye(p.dim)
    q = cayley(p)
    m = (ident + q.T) @ g
    # P (I + A) = M  =>  (I - A) P^T = M^T.
    pt = np.linalg.solve(ident - a, m.T)
    raw = pt.T
    return raw - raw.T


def procrustes_oracle(sigma0, sigma1) -> tuple[np.ndarray, float]:
    """Closed-form minimizer of ||Sigma1 - Q^T Sigma0 Q||_F^2 over Q.

    Eigendecompose both covariances, sort spectra descending, and rotate
    the pretrained eigenbasis onto the finetuned one: Q* = U0 U1^T with
    minimal value sum_i (lambda1_i - lambda0_i)^2.
    """
    s0 = sigma0.sigma if isinstance(sigma0, CovarianceStats) else as_square(sigma0, "sigma0")
    s1 = sigma1.sigma if isinstance(sigma1, CovarianceStats) else as_square(sigma1, "sigma1")
    if s0.shape != s1.shape:
        raise DimensionError(f"covariance shapes differ: {s0.shape} vs {s1.shape}")
    vals0, vecs0 = sym_eig(s0)
    vals1, vecs1 = sym_eig(s1)
    q_star = vecs0 @ vecs1.T
    min_loss = float(np.sum((vals1 - vals0) ** 2))
    return q_star, min_loss
