"""Training objectives with exact gradients.

Three building blocks: a classification loss (cross-entropy by default,
squared error as an option), the lambda-weighted similarity-constrained
objective, and the covariance-alignment regularizer whose skew gradient
routes through the Cayley map. Composition helpers keep the degenerate
settings (lambda=1, zero covariance weight) on the exact plain-finetune
code path so trajectories stay bit-identical.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError
from .linalg import as_matrix, as_square, frobenius_dist_sq, sym_eig
from .manifold import CovarianceStats, OrthogonalParam, cayley, cayley_grad, skew_upper

METHODS = ("scratch", "linear", "full", "hcs", "repsim")

CKA_RANGE_SLACK = 1e-9


class LossConfig:
    """Which objective a finetune run optimizes, and its knobs."""

    def __init__(
        self,
        method: str = "full",
        hcs_lambda: float = 0.8,
        mu_align: bool = False,
        learnable_q: bool = True,
        cls_loss: str = "ce",
        cov_weight: float = 1.0,
    ):
        method = str(method).lower()
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}, expected one of {METHODS}")
        if not 0.0 <= float(hcs_lambda) <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {hcs_lambda}")
        if cls_loss not in ("ce", "mse"):
            raise ConfigError(f"cls_loss must be 'ce' or 'mse', got {cls_loss!r}")
        if not float(cov_weight) >= 0.0:
            raise ConfigError(f"cov_weight must be nonnegative, got {cov_weight}")
        self.method = method
        self.hcs_lambda = float(hcs_lambda)
        self.mu_align = bool(mu_align)
        self.learnable_q = bool(learnable_q)
        self.cls_loss = cls_loss
        self.cov_weight = float(cov_weight)

    def __repr__(self):
        return (
            f"LossConfig(method={self.method!r}, hcs_lambda={self.hcs_lambda}, "
            f"mu_align={self.mu_align}, learnable_q={self.learnable_q}, "
            f"cls_loss={self.cls_loss!r}, cov_weight={self.cov_weight})"
        )


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cls_loss_and_grad(logits, targets, loss: str = "ce"):
    """Classification loss and its gradient w.r.t. the logits.

    Integer targets select softmax cross-entropy (or squared error against
    one-hot with loss='mse'); a float {0,1} matrix selects per-entry
    sigmoid binary cross-entropy for the multilabel task.
    """
    if loss not in ("ce", "mse"):
        raise ConfigError(f"unknown loss {loss!r}, expected 'ce' or 'mse'")
    z = as_matrix(np.asarray(logits, dtype=np.float64), "logits")
    n, k = z.shape
    t = np.asarray(targets)

    if t.ndim == 1:
        if not np.issubdtype(t.dtype, np.integer):
            t = t.astype(np.int64)
        if t.shape[0] != n:
            raise DimensionError(f"{n} logit rows but {t.shape[0]} targets")
        if t.size and (t.min() < 0 or t.max() >= k):
            raise ValueError(f"label index out of range for {k} classes")
        onehot = np.zeros((n, k))
        onehot[np.arange(n), t] = 1.0
        if loss == "mse":
            diff = z - onehot
            return float(np.sum(diff * diff) / n), 2.0 * diff / n
        p = _softmax(z)
        picked = np.clip(p[np.arange(n), t], 1e-300, None)
        return float(-np.mean(np.log(picked))), (p - onehot) / n

    if t.shape != (n, k):
        raise DimensionError(f"multi-hot targets shape {t.shape} vs logits {z.shape}")
    y = t.astype(np.float64)
    if y.size and not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("multi-hot targets must contain only 0 and 1")
    if loss == "mse":
        diff = z - y
        return float(np.sum(diff * diff) / n), 2.0 * diff / n
    # Stable sigmoid BCE: max(z,0) - z*y + log(1 + exp(-|z|)), mean over entries.
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    sig = 1.0 / (1.0 + np.exp(-z))
    return float(per.mean()), (sig - y) / (n * k)


def hcs_loss(cls: float, cka: float, lam: float) -> float:
    """lambda * task loss + (1 - lambda) * (1 - CKA)."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    if not -CKA_RANGE_SLACK <= cka <= 1.0 + CKA_RANGE_SLACK:
        raise ValueError(f"cka outside [0, 1]: {cka}")
    return lam * cls + (1.0 - lam) * (1.0 - cka)


def _sigma_of(x, name):
    if isinstance(x, CovarianceStats):
        return x.sigma
    return as_square(x, name)


def cov_loss_and_grads(sigma1, sigma0_frozen, q: OrthogonalParam):
    """||Sigma1 - Q^T Sigma0 Q||_F^2 with gradients for Sigma1 and the generator.

    Sigma0 is treated as frozen; grad_a is the full skew gradient matrix
    (strict upper triangle = gradient on the stored parameters).
    """
    s1 = _sigma_of(sigma1, "sigma1")
    s0 = _sigma_of(sigma0_frozen, "sigma0")
    if s0.shape != s1.shape:
        raise DimensionError(f"covariance shapes differ: {s1.shape} vs {s0.shape}")
    if s0.shape[0] != q.dim:
        raise DimensionError(f"alignment dim {q.dim} vs covariance dim {s0.shape[0]}")
    qm = cayley(q)
    conj = qm.T @ s0 @ qm
    m = s1 - conj
    loss = frobenius_dist_sq(s1, conj)
    grad_sigma1 = 2.0 * m
    grad_q = -2.0 * (s0 @ qm @ m.T + s0.T @ qm @ m)
    grad_a = cayley_grad(q, grad_q)
    return loss, grad_sigma1, grad_a


def mu_loss_and_grads(stats1: CovarianceStats, stats0: CovarianceStats, q: OrthogonalParam):
    """Optional mean-alignment term ||mu1 - alpha * Q mu0||^2 (ablation only)."""
    mu1 = np.asarray(stats1.mu, dtype=np.float64)
    mu0 = np.asarray(stats0.mu, dtype=np.float64)
    if mu1.shape != mu0.shape:
        raise DimensionError(f"mean shapes differ: {mu1.shape} vs {mu0.shape}")
    if mu0.shape[0] != q.dim:
        raise DimensionError(f"alignment dim {q.dim} vs mean dim {mu0.shape[0]}")
    qm = cayley(q)
    r = mu1 - q.alpha * (qm @ mu0)
    loss = float(r @ r)
    grad_mu1 = 2.0 * r
    grad_q = -2.0 * q.alpha * np.outer(r, mu0)
    grad_a = cayley_grad(q, grad_q)
    return loss, grad_mu1, grad_a


def repsim_total(cls: float, cov: float, cov_weight: float = 1.0) -> float:
    """Task loss plus the covariance term. The weight stays at 1 by default."""
    return cls + cov_weight * cov


def _chart_recenter(best_p: OrthogonalParam, s1: np.ndarray):
    """Generator of a same-minimum rotation copy nearest the chart origin.

    The Cayley chart misses rotations with a -1 eigenvalue. When the
    minimizer sits near one, descent drives the generator entries toward
    infinity and the pulled-back gradient dies out well short of the
    floor. At a minimizer the conjugated covariance is diagonal in the
    target's eigenbasis, so flipping a pair of signs in that basis lands
    on another rotation with the same covariance image but a different
    chart position. Returns the flipped copy with the smallest generator
    norm, or None when no copy beats the current one.
    """
    d = best_p.dim
    q = cayley(best_p)
    _, v1 = sym_eig(s1)
    ident = np.eye(d)
    found = None
    found_norm = float(np.linalg.norm(best_p.upper))
    for i in range(d):
        for j in range(i + 1, d):
            signs = np.ones(d)
            signs[i] = -1.0
            signs[j] = -1.0
            q2 = q @ ((v1 * signs) @ v1.T)
            den = ident + q2
            if abs(np.linalg.det(den)) < 1e-9:
                continue
            gen = np.linalg.solve(den, q2 - ident)
            gen = 0.5 * (gen - gen.T)
            upper2 = skew_upper(gen)
            norm2 = float(np.linalg.norm(upper2))
            if norm2 < found_norm:
                found = upper2
                found_norm = norm2
    return found


def fit_alignment(
    sigma0,
    sigma1,
    steps: int = 4000,
    grad_tol: float = 1e-8,
    init_scale: float = 1e-4,
):
    """Minimize the covariance gap over Q by descent on the skew generator.

    Steps follow conjugate directions (gradient plus a momentum multiple
    of the previous direction) rather than the raw gradient: the loss
    surface develops narrow curved valleys when eigenvalues nearly
    repeat, and plain gradient steps zigzag across such a valley instead
    of moving along it. The direction resets to the gradient whenever
    successive gradients stay too correlated. Each step runs a two-sided
    line search, doubling the stride while the sufficient-decrease test
    keeps passing and halving when the first try overshoots, so accepted
    loss strictly decreases.

    The generator starts at a tiny fixed-seed perturbation of zero: exact
    zero sits on a stationary ray whenever both covariances are diagonal
    in the same basis, and the nudge costs nothing elsewhere. If descent
    flatlines at an out-of-order eigenvalue pairing (a saddle, never a
    minimum) the parameter gets a seeded random kick away from the best
    point seen and descent resumes; the best point wins in the end. When
    the flatline comes with generator entries grown huge, the minimizer
    sits near a rotation the chart cannot express, so the parameter jumps
    to a same-minimum copy near the chart origin instead of kicking.

    Returns (param, final_loss, loss_history); the history records the
    best loss after each step, so it never increases.
    """
    s0 = _sigma_of(sigma0, "sigma0")
    s1 = _sigma_of(sigma1, "sigma1")
    if s0.shape != s1.shape:
        raise DimensionError(f"covariance shapes differ: {s0.shape} vs {s1.shape}")
    d = s0.shape[0]

    from .rng import SeededRng

    m = d * (d - 1) // 2
    rng = SeededRng(0x51EA)
    init = init_scale * (rng.uniform((m,)) - 0.5) if m else np.zeros(0)
    p = OrthogonalParam(dim=d, upper=init)
    loss, _, grad_a = cov_loss_and_grads(s1, s0, p)
    best_p, best_loss = p, loss
    history = [loss]

    scale = max(1.0, float(np.max(np.abs(s0))), float(np.max(np.abs(s1))))
    lr0 = 0.25 / (scale * scale)
    lr = lr0

    gu = skew_upper(grad_a)
    direction = -gu
    stall = 0
    kicks_left = 4
    kick_scale = 0.4
    recenters_left = 2
    for _ in range(int(steps)):
        gsq = float(gu @ gu)
        stuck = gsq <= grad_tol * grad_tol or stall >= 30
        accepted = False
        if not stuck:
            slope = float(gu @ direction)
            if slope >= 0.0:
                direction = -gu
                slope = -gsq

            def trial(step_size):
                cand = OrthogonalParam(
                    dim=d, upper=p.upper + step_size * direction, alpha=p.alpha
                )
                cand_loss, _, cand_grad = cov_loss_and_grads(s1, s0, cand)
                return cand, cand_loss, cand_grad

            cand, cand_loss, cand_grad = trial(lr)
            if cand_loss <= loss + 1e-4 * lr * slope:
                accepted = True
                for _grow in range(50):
                    doubled = lr * 2.0
                    c2, l2, g2 = trial(doubled)
                    if l2 <= loss + 1e-4 * doubled * slope and l2 < cand_loss:
                        lr, cand, cand_loss, cand_grad = doubled, c2, l2, g2
                    else:
                        break
            else:
                for _shrink in range(60):
                    lr *= 0.5
                    cand, cand_loss, cand_grad = trial(lr)
                    if cand_loss <= loss + 1e-4 * lr * slope:
                        accepted = True
                        break
            if accepted:
                drop = loss - cand_loss
                p, loss, grad_a = cand, cand_loss, cand_grad
                stall = stall + 1 if drop <= 1e-12 * max(1.0, abs(loss)) else 0
                if loss < best_loss:
                    best_p, best_loss = p, loss
                new_gu = skew_upper(grad_a)
                nsq = float(new_gu @ new_gu)
                if abs(float(new_gu @ gu)) > 0.2 * nsq:
                    direction = -new_gu
                else:
                    beta = float(new_gu @ (new_gu - gu)) / max(gsq, 1e-300)
                    direction = -new_gu + max(0.0, beta) * direction
                gu = new_gu
        if stuck or not accepted:
            if m == 0:
                break
            recentered = None
            if recenters_left > 0 and float(np.linalg.norm(best_p.upper)) > 25.0:
                recentered = _chart_recenter(best_p, s1)
            if recentered is not None:
                recenters_left -= 1
                p = OrthogonalParam(dim=d, upper=recentered, alpha=best_p.alpha)
                loss, _, grad_a = cov_loss_and_grads(s1, s0, p)
                if loss < best_loss:
                    best_p, best_loss = p, loss
            elif kicks_left > 0:
                kicks_left -= 1
                kick = kick_scale * (rng.uniform((m,)) - 0.5)
                kick_scale *= 2.0
                p = OrthogonalParam(dim=d, upper=best_p.upper + kick, alpha=best_p.alpha)
                loss, _, grad_a = cov_loss_and_grads(s1, s0, p)
            else:
                break
            stall = 0
            lr = lr0
            gu = skew_upper(grad_a)
            direction = -gu
        history.append(best_loss)
    return best_p, best_loss, history
