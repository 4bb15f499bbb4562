"""Post-training diagnostics.

Sharpness probes the loss surface with a normalized-gradient ascent step
of radius rho; centrality measures spread of finetuned parameter vectors
around their mean; the interpolation path walks the straight line
between two finetuned models; the covariance study quantifies how batch
size degrades the minibatch estimate of the feature covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, DimensionError
from .linalg import frobenius_dist_sq
from .losses import cls_loss_and_grad
from .manifold import cov_stats
from .model import PARAM_NAMES, MlpModel
from .rng import SeededRng
from .similarity import linear_cka


@dataclass(frozen=True)
class SharpnessConfig:
    rho: float = 0.01
    steps: int = 1

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")


@dataclass
class SharpnessResult:
    perturbed_loss: float
    base_loss: float
    sharpness: float
    degenerate: bool = False


def sharpness_of(loss_and_grad, theta, rho: float, steps: int = 1) -> SharpnessResult:
    """Worst-case loss increase within radius rho around a parameter vector.

    loss_and_grad maps a flat vector to (loss, grad). The maximizer is
    approximated by one normalized-gradient step, then steps-1 projected
    ascent refinements; the best perturbation seen wins, so more steps
    never report less. A zero gradient at theta means the probe has no
    ascent direction; that returns sharpness 0 flagged as degenerate.
    """
    if not rho > 0:
        raise ConfigError(f"rho must be positive, got {rho}")
    theta = np.asarray(theta, dtype=np.float64).ravel()
    base, g = loss_and_grad(theta)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return SharpnessResult(base, base, 0.0, degenerate=True)

    eps = rho * g / gnorm
    best = float(loss_and_grad(theta + eps)[0])
    for _ in range(steps - 1):
        _, gp = loss_and_grad(theta + eps)
        gpnorm = float(np.linalg.norm(gp))
        if gpnorm == 0.0:
            break
        eps = eps + rho * gp / gpnorm
        eps = eps * (rho / float(np.linalg.norm(eps)))
        cand = float(loss_and_grad(theta + eps)[0])
        if cand > best:
            best = cand
    return SharpnessResult(best, float(base), float(best - base), degenerate=False)


def _model_cls_objective(model: MlpModel, x, y, loss: str = "ce"):
    """Flat-vector classification objective over a fixed probe batch."""
    probe = model.copy()

    def fn(vec):
        probe.load_flat(vec)
        h1, f, z = probe.forward_full(x)
        value, gz = cls_loss_and_grad(z, y, loss=loss)
        grads = probe.backward(x, h1, f, gz)
        return value, np.concatenate([grads[n].ravel() for n in PARAM_NAMES])

    return fn


def sharpness(model: MlpModel, data: Dataset, cfg: SharpnessConfig = SharpnessConfig(),
              loss: str = "ce") -> SharpnessResult:
    """Sharpness of the classification loss around a trained model."""
    fn = _model_cls_objective(model, data.x, data.y, loss=loss)
    return sharpness_of(fn, model.flatten(), cfg.rho, cfg.steps)


def param_centrality(models, backbone_only: bool = False):
    """Distance of each parameter vector to the mean of all of them."""
    if len(models) < 2:
        raise ConfigError(f"need at least 2 models, got {len(models)}")
    dims = models[0].dims
    for m in models[1:]:
        if m.dims != dims:
            raise DimensionError(f"model dims differ: {m.dims} vs {dims}")
    vecs = np.stack([
        m.backbone_flat() if backbone_only else m.flatten() for m in models
    ])
    center = vecs.mean(axis=0)
    return [float(np.linalg.norm(v - center)) for v in vecs]


def interpolation_path(theta_a: MlpModel, theta_b: MlpModel, theta0: MlpModel,
                       data: Dataset, steps: int = 21, loss: str = "ce"):
    """Losses and similarities along the straight line between two models.

    Returns a list of (t, loss, cka) rows over a uniform grid including
    both endpoints; endpoints evaluate the unmixed parameter vectors.
    """
    if steps < 3:
        raise ConfigError(f"steps must be >= 3, got {steps}")
    if theta_a.dims != theta_b.dims:
        raise DimensionError(f"model dims differ: {theta_a.dims} vs {theta_b.dims}")
    va, vb = theta_a.flatten(), theta_b.flatten()
    f0 = theta0.features(data.x)
    probe = theta_a.copy()
    rows = []
    for t in np.linspace(0.0, 1.0, steps):
        t = float(t)
        if t == 0.0:
            vec = va
        elif t == 1.0:
            vec = vb
        else:
            vec = (1.0 - t) * va + t * vb
        probe.load_flat(vec)
        z = probe.forward(data.x)
        value, _ = cls_loss_and_grad(z, data.y, loss=loss)
        cka = linear_cka(f0, probe.features(data.x))
        rows.append((t, float(value), float(cka)))
    return rows


def strict_betweenness(rows) -> bool:
    """Whether some interior point lies strictly between both endpoint values."""
    if len(rows) < 3:
        return False
    _, loss_a, cka_a = rows[0]
    _, loss_b, cka_b = rows[-1]
    lo_l, hi_l = min(loss_a, loss_b), max(loss_a, loss_b)
    lo_c, hi_c = min(cka_a, cka_b), max(cka_a, cka_b)
    for _, l, c in rows[1:-1]:
        if lo_l < l < hi_l and lo_c < c < hi_c:
            return True
    return False


def batch_cov_error(theta0: MlpModel, data: Dataset, batch_sizes, trials: int, seed: int):
    """Mean Frobenius gap between minibatch and full-dataset covariance.

    For each batch size, draws `trials` random sample subsets (without
    replacement, indices sorted so the full-size case is exact) and
    averages ||Sigma_batch - Sigma_full||_F.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    feats = theta0.features(data.x)
    n = feats.shape[0]
    sizes = [int(s) for s in batch_sizes]
    for s in sizes:
        if s < 2 or s > n:
            raise ValueError(f"batch size {s} out of range [2, {n}]")
    sigma_full = cov_stats(feats).sigma
    root = SeededRng(seed)
    rows = []
    for i, s in enumerate(sizes):
        errs = []
        for j in range(trials):
            trial_rng = root.spawn(1000 * (i + 1) + j)
            idx = np.sort(trial_rng.permutation(n)[:s])
            sigma_b = cov_stats(feats[idx]).sigma
            errs.append(np.sqrt(frobenius_dist_sq(sigma_b, sigma_full)))
        rows.append((s, float(np.mean(errs))))
    return rows
