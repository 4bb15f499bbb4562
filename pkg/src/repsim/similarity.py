"""Feature centering and linear CKA with its exact gradient.

CKA is computed from explicitly formed centered Gram matrices
F_c F_c^T; at the sample counts used here (a few hundred) the n x n
cost is negligible and keeps the code aligned with the defining
formula. Features must come from the last backbone layer, never
logits.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateFeaturesError, DimensionError, InsufficientSamplesError
from .linalg import as_matrix

GRAM_NORM_FLOOR = 1e-12


def as_features(x, name: str = "features") -> np.ndarray:
    """Validate an n x d feature matrix (n >= 2, finite entries)."""
    f = as_matrix(x, name)
    if f.shape[0] < 2:
        raise InsufficientSamplesError(f"{name}: need at least 2 samples, got {f.shape[0]}")
    return f


def center(f) -> np.ndarray:
    """Subtract the column mean from every row."""
    f = as_features(f)
    return f - f.mean(axis=0, keepdims=True)


def _centered_grams(f0, f1) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    f0 = as_features(f0, "f0")
    f1 = as_features(f1, "f1")
    if f0.shape[0] != f1.shape[0]:
        raise DimensionError(f"sample-count mismatch: {f0.shape[0]} vs {f1.shape[0]}")
    f0c = f0 - f0.mean(axis=0, keepdims=True)
    f1c = f1 - f1.mean(axis=0, keepdims=True)
    g0 = f0c @ f0c.T
    g1 = f1c @ f1c.T
    for name, g in (("f0", g0), ("f1", g1)):
        if np.linalg.norm(g) < GRAM_NORM_FLOOR:
            raise DegenerateFeaturesError(f"{name}: centered Gram is numerically zero")
    return f0c, f1c, g0, g1


def linear_cka(f0, f1) -> float:
    """Linear CKA between two feature matrices over the same samples.

    <G0, G1>_F / (||G0||_F ||G1||_F) with centered Grams; the value lies
    in [0, 1], is symmetric, and is invariant to orthogonal transforms
    and isotropic scaling of either argument.
    """
    _, _, g0, g1 = _centered_grams(f0, f1)
    num = float(np.sum(g0 * g1))
    return num / (float(np.linalg.norm(g0)) * float(np.linalg.norm(g1)))


def cka_loss_and_grad(f0_fixed, f1) -> tuple[float, np.ndarray]:
    """Dissimilarity 1 - CKA(f0, f1) and its gradient with respect to f1.

    f0 is treated as a constant (the frozen pretrained features).
    """
    _, f1c, g0, g1 = _centered_grams(f0_fixed, f1)
    num = float(np.sum(g0 * g1))
    n0 = float(np.linalg.norm(g0))
    n1 = float(np.linalg.norm(g1))
    loss = 1.0 - num / (n0 * n1)
    # d(1 - C/(n0 n1))/dF1 with G1 = F1c F1c^T; centering projections
    # vanish because G0 F1c and G1 F1c are already column-centered.
    grad = (2.0 / (n0 * n1)) * ((num / (n1 * n1)) * (g1 @ f1c) - g0 @ f1c)
    return loss, grad
