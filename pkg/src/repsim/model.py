"""Small tanh MLP with a linear classification head.

Layout is d_in -> d_hidden -> d_feat -> k. The tanh output of the
d_feat layer is the backbone feature matrix; every similarity quantity
(CKA, covariance stats) reads that tap, never the logits. Forward and
backward passes are written out longhand so the trainer stays free of
autodiff dependencies and finite-difference checks stay exact.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")
BACKBONE_NAMES = ("w1", "b1", "w2", "b2")


def _xavier(rng, d_in, d_out):
    limit = np.sqrt(6.0 / (d_in + d_out))
    return (rng.uniform((d_in, d_out)) * 2.0 - 1.0) * limit


class MlpModel:
    """Two tanh layers plus a linear head, parameters as plain arrays."""

    def __init__(self, d_in: int, d_hidden: int, d_feat: int, k: int, rng=None):
        for name, v in (("d_in", d_in), ("d_hidden", d_hidden), ("d_feat", d_feat), ("k", k)):
            if int(v) < 1:
                raise DimensionError(f"{name} must be >= 1, got {v}")
        self.d_in = int(d_in)
        self.d_hidden = int(d_hidden)
        self.d_feat = int(d_feat)
        self.k = int(k)
        if rng is None:
            self.w1 = np.zeros((self.d_in, self.d_hidden))
            self.w2 = np.zeros((self.d_hidden, self.d_feat))
            self.w3 = np.zeros((self.d_feat, self.k))
        else:
            self.w1 = _xavier(rng, self.d_in, self.d_hidden)
            self.w2 = _xavier(rng, self.d_hidden, self.d_feat)
            self.w3 = _xavier(rng, self.d_feat, self.k)
        self.b1 = np.zeros(self.d_hidden)
        self.b2 = np.zeros(self.d_feat)
        self.b3 = np.zeros(self.k)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.d_in, self.d_hidden, self.d_feat, self.k)

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise DimensionError(f"input shape {x.shape} incompatible with d_in={self.d_in}")
        return x

    def forward_full(self, x):
        """Return (h1, features, logits) keeping intermediates for backward."""
        x = self._check_input(x)
        h1 = np.tanh(x @ self.w1 + self.b1)
        f = np.tanh(h1 @ self.w2 + self.b2)
        z = f @ self.w3 + self.b3
        return h1, f, z

    def forward(self, x) -> np.ndarray:
        return self.forward_full(x)[2]

    def features(self, x) -> np.ndarray:
        return self.forward_full(x)[1]

    def backward(self, x, h1, f, grad_logits, grad_features=None):
        """Gradients of a scalar loss given dL/dlogits and optional dL/dfeatures.

        The tanh derivative reuses the stored activations (1 - a^2).
        """
        x = self._check_input(x)
        gz = np.asarray(grad_logits, dtype=np.float64)
        grads = {}
        grads["w3"] = f.T @ gz
        grads["b3"] = gz.sum(axis=0)
        gf = gz @ self.w3.T
        if grad_features is not None:
            gf = gf + np.asarray(grad_features, dtype=np.float64)
        gpre2 = gf * (1.0 - f * f)
        grads["w2"] = h1.T @ gpre2
        grads["b2"] = gpre2.sum(axis=0)
        gh1 = gpre2 @ self.w2.T
        gpre1 = gh1 * (1.0 - h1 * h1)
        grads["w1"] = x.T @ gpre1
        grads["b1"] = gpre1.sum(axis=0)
        return grads

    def sgd_step(self, grads, lr: float, names=PARAM_NAMES):
        for name in names:
            p = getattr(self, name)
            setattr(self, name, p - lr * grads[name])

    def reset_head(self, k: int, rng) -> None:
        """Fresh linear head for a new label space; backbone untouched."""
        self.k = int(k)
        self.w3 = _xavier(rng, self.d_feat, self.k)
        self.b3 = np.zeros(self.k)

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "MlpModel":
        out = MlpModel(self.d_in, self.d_hidden, self.d_feat, self.k)
        for name in PARAM_NAMES:
            setattr(out, name, getattr(self, name).copy())
        return out

    def flatten(self, names=PARAM_NAMES) -> np.ndarray:
        """Concatenate parameters in declaration order into one vector."""
        return np.concatenate([getattr(self, name).ravel() for name in names])

    def load_flat(self, vec, names=PARAM_NAMES) -> None:
        vec = np.asarray(vec, dtype=np.float64).ravel()
        total = sum(getattr(self, name).size for name in names)
        if vec.size != total:
            raise DimensionError(f"flat vector has {vec.size} entries, model needs {total}")
        pos = 0
        for name in names:
            p = getattr(self, name)
            setattr(self, name, vec[pos : pos + p.size].reshape(p.shape).copy())
            pos += p.size

    def backbone_flat(self) -> np.ndarray:
        return self.flatten(BACKBONE_NAMES)
