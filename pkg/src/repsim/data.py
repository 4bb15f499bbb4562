"""Synthetic two-task benchmark: Gaussian clusters with a hidden attribute.

The pretrain task labels coarse cluster identity. Each cluster also
carries a binary sub-attribute rendered as an offset along a per-cluster
direction orthogonal to the cluster center; pretraining has no reason to
keep that direction salient. The finetune task re-renders fresh samples
from the same latent structure through a partial rotation plus shift and
relabels them so the sub-attribute becomes decision-relevant. Plain
finetuning then reorganizes the representation, while covariance-anchored
finetuning has to solve the task without discarding the pretrained
geometry.

The finetune eval split is rendered through an extra rotation on top of
the train-side warp (eval_rot_tau), so eval metrics reward models that
generalize across acquisition drift rather than models tuned tightly to
the training rendering. Optional label noise corrupts only train labels;
eval labels always reflect the true latent structure. Every split
regenerates bit-exactly from the pair seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .manifold import OrthogonalParam, cayley
from .rng import SeededRng


@dataclass(frozen=True)
class TaskParams:
    """Shape and difficulty knobs for the synthetic pair.

    variant changes only the finetune-side rendering (warp and sample
    draws), never the pretrain splits, so several finetune sub-tasks can
    share one pretrained model.
    """

    d_in: int = 16
    k0: int = 4
    n0: int = 2048
    n0_eval: int = 512
    n1: int = 65536
    n1_eval: int = 2048
    radius: float = 6.0
    cluster_std: float = 0.8
    sub_offset: float = 2.8
    rot_tau: float = 0.05
    eval_rot_tau: float = 0.1
    shift_scale: float = 0.3
    label_noise: float = 0.0
    multilabel: bool = False
    variant: int = 0

    def __post_init__(self):
        if self.k0 < 2:
            raise ConfigError(f"k0 must be >= 2, got {self.k0}")
        if self.d_in < 4:
            raise ConfigError(f"d_in must be >= 4, got {self.d_in}")
        for name in ("n0", "n0_eval", "n1", "n1_eval"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2")
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigError(
                f"label_noise must be in [0, 1), got {self.label_noise}"
            )

    @property
    def k1(self) -> int:
        return 2 if self.multilabel else 4

    def with_updates(self, **kw) -> "TaskParams":
        return replace(self, **kw)


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    k: int

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass
class SyntheticTaskPair:
    pretrain: Dataset
    pretrain_eval: Dataset
    finetune: Dataset
    finetune_eval: Dataset
    seed: int
    params: TaskParams = field(repr=False, default=None)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _latent_geometry(params: TaskParams, rng: SeededRng):
    """Cluster centers on a sphere plus orthogonal sub-attribute directions."""
    centers = _unit_rows(rng.normal((params.k0, params.d_in))) * params.radius
    subs = rng.normal((params.k0, params.d_in))
    for i in range(params.k0):
        c = centers[i] / np.linalg.norm(centers[i])
        subs[i] -= (subs[i] @ c) * c
    return centers, _unit_rows(subs)


def _draw_latent(params: TaskParams, centers, subs, n: int, rng: SeededRng):
    coarse = rng.integers(0, params.k0, (n,))
    sub = rng.integers(0, 2, (n,))
    x = (
        centers[coarse]
        + params.sub_offset * (2.0 * sub - 1.0)[:, None] * subs[coarse]
        + params.cluster_std * rng.normal((n, params.d_in))
    )
    return x, coarse, sub


def _finetune_labels(params: TaskParams, coarse, sub):
    if params.multilabel:
        y = np.stack([coarse % 2, sub], axis=1).astype(np.float64)
        return y, 2
    return (2 * (coarse % 2) + sub).astype(np.int64), 4


def _corrupt_labels(params: TaskParams, y, k: int, rng: SeededRng):
    """Resample a label_noise fraction of training labels to wrong values.

    Only the finetune train split is corrupted; eval labels stay clean so
    metrics measure agreement with the true structure.
    """
    n = y.shape[0]
    mask = rng.uniform((n,)) < params.label_noise
    if params.multilabel:
        bit = rng.integers(0, 2, (n,))
        out = y.copy()
        rows = np.nonzero(mask)[0]
        out[rows, bit[rows]] = 1.0 - out[rows, bit[rows]]
        return out
    bump = rng.integers(1, k, (n,))
    return np.where(mask, (y + bump) % k, y).astype(np.int64)


def make_task_pair(params: TaskParams, seed: int) -> SyntheticTaskPair:
    """Generate the full pretrain/finetune pair for one seed."""
    root = SeededRng(seed)
    geom_rng = root.spawn(1)
    centers, subs = _latent_geometry(params, geom_rng)

    # Finetune-domain rendering: partial rotation plus a fixed shift.
    # Each variant gets its own warp and finetune draws via offset spawn
    # keys; pretrain keys stay fixed.
    offset = 100 * int(params.variant)
    warp_rng = root.spawn(2 + offset)
    d = params.d_in
    gen = warp_rng.normal((d, d))
    skew = params.rot_tau * (gen - gen.T) / 2.0
    iu = np.triu_indices(d, k=1)
    rot = cayley(OrthogonalParam(dim=d, upper=skew[iu]))
    shift = params.shift_scale * warp_rng.normal((d,))

    # The eval split can be rendered through an extra rotation on top of
    # the train warp, standing in for acquisition drift between the data
    # a model was tuned on and the data it is judged on.
    eval_rot = rot
    if params.eval_rot_tau > 0.0:
        gen2 = warp_rng.normal((d, d))
        skew2 = params.eval_rot_tau * (gen2 - gen2.T) / 2.0
        eval_rot = cayley(OrthogonalParam(dim=d, upper=skew2[iu])) @ rot

    def pretrain_split(key: int, n: int) -> Dataset:
        x, coarse, _sub = _draw_latent(params, centers, subs, n, root.spawn(key))
        return Dataset(x=x, y=coarse.astype(np.int64), k=params.k0)

    def finetune_split(key: int, n: int, noisy: bool = False, warp=rot) -> Dataset:
        x, coarse, sub = _draw_latent(params, centers, subs, n, root.spawn(key + offset))
        y, k = _finetune_labels(params, coarse, sub)
        if noisy and params.label_noise > 0.0:
            y = _corrupt_labels(params, y, k, root.spawn(7 + offset))
        return Dataset(x=x @ warp.T + shift, y=y, k=k)

    return SyntheticTaskPair(
        pretrain=pretrain_split(3, params.n0),
        pretrain_eval=pretrain_split(4, params.n0_eval),
        finetune=finetune_split(5, params.n1, noisy=True),
        finetune_eval=finetune_split(6, params.n1_eval, warp=eval_rot),
        seed=seed,
        params=params,
    )
