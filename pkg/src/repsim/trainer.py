"""Pretrain/finetune pipeline over the synthetic task pair.

Five finetune regimes share one SGD loop: scratch reinitializes
everything, linear freezes the backbone, full trains all parameters on
the task loss alone, hcs adds a per-batch CKA penalty against the frozen
pretrained features, and repsim adds the covariance-alignment penalty
with its skew generator trained jointly. The degenerate settings
(hcs with lambda=1, repsim with zero covariance weight) take the plain
full-finetune branch so their trajectories match it bit for bit.

Trailing minibatches with fewer than two samples are dropped; batch
statistics are undefined there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SyntheticTaskPair
from .errors import ConfigError, DimensionError, PretrainQualityError, TrainingDivergedError
from .losses import LossConfig, cls_loss_and_grad, cov_loss_and_grads, mu_loss_and_grads
from .manifold import CovarianceStats, OrthogonalParam, cov_stats, skew_upper, stats_backprop
from .model import MlpModel
from .rng import SeededRng
from .similarity import cka_loss_and_grad, linear_cka


@dataclass(frozen=True)
class SgdConfig:
    """Plain SGD hyperparameters; finetune defaults follow the toolkit config."""

    lr: float = 6e-4
    batch_size: int = 128
    epochs: int = 50

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class ModelDims:
    d_in: int = 16
    d_hidden: int = 32
    d_feat: int = 16


PRETRAIN_LR = 0.05
PRETRAIN_EPOCHS = 120
PRETRAIN_ACC_THRESHOLD = 90.0


@dataclass
class RunMetrics:
    """Per-epoch curves plus the final parameter snapshot.

    final_cov_loss is the full-train-set covariance gap at the end of a
    covariance-regularized run; None for every other method.
    """

    train_loss: list = field(default_factory=list)
    eval_acc: list = field(default_factory=list)
    eval_cka: list = field(default_factory=list)
    final_params: np.ndarray = None
    sharpness: float = None
    final_cov_loss: float = None


@dataclass
class FinetuneResult:
    model: MlpModel
    q: OrthogonalParam
    metrics: RunMetrics


def accuracy(logits, y) -> float:
    """Percent correct; argmax ties resolve to the lowest class index."""
    pred = np.argmax(logits, axis=1)
    return 100.0 * float(np.mean(pred == np.asarray(y)))


def mean_ap(scores, y) -> float:
    """Mean average precision in percent over the label columns.

    Ranking ties break by sample index (stable sort). Columns without a
    single positive are excluded from the mean.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if scores.shape != y.shape:
        raise DimensionError(f"scores shape {scores.shape} vs labels {y.shape}")
    aps = []
    for j in range(scores.shape[1]):
        col = y[:, j]
        total = col.sum()
        if total == 0:
            continue
        order = np.argsort(-scores[:, j], kind="stable")
        hits = col[order]
        cum = np.cumsum(hits)
        ranks = np.arange(1, hits.size + 1)
        precision = cum / ranks
        aps.append(float((precision * hits).sum() / total))
    if not aps:
        raise ValueError("no label column has a positive sample")
    return 100.0 * float(np.mean(aps))


def eval_score(model: MlpModel, data: Dataset) -> float:
    logits = model.forward(data.x)
    if data.y.ndim == 2:
        return mean_ap(logits, data.y)
    return accuracy(logits, data.y)


def eval_cka_to(model: MlpModel, reference: MlpModel, x) -> float:
    v = linear_cka(reference.features(x), model.features(x))
    return float(min(max(v, 0.0), 1.0))


def _epoch_batches(n: int, batch_size: int, rng: SeededRng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        if idx.size >= 2:
            yield idx


def batch_loss_and_grads(model, xb, yb, loss_cfg, f0_batch=None, sigma0=None, q=None):
    """Objective value and gradients for one minibatch.

    Returns (total, cls_loss, grads, grad_upper). grads covers the model
    parameters; grad_upper is the skew-generator gradient or None. Which
    penalty contributes follows loss_cfg, with lambda=1 and zero
    covariance weight collapsing to the bare task loss.
    """
    use_cka = loss_cfg.method == "hcs" and loss_cfg.hcs_lambda < 1.0
    use_cov = loss_cfg.method == "repsim" and loss_cfg.cov_weight > 0.0

    h1, f, z = model.forward_full(xb)
    cls_loss, gz = cls_loss_and_grad(z, yb, loss=loss_cfg.cls_loss)
    total = cls_loss
    grad_feat = None
    grad_upper = None

    if use_cka:
        lam = loss_cfg.hcs_lambda
        sim_loss, gfeat = cka_loss_and_grad(f0_batch, f)
        total = lam * cls_loss + (1.0 - lam) * sim_loss
        gz = lam * gz
        grad_feat = (1.0 - lam) * gfeat
    elif use_cov:
        w = loss_cfg.cov_weight
        stats1 = cov_stats(f)
        cov_l, gsig, ga = cov_loss_and_grads(stats1, sigma0, q)
        total = cls_loss + w * cov_l
        gmu = None
        if loss_cfg.mu_align:
            mu_l, gmu_raw, ga_mu = mu_loss_and_grads(stats1, sigma0, q)
            total += w * mu_l
            gmu = w * gmu_raw
            ga = ga + ga_mu
        grad_feat = stats_backprop(f, w * gsig, gmu)
        if loss_cfg.learnable_q:
            grad_upper = w * skew_upper(ga)

    grads = model.backward(xb, h1, f, gz, grad_feat)
    return total, cls_loss, grads, grad_upper


def pretrain(
    task: SyntheticTaskPair,
    dims: ModelDims = ModelDims(),
    seed: int = 0,
    lr: float = PRETRAIN_LR,
    epochs: int = PRETRAIN_EPOCHS,
    batch_size: int = 128,
    threshold: float = PRETRAIN_ACC_THRESHOLD,
):
    """Train the backbone on the coarse-cluster task; error if it stays weak.

    A weak pretrained model would invalidate every similarity comparison
    downstream, so falling short of the accuracy threshold raises.
    """
    train, test = task.pretrain, task.pretrain_eval
    if train.x.shape[1] != dims.d_in:
        raise DimensionError(f"task d_in {train.x.shape[1]} vs model d_in {dims.d_in}")
    root = SeededRng(seed)
    model = MlpModel(dims.d_in, dims.d_hidden, dims.d_feat, train.k, rng=root.spawn(1))
    shuffle = root.spawn(2)
    metrics = RunMetrics()
    for epoch in range(epochs):
        losses = []
        for idx in _epoch_batches(train.n, batch_size, shuffle):
            xb, yb = train.x[idx], train.y[idx]
            h1, f, z = model.forward_full(xb)
            loss, gz = cls_loss_and_grad(z, yb)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"pretrain loss became {loss}", epoch)
            grads = model.backward(xb, h1, f, gz)
            model.sgd_step(grads, lr)
            losses.append(loss)
        metrics.train_loss.append(float(np.mean(losses)))
        metrics.eval_acc.append(eval_score(model, test))
        metrics.eval_cka.append(1.0)
    if metrics.eval_acc[-1] < threshold:
        raise PretrainQualityError(
            f"pretrain accuracy {metrics.eval_acc[-1]:.2f}% below {threshold}% "
            f"after {epochs} epochs"
        )
    metrics.final_params = model.flatten()
    return model, metrics


def finetune(
    theta0: MlpModel,
    task: SyntheticTaskPair,
    loss_cfg: LossConfig,
    opt: SgdConfig = SgdConfig(),
    seed: int = 0,
    sigma0: CovarianceStats = None,
) -> FinetuneResult:
    """Run one finetune regime against the pretrained reference.

    scratch ignores the pretrained weights (fresh init, same dims) but
    still reports similarity to them; linear leaves the backbone arrays
    untouched. A precomputed sigma0 (e.g. from the checkpoint-side
    cache) skips the full-dataset feature pass; values must match what
    cov_stats would produce.
    """
    train, test = task.finetune, task.finetune_eval
    if train.x.shape[1] != theta0.d_in:
        raise DimensionError(f"task d_in {train.x.shape[1]} vs model d_in {theta0.d_in}")

    method = loss_cfg.method
    root = SeededRng(seed)
    init_rng = root.spawn(1)
    shuffle = root.spawn(2)

    if method == "scratch":
        model = MlpModel(theta0.d_in, theta0.d_hidden, theta0.d_feat, train.k, rng=init_rng)
    else:
        model = theta0.copy()
        model.reset_head(train.k, init_rng)

    trained = ("w3", "b3") if method == "linear" else ("w1", "b1", "w2", "b2", "w3", "b3")

    use_cka = method == "hcs" and loss_cfg.hcs_lambda < 1.0
    use_cov = method == "repsim" and loss_cfg.cov_weight > 0.0
    f0_train = theta0.features(train.x) if use_cka else None
    if use_cov and sigma0 is None:
        sigma0 = cov_stats(theta0.features(train.x))
    q = OrthogonalParam(dim=theta0.d_feat) if use_cov else None

    metrics = RunMetrics()
    for epoch in range(opt.epochs):
        cls_losses = []
        for idx in _epoch_batches(train.n, opt.batch_size, shuffle):
            xb, yb = train.x[idx], train.y[idx]
            f0_b = f0_train[idx] if use_cka else None
            total, cls_loss, grads, grad_upper = batch_loss_and_grads(
                model, xb, yb, loss_cfg, f0_batch=f0_b, sigma0=sigma0, q=q
            )
            if not np.isfinite(total):
                raise TrainingDivergedError(f"{method} loss became {total}", epoch)
            model.sgd_step(grads, opt.lr, names=trained)
            if grad_upper is not None:
                q.upper = q.upper - opt.lr * grad_upper
            cls_losses.append(cls_loss)

        metrics.train_loss.append(float(np.mean(cls_losses)))
        metrics.eval_acc.append(eval_score(model, test))
        metrics.eval_cka.append(eval_cka_to(model, theta0, test.x))
    metrics.final_params = model.flatten()
    if use_cov:
        final_stats = cov_stats(model.features(train.x))
        metrics.final_cov_loss = cov_loss_and_grads(final_stats, sigma0, q)[0]
    return FinetuneResult(model=model, q=q, metrics=metrics)


def run_method(
    theta0: MlpModel,
    task: SyntheticTaskPair,
    method: str,
    opt: SgdConfig = SgdConfig(),
    seed: int = 0,
    **loss_kw,
) -> FinetuneResult:
    """Convenience entry point covering all five regimes uniformly."""
    cfg = LossConfig(method=method, **loss_kw)
    return finetune(theta0, task, cfg, opt, seed)


def lambda_sweep(
    theta0: MlpModel,
    task: SyntheticTaskPair,
    lambdas,
    opt: SgdConfig = SgdConfig(),
    seed: int = 0,
):
    """One HCS finetune per lambda under equal seeds; rows sorted by lambda."""
    rows = []
    for lam in sorted(float(v) for v in lambdas):
        cfg = LossConfig(method="hcs", hcs_lambda=lam)
        res = finetune(theta0, task, cfg, opt, seed)
        rows.append((lam, res.metrics.eval_acc[-1], res.metrics.eval_cka[-1]))
    return rows
