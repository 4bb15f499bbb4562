"""Training loop tests: metrics, regime equivalences, failure modes."""

import numpy as np
import pytest

from repsim import (
    LossConfig,
    MlpModel,
    SeededRng,
    SgdConfig,
    TaskParams,
    finetune,
    make_task_pair,
    pretrain,
    run_method,
)
from repsim.errors import (
    ConfigError,
    DimensionError,
    PretrainQualityError,
    TrainingDivergedError,
)
from repsim.manifold import cov_stats
from repsim.model import BACKBONE_NAMES
from repsim.trainer import (
    ModelDims,
    _epoch_batches,
    accuracy,
    eval_cka_to,
    lambda_sweep,
    mean_ap,
)

SMALL = TaskParams(n0=256, n0_eval=64, n1=512, n1_eval=128)
FAST = SgdConfig(lr=6e-4, batch_size=64, epochs=3)


@pytest.fixture(scope="module")
def setup():
    task = make_task_pair(SMALL, 0)
    theta0, _ = pretrain(task, seed=0)
    return task, theta0


def test_epoch_batches_cover_and_drop_short_tail():
    rng = SeededRng(0)
    batches = list(_epoch_batches(10, 4, rng))
    sizes = [b.size for b in batches]
    assert sizes == [4, 4, 2]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    rng = SeededRng(0)
    batches = list(_epoch_batches(9, 4, rng))
    assert [b.size for b in batches] == [4, 4]


def test_accuracy_ties_take_lowest_index():
    logits = np.array([[0.5, 0.5, 0.1], [0.2, 0.9, 0.9]])
    assert accuracy(logits, np.array([0, 1])) == 100.0
    assert accuracy(logits, np.array([1, 2])) == 0.0


def test_mean_ap_hand_value():
    scores = np.array([[3.0], [2.0], [1.0]])
    y = np.array([[1.0], [0.0], [1.0]])
    # precisions at the two hits: 1/1 and 2/3
    expected = 100.0 * (1.0 + 2.0 / 3.0) / 2.0
    assert abs(mean_ap(scores, y) - expected) < 1e-12


def test_mean_ap_skips_positive_free_columns():
    scores = np.array([[3.0, 9.0], [2.0, 8.0], [1.0, 7.0]])
    y = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    expected = 100.0 * (1.0 + 2.0 / 3.0) / 2.0
    assert abs(mean_ap(scores, y) - expected) < 1e-12


def test_mean_ap_all_columns_empty_raises():
    with pytest.raises(ValueError):
        mean_ap(np.ones((3, 2)), np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        mean_ap(np.ones((3, 2)), np.zeros((3, 3)))


def test_mean_ap_perfect_ranking():
    scores = np.array([[2.0, 0.1], [1.0, 0.3], [0.0, 0.2]])
    y = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    assert abs(mean_ap(scores, y) - 100.0) < 1e-12


def test_eval_cka_in_unit_range(setup):
    task, theta0 = setup
    other = MlpModel(16, 32, 16, 4, rng=SeededRng(99))
    v = eval_cka_to(other, theta0, task.finetune_eval.x)
    assert 0.0 <= v <= 1.0


def test_pretrain_reaches_threshold_and_is_deterministic(setup):
    task, theta0 = setup
    again, metrics = pretrain(task, seed=0)
    assert np.array_equal(theta0.flatten(), again.flatten())
    assert metrics.eval_acc[-1] >= 90.0
    assert len(metrics.train_loss) == len(metrics.eval_acc)


def test_pretrain_quality_error():
    task = make_task_pair(SMALL, 0)
    with pytest.raises(PretrainQualityError):
        pretrain(task, seed=0, epochs=3, threshold=100.5)


def test_pretrain_dim_mismatch():
    task = make_task_pair(SMALL, 0)
    with pytest.raises(DimensionError):
        pretrain(task, dims=ModelDims(d_in=8), seed=0)


def test_hcs_lambda_one_matches_full_bit_for_bit(setup):
    task, theta0 = setup
    full = run_method(theta0, task, "full", opt=FAST, seed=1)
    hcs1 = run_method(theta0, task, "hcs", opt=FAST, seed=1, hcs_lambda=1.0)
    assert np.array_equal(full.metrics.final_params, hcs1.metrics.final_params)
    assert full.metrics.eval_acc == hcs1.metrics.eval_acc
    assert full.metrics.eval_cka == hcs1.metrics.eval_cka


def test_repsim_zero_weight_matches_full_bit_for_bit(setup):
    task, theta0 = setup
    full = run_method(theta0, task, "full", opt=FAST, seed=1)
    rep0 = run_method(theta0, task, "repsim", opt=FAST, seed=1, cov_weight=0.0)
    assert np.array_equal(full.metrics.final_params, rep0.metrics.final_params)
    assert rep0.metrics.final_cov_loss is None


def test_repsim_records_final_cov_loss(setup):
    task, theta0 = setup
    rep = run_method(theta0, task, "repsim", opt=FAST, seed=1)
    assert rep.metrics.final_cov_loss is not None
    assert rep.metrics.final_cov_loss >= 0.0
    assert rep.q is not None
    full = run_method(theta0, task, "full", opt=FAST, seed=1)
    assert full.metrics.final_cov_loss is None
    assert full.q is None


def test_repsim_precomputed_sigma0_is_equivalent(setup):
    task, theta0 = setup
    cfg = LossConfig(method="repsim")
    lazy = finetune(theta0, task, cfg, opt=FAST, seed=2)
    sigma0 = cov_stats(theta0.features(task.finetune.x))
    eager = finetune(theta0, task, cfg, opt=FAST, seed=2, sigma0=sigma0)
    assert np.array_equal(lazy.metrics.final_params, eager.metrics.final_params)


def test_linear_freezes_backbone(setup):
    task, theta0 = setup
    lin = run_method(theta0, task, "linear", opt=FAST, seed=1)
    assert np.array_equal(lin.model.backbone_flat(), theta0.backbone_flat())
    assert not np.array_equal(lin.model.w3, theta0.w3)


def test_scratch_ignores_pretrained_weights(setup):
    task, theta0 = setup
    scr = run_method(theta0, task, "scratch", opt=FAST, seed=1)
    assert not np.array_equal(scr.model.backbone_flat(), theta0.backbone_flat())
    assert scr.model.dims == theta0.dims


def test_full_changes_backbone(setup):
    task, theta0 = setup
    full = run_method(theta0, task, "full", opt=FAST, seed=1)
    assert not np.array_equal(full.model.backbone_flat(), theta0.backbone_flat())


def test_methods_share_head_init(setup):
    # every pretrained-start regime reinitializes the head from the same
    # spawned stream, so cross-method differences come from the objective
    task, theta0 = setup
    one_epoch = SgdConfig(lr=1e-12, batch_size=64, epochs=1)
    full = run_method(theta0, task, "full", opt=one_epoch, seed=3)
    hcs = run_method(theta0, task, "hcs", opt=one_epoch, seed=3, hcs_lambda=0.5)
    assert np.allclose(full.model.w3, hcs.model.w3, atol=1e-9)


def test_training_diverged_error(setup):
    task, theta0 = setup
    # squared error grows multiplicatively under a huge step size, so the
    # loss overflows; cross-entropy only grows linearly in the logits
    hot = SgdConfig(lr=1e9, batch_size=64, epochs=10)
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingDivergedError) as err:
            run_method(theta0, task, "full", opt=hot, seed=1, cls_loss="mse")
    assert isinstance(err.value.epoch, int)
    assert 0 <= err.value.epoch < 10


def test_lambda_sweep_sorted_and_endpoint_matches_full(setup):
    task, theta0 = setup
    rows = lambda_sweep(theta0, task, [1.0, 0.0, 0.5], opt=FAST, seed=1)
    assert [r[0] for r in rows] == [0.0, 0.5, 1.0]
    full = run_method(theta0, task, "full", opt=FAST, seed=1)
    assert rows[-1][1] == full.metrics.eval_acc[-1]
    assert rows[-1][2] == full.metrics.eval_cka[-1]


def test_multilabel_finetune_reports_map():
    task = make_task_pair(SMALL.with_updates(multilabel=True), 0)
    theta0, _ = pretrain(task, seed=0)
    # binary cross-entropy dispatches on the 2-D float target matrix
    res = finetune(theta0, task, LossConfig(method="full"), opt=FAST, seed=1)
    assert res.model.k == 2
    assert 0.0 <= res.metrics.eval_acc[-1] <= 100.0


def test_sgd_config_validation():
    with pytest.raises(ConfigError):
        SgdConfig(lr=0.0)
    with pytest.raises(ConfigError):
        SgdConfig(batch_size=1)
    with pytest.raises(ConfigError):
        SgdConfig(epochs=0)


def test_finetune_dim_mismatch(setup):
    task, theta0 = setup
    wrong = make_task_pair(SMALL.with_updates(d_in=8), 0)
    with pytest.raises(DimensionError):
        run_method(theta0, wrong, "full", opt=FAST, seed=1)
