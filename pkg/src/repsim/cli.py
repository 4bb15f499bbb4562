"""Command-line entry points.

Eight subcommands: cka and align operate on NPY array files; pretrain,
finetune, sweep, sharpness, interpolate, and covstudy drive the
synthetic-task pipeline from a JSON config. Run commands write a CSV
(one row per epoch or trial) plus a JSON summary next to it, and echo
the summary to stdout. Nothing in the outputs depends on wall time, so
rerunning with the same seed reproduces files byte for byte.

Exit codes: 0 success, 2 usage, 3 validation or IO failure, 4 training
divergence. Failures print one line: error:<category>: <message>.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analysis import (
    SharpnessConfig,
    batch_cov_error,
    interpolation_path,
    sharpness,
    strict_betweenness,
)
from .checkpoint import (
    load_checkpoint,
    load_or_compute_sigma0,
    save_checkpoint,
    sigma0_cache_path,
)
from .config import ExperimentConfig, load_config
from .data import make_task_pair
from .errors import RepsimError, TrainingDivergedError
from .losses import fit_alignment
from .manifold import cov_stats, procrustes_oracle
from .npyio import read_npy
from .similarity import linear_cka
from .trainer import ModelDims, finetune, lambda_sweep, pretrain

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_DIVERGED = 4

COV_SYMMETRY_TOL = 1e-8


class _Parser(argparse.ArgumentParser):
    """argparse with the single-line usage-error contract."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"error:usage: {message}\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _round9(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    return obj


def _emit_summary(out_prefix, summary) -> None:
    text = json.dumps(_round9(summary), sort_keys=True) + "\n"
    if out_prefix:
        with open(out_prefix + ".json", "w", encoding="ascii") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    updates = {}
    for attr, key in (
        ("method", "method"), ("lam", "hcs_lambda"), ("lr", "lr"),
        ("epochs", "epochs"), ("batch_size", "batch_size"), ("rho", "rho"),
    ):
        v = getattr(args, attr, None)
        if v is not None:
            updates[key] = v
    if updates:
        cfg = cfg.with_updates(**updates)
    return cfg


def _task_fingerprint(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.to_dict()["task"], sort_keys=True).encode("ascii")
    return hashlib.sha256(blob).hexdigest()[:8]


def _int_list(text: str, flag: str):
    try:
        return [int(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise RepsimError(f"{flag} expects comma-separated integers, got {text!r}") from None


def _float_list(text: str, flag: str):
    try:
        return [float(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise RepsimError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def cmd_cka(args) -> int:
    fa, _ = read_npy(args.file_a)
    fb, _ = read_npy(args.file_b)
    sys.stdout.write(f"{linear_cka(fa, fb):.6f}\n")
    return EXIT_OK


def _as_covariance(path: str) -> np.ndarray:
    """Square symmetric file -> covariance as-is; anything else -> features."""
    arr, _ = read_npy(path)
    if arr.shape[0] == arr.shape[1] and arr.shape[0] > 0:
        if float(np.max(np.abs(arr - arr.T))) <= COV_SYMMETRY_TOL * max(1.0, float(np.max(np.abs(arr)))):
            return arr
    return cov_stats(arr).sigma


def cmd_align(args) -> int:
    s0 = _as_covariance(args.sigma0)
    s1 = _as_covariance(args.sigma1)
    _q_star, oracle_loss = procrustes_oracle(s0, s1)
    _param, learned_loss, history = fit_alignment(s0, s1, steps=args.steps)
    if args.out:
        _write_csv(args.out + ".csv", ["step", "loss"],
                   [(i, v) for i, v in enumerate(history)])
    _emit_summary(args.out, {
        "dim": int(s0.shape[0]),
        "gap": learned_loss - oracle_loss,
        "learned_loss": learned_loss,
        "oracle_loss": oracle_loss,
        "steps_taken": len(history) - 1,
    })
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _load_cfg(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    pair = make_task_pair(cfg.task, seed)
    dims = ModelDims(d_in=cfg.task.d_in)
    model, metrics = pretrain(pair, dims=dims, seed=seed)
    save_checkpoint(args.out + ".ckpt", model, seed=seed, method="pretrain")
    rows = [
        (e, metrics.train_loss[e], metrics.eval_acc[e])
        for e in range(len(metrics.train_loss))
    ]
    _write_csv(args.out + ".csv", ["epoch", "train_loss", "eval_acc"], rows)
    _emit_summary(args.out, {
        "checkpoint": args.out + ".ckpt",
        "epochs": len(rows),
        "final_acc": metrics.eval_acc[-1],
        "seed": seed,
    })
    return EXIT_OK


def _finetune_one(theta0, pair, cfg, seed, sigma0):
    res = finetune(theta0, pair, cfg.loss_config(), cfg.sgd_config(), seed=seed,
                   sigma0=sigma0)
    return seed, res


def cmd_finetune(args) -> int:
    cfg = _load_cfg(args)
    theta0, manifest = load_checkpoint(args.ckpt)
    data_seed = int(manifest["seed"])
    pair = make_task_pair(cfg.task, data_seed)
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)

    sigma0 = None
    if cfg.method == "repsim":
        cache = sigma0_cache_path(args.ckpt, manifest["param_hash"],
                                  tag=_task_fingerprint(cfg))
        sigma0 = load_or_compute_sigma0(cache, theta0, pair.finetune.x)

    jobs = max(1, args.jobs)
    if jobs == 1 or len(seeds) == 1:
        results = [_finetune_one(theta0, pair, cfg, s, sigma0) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_finetune_one, theta0, pair, cfg, s, sigma0)
                       for s in seeds]
            results = [f.result() for f in futures]
    results.sort(key=lambda r: r[0])

    rows = []
    finals = {}
    for seed, res in results:
        m = res.metrics
        for e in range(len(m.train_loss)):
            rows.append((seed, e, m.train_loss[e], m.eval_acc[e], m.eval_cka[e]))
        finals[str(seed)] = {"acc": m.eval_acc[-1], "cka": m.eval_cka[-1]}
        save_checkpoint(f"{args.out}.s{seed}.ckpt", res.model, seed=seed,
                        method=cfg.method)
    _write_csv(args.out + ".csv",
               ["seed", "epoch", "train_loss", "eval_acc", "eval_cka"], rows)
    accs = [v["acc"] for v in finals.values()]
    ckas = [v["cka"] for v in finals.values()]
    _emit_summary(args.out, {
        "mean_acc": float(np.mean(accs)),
        "mean_cka": float(np.mean(ckas)),
        "method": cfg.method,
        "per_seed": finals,
    })
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    lambdas = _float_list(args.lambdas, "--lambdas")
    theta0, manifest = load_checkpoint(args.ckpt)
    pair = make_task_pair(cfg.task, int(manifest["seed"]))
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    rows = lambda_sweep(theta0, pair, lambdas, cfg.sgd_config(), seed=seed)
    _write_csv(args.out + ".csv", ["lambda", "accuracy", "cka"], rows)
    _emit_summary(args.out, {
        "rows": [{"lambda": l, "accuracy": a, "cka": c} for l, a, c in rows],
        "seed": seed,
    })
    return EXIT_OK


def cmd_sharpness(args) -> int:
    cfg = _load_cfg(args)
    model, manifest = load_checkpoint(args.ckpt)
    pair = make_task_pair(cfg.task, int(manifest["seed"]))
    data = pair.pretrain_eval if manifest["method"] == "pretrain" else pair.finetune_eval
    scfg = SharpnessConfig(rho=cfg.rho, steps=args.steps)
    res = sharpness(model, data, scfg, loss=cfg.loss)
    _write_csv(args.out + ".csv",
               ["rho", "base_loss", "perturbed_loss", "sharpness"],
               [(scfg.rho, res.base_loss, res.perturbed_loss, res.sharpness)])
    _emit_summary(args.out, {
        "base_loss": res.base_loss,
        "degenerate": res.degenerate,
        "perturbed_loss": res.perturbed_loss,
        "rho": scfg.rho,
        "sharpness": res.sharpness,
    })
    return EXIT_OK


def cmd_interpolate(args) -> int:
    cfg = _load_cfg(args)
    theta_a, _ = load_checkpoint(args.ckpt_a)
    theta_b, _ = load_checkpoint(args.ckpt_b)
    theta0, manifest0 = load_checkpoint(args.ckpt0)
    pair = make_task_pair(cfg.task, int(manifest0["seed"]))
    rows = interpolation_path(theta_a, theta_b, theta0, pair.finetune_eval,
                              steps=args.steps, loss=cfg.loss)
    ok = strict_betweenness(rows)
    _write_csv(args.out + ".csv", ["t", "loss", "cka"], rows)
    _emit_summary(args.out, {
        "endpoint_a": {"cka": rows[0][2], "loss": rows[0][1]},
        "endpoint_b": {"cka": rows[-1][2], "loss": rows[-1][1]},
        "interior_strictly_between": bool(ok),
        "steps": args.steps,
    })
    return EXIT_OK


def cmd_covstudy(args) -> int:
    cfg = _load_cfg(args)
    theta0, manifest = load_checkpoint(args.ckpt)
    pair = make_task_pair(cfg.task, int(manifest["seed"]))
    sizes = _int_list(args.sizes, "--sizes")
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    rows = batch_cov_error(theta0, pair.finetune, sizes, args.trials, seed)
    _write_csv(args.out + ".csv", ["batch_size", "mean_error"], rows)
    _emit_summary(args.out, {
        "rows": [{"batch_size": s, "mean_error": e} for s, e in rows],
        "seed": seed,
        "trials": args.trials,
    })
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="repsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("cka", cmd_cka, "similarity between two NPY feature files")
    sp.add_argument("file_a")
    sp.add_argument("file_b")

    sp = add("align", cmd_align, "fit Q between two covariance/feature files")
    sp.add_argument("sigma0")
    sp.add_argument("sigma1")
    sp.add_argument("--steps", type=int, default=4000)
    sp.add_argument("--out", default=None)

    sp = add("pretrain", cmd_pretrain, "train the pretraining-task model")
    sp.add_argument("--config", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)

    sp = add("finetune", cmd_finetune, "finetune from a checkpoint")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--method", default=None,
                    choices=["scratch", "linear", "full", "hcs", "repsim"])
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("sweep", cmd_sweep, "HCS lambda sweep")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--lambdas", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)

    sp = add("sharpness", cmd_sharpness, "loss-surface sharpness of a checkpoint")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--rho", type=float, default=None)
    sp.add_argument("--steps", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("interpolate", cmd_interpolate, "linear path between two checkpoints")
    sp.add_argument("--ckpt-a", required=True)
    sp.add_argument("--ckpt-b", required=True)
    sp.add_argument("--ckpt0", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--steps", type=int, default=21)
    sp.add_argument("--out", required=True)

    sp = add("covstudy", cmd_covstudy, "batch-size covariance estimate study")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--sizes", default="4,32,128")
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TrainingDivergedError as exc:
        sys.stderr.write(f"error:divergence: {exc} (epoch {exc.epoch})\n")
        return EXIT_DIVERGED
    except (RepsimError, ValueError, OSError) as exc:
        sys.stderr.write(f"error:validation: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
