"""Training runs and sweep protocols.

A run is a pure function of its TrainConfig: dataset synthesis/split,
weight init, batch order, and filter resets each draw from separate
seeded streams, so repeating a config reproduces every byte of output.
Completed runs are recognized by config hash and not recomputed, which
makes sweeps resumable and lets paired conditions share baselines.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import BatchPlan, load_cifar10_binary, load_idx, split_50_50, synth_craters
from .metrics import MetricsRecord, read_metrics, read_summary, write_metrics, write_summary
from .model import filter_groups
from .models import ModelSpec, build_from_spec
from .optim import make_optimizer
from .regularizer import RandomOutConfig, cgn, scan_and_reset
from .rng import derive_stream

# Added to the first conv layer's bias by dead_first_layer; large enough to
# keep every pre-activation negative for any Xavier draw at widths 1..10.
DEAD_BIAS_OFFSET = -10.0
# A run counts as failed when its final accuracy beats chance by less than this.
FAIL_MARGIN = 0.05


def load_dataset_pair(cfg):
    ds = cfg.dataset
    if ds.kind == "synth":
        pool = synth_craters(ds.n_pos, ds.n_neg, cfg.seed)
    elif ds.kind == "idx":
        pool = load_idx(ds.paths[0], ds.paths[1])
    else:
        pool = load_cifar10_binary(ds.paths[0], ds.max_per_class)
    return split_50_50(pool, cfg.seed)


def build_for(cfg, train):
    spec = ModelSpec(
        name=cfg.model.name,
        width=cfg.model.width,
        with_batchnorm=cfg.condition == "batchnorm",
        num_classes=train.num_classes,
        input_shape=tuple(train.sample_shape),
    )
    model = build_from_spec(spec, derive_stream(cfg.seed, "init"))
    if cfg.dead_first_layer:
        groups = filter_groups(model)
        first = min(g.layer_id for g in groups)
        bias = next(g.bias_param for g in groups if g.layer_id == first)
        bias.value += DEAD_BIAS_OFFSET
    return model


def chance_level(labels, num_classes):
    """Majority-class rate: the accuracy of a constant prediction."""
    counts = np.bincount(labels, minlength=num_classes)
    return float(counts.max() / counts.sum())


def evaluate(model, dataset, batch_size=256):
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.images[start : start + batch_size]
        logits, _ = model.forward(x, mode="eval")
        correct += int(np.sum(np.argmax(logits, axis=1) == dataset.labels[start : start + batch_size]))
    return correct / len(dataset)


@dataclass
class RunResult:
    config: TrainConfig
    run_dir: str
    summary: dict
    records: list


def effective_acc(summary):
    """Final accuracy with divergent runs scored at chance."""
    if summary["diverged"] or summary["final_test_acc"] is None:
        return summary["chance"]
    return summary["final_test_acc"]


def run_training(cfg, out_dir, force=False):
    """Execute one training run; reuse the artifact if it already exists.

    Per batch: forward, backward, telemetry, optional reset scan, optimizer
    step. Per epoch: test evaluation recorded on the epoch's last row. A
    non-finite loss marks the run divergent and halts it without raising.
    """

    run_dir = Path(out_dir) / cfg.config_hash()
    metrics_path = run_dir / "metrics.csv"
    summary_path = run_dir / "summary.json"
    if not force and summary_path.exists():
        return RunResult(cfg, str(run_dir), read_summary(summary_path), read_metrics(metrics_path))

    train, test = load_dataset_pair(cfg)
    model = build_for(cfg, train)
    groups = filter_groups(model)
    optimizer = make_optimizer(cfg.optimizer, model.params, cfg.lr)
    ro_cfg = ro_rng = None
    if cfg.condition == "randomout":
        rc = cfg.randomout
        ro_cfg = RandomOutConfig(rc.tau, rc.p_active, rc.check_every)
        ro_rng = derive_stream(cfg.seed, "randomout")

    plan = BatchPlan(len(train), cfg.epochs, cfg.batch_size, cfg.seed)
    records = []
    events = []
    diverged = False
    done = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            for batch_no, idx in enumerate(plan.batches(epoch)):
                logits, cache = model.forward(train.images[idx], mode="train")
                loss = model.backward(cache, train.labels[idx])
                train_acc = float(np.mean(np.argmax(logits, axis=1) == train.labels[idx]))
                if not math.isfinite(loss):
                    records.append(MetricsRecord(epoch, batch_no, loss, train_acc, None, 0.0, 0, 0, True))
                    diverged = True
                    break
                scores = [cgn(g) for g in groups]
                mean_cgn = float(np.mean(scores))
                below = sum(1 for s in scores if s < cfg.telemetry_tau)
                resets = 0
                if ro_cfg is not None and done % ro_cfg.check_every == 0:
                    new = scan_and_reset(model, optimizer, ro_cfg, done / plan.total_batches, ro_rng, epoch, batch_no)
                    events.extend(new)
                    resets = len(new)
                optimizer.step()
                model.zero_grads()
                records.append(MetricsRecord(epoch, batch_no, loss, train_acc, None, mean_cgn, below, resets, False))
                done += 1
            if diverged:
                break
            records[-1].test_acc = evaluate(model, test)

    final_acc = None if diverged else records[-1].test_acc
    chance = chance_level(test.labels, test.num_classes)
    summary = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "condition": cfg.condition,
        "seed": cfg.seed,
        "n_train": len(train),
        "n_test": len(test),
        "filter_count": len(groups),
        "chance": chance,
        "batches_completed": done,
        "final_test_acc": final_acc,
        "diverged": diverged,
        "failed": diverged or final_acc < chance + FAIL_MARGIN,
        "total_resets": len(events),
    }
    run_dir.mkdir(parents=True, exist_ok=True)
    write_metrics(metrics_path, records)
    with open(run_dir / "resets.csv", "w") as f:
        f.write("epoch,batch,layer_id,filter_index,cgn_before\n")
        for e in events:
            f.write(f"{e.epoch},{e.batch},{e.layer_id},{e.filter_index},{e.cgn_before!r}\n")
    with open(run_dir / "config.json", "w") as f:
        f.write(cfg.canonical_json() + "\n")
    write_summary(summary_path, summary)
    return RunResult(cfg, str(run_dir), summary, records)


def _run_one(args):
    cfg, out_dir = args
    return run_training(cfg, out_dir)


def _run_many(cfgs, out_dir, jobs=1):
    """Run configs (deduplicated by hash) and return results in input order."""
    unique = {}
    for cfg in cfgs:
        unique.setdefault(cfg.config_hash(), cfg)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_one, [(c, out_dir) for c in unique.values()]))
        by_hash = {r.summary["config_hash"]: r for r in done}
    else:
        by_hash = {h: run_training(c, out_dir) for h, c in unique.items()}
    return [by_hash[cfg.config_hash()] for cfg in cfgs]


def _stats(values):
    arr = np.asarray(values, dtype=float)
    return {
        "mean": float(arr.mean()),
        "median": float(np.median(arr)),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
    }


@dataclass
class SweepSummary:
    conditions: dict
    paired_gains: dict | None
    runs: list

    def to_dict(self):
        return {"conditions": self.conditions, "paired_gains": self.paired_gains, "runs": self.runs}


def seed_sweep(base_cfg, seeds, conditions=("base", "randomout"), out_dir="runs", jobs=1):
    """Run every (seed, condition) pair and summarize final accuracies.

    Seeds are shared across conditions so per-seed differences isolate the
    condition. Divergent runs are kept, flagged, and scored at chance.
    """

    seeds = list(seeds)
    conditions = list(conditions)
    if len(seeds) < 2:
        raise ValueError(f"need at least 2 seeds, got {len(seeds)}")
    if len(set(conditions)) != len(conditions):
        raise ValueError("duplicate conditions")
    cfgs = [base_cfg.replace(seed=s, condition=c) for c in conditions for s in seeds]
    results = _run_many(cfgs, out_dir, jobs)
    by_cond = {c: results[i * len(seeds) : (i + 1) * len(seeds)] for i, c in enumerate(conditions)}

    cond_stats = {}
    for c, rs in by_cond.items():
        accs = [effective_acc(r.summary) for r in rs]
        cond_stats[c] = _stats(accs)
        cond_stats[c]["failure_rate"] = sum(r.summary["failed"] for r in rs) / len(rs)
        cond_stats[c]["divergence_rate"] = sum(r.summary["diverged"] for r in rs) / len(rs)

    paired = None
    if "base" in by_cond and "randomout" in by_cond:
        gains = [
            effective_acc(ro.summary) - effective_acc(b.summary)
            for b, ro in zip(by_cond["base"], by_cond["randomout"])
        ]
        paired = {"seeds": seeds, "gains": gains, "mean": float(np.mean(gains)), "median": float(np.median(gains))}

    summary = SweepSummary(cond_stats, paired, [r.summary for r in results])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep_results.csv", "w") as f:
        f.write("condition,seed,config_hash,final_test_acc,diverged,failed,total_resets\n")
        for r in results:
            s = r.summary
            acc = "" if s["final_test_acc"] is None else repr(s["final_test_acc"])
            f.write(
                f"{s['condition']},{s['seed']},{s['config_hash']},{acc},"
                f"{int(s['diverged'])},{int(s['failed'])},{s['total_resets']}\n"
            )
    write_summary(out / "sweep_summary.json", summary.to_dict())
    return summary


def grid_search(base_cfg, taus, ps, seeds, out_dir="runs", jobs=1):
    """Mean paired accuracy gain for every (tau, p_active) cell.

    Each cell shares its seeds (and therefore its baselines) with every
    other cell; the baseline runs deduplicate through the config hash.
    Emits grid.csv with one tau per row and one p_active per column.
    """

    taus = list(taus)
    ps = list(ps)
    seeds = list(seeds)
    base_runs = _run_many([base_cfg.replace(seed=s, condition="base") for s in seeds], out_dir, jobs)
    base_accs = [effective_acc(r.summary) for r in base_runs]

    cell_cfgs = []
    for tau in taus:
        for p in ps:
            for s in seeds:
                cell_cfgs.append(
                    base_cfg.replace(
                        seed=s,
                        condition="randomout",
                        randomout={"tau": tau, "p_active": p, "check_every": 1},
                    )
                )
    cell_runs = _run_many(cell_cfgs, out_dir, jobs)

    cells = []
    i = 0
    for tau in taus:
        for p in ps:
            runs = cell_runs[i : i + len(seeds)]
            i += len(seeds)
            gains = [effective_acc(r.summary) - b for r, b in zip(runs, base_accs)]
            cells.append(
                {
                    "tau": tau,
                    "p_active": p,
                    "mean_gain": float(np.mean(gains)),
                    "gains": gains,
                    "mean_acc": float(np.mean([effective_acc(r.summary) for r in runs])),
                    "total_resets": int(sum(r.summary["total_resets"] for r in runs)),
                }
            )

    by_cell = {(c["tau"], c["p_active"]): c for c in cells}
    min_tau = min(taus)
    corr = None
    if len(ps) > 1:
        col = np.asarray([by_cell[(min_tau, p)]["mean_gain"] for p in ps])
        if np.std(col) > 0 and np.std(ps) > 0:
            corr = float(np.corrcoef(ps, col)[0, 1])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "grid.csv", "w") as f:
        f.write("tau," + ",".join(repr(float(p)) for p in ps) + "\n")
        for tau in taus:
            f.write(repr(float(tau)) + "," + ",".join(repr(by_cell[(tau, p)]["mean_gain"]) for p in ps) + "\n")
    result = {
        "taus": taus,
        "ps": ps,
        "seeds": seeds,
        "cells": cells,
        "base_mean_acc": float(np.mean(base_accs)),
        "gain_p_correlation_at_min_tau": corr,
    }
    write_summary(out / "grid_summary.json", result)
    return result


def width_sweep(base_cfg, widths, seeds, out_dir="runs", jobs=1):
    """Mean final accuracy per (width, condition) plus the effective-extra-
    filters statistic: for each width k, the smallest width k2 at which the
    base condition matches the filter-reset condition's accuracy at k."""

    widths = list(widths)
    seeds = list(seeds)
    rows = []
    for width in widths:
        model = {"name": base_cfg.model.name, "width": width}
        base_runs = _run_many(
            [base_cfg.replace(seed=s, condition="base", model=model) for s in seeds], out_dir, jobs
        )
        ro_runs = _run_many(
            [base_cfg.replace(seed=s, condition="randomout", model=model) for s in seeds], out_dir, jobs
        )
        base = _stats([effective_acc(r.summary) for r in base_runs])
        ro = _stats([effective_acc(r.summary) for r in ro_runs])
        rows.append(
            {
                "width": width,
                "base_mean": base["mean"],
                "base_std": base["std"],
                "randomout_mean": ro["mean"],
                "randomout_std": ro["std"],
                "randomout_wins": ro["mean"] >= base["mean"],
            }
        )

    base_means = {r["width"]: r["base_mean"] for r in rows}
    extra = {}
    for r in rows:
        k = r["width"]
        match = next((k2 for k2 in widths if base_means[k2] >= r["randomout_mean"]), None)
        extra[k] = None if match is None else match - k

    # trend report (not asserted anywhere): widths where mean accuracy
    # dipped below the previous width's mean
    dips = {
        cond: [
            rows[i]["width"]
            for i in range(1, len(rows))
            if rows[i][f"{cond}_mean"] < rows[i - 1][f"{cond}_mean"]
        ]
        for cond in ("base", "randomout")
    }

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "width_sweep.csv", "w") as f:
        f.write("width,base_mean,base_std,randomout_mean,randomout_std,randomout_wins,effective_extra_filters\n")
        for r in rows:
            e = extra[r["width"]]
            f.write(
                f"{r['width']},{r['base_mean']!r},{r['base_std']!r},{r['randomout_mean']!r},"
                f"{r['randomout_std']!r},{int(r['randomout_wins'])},{'' if e is None else e}\n"
            )
    result = {
        "widths": widths,
        "seeds": seeds,
        "rows": rows,
        "effective_extra_filters": {str(k): v for k, v in extra.items()},
        "accuracy_dips": dips,
        "majority_randomout_wins": sum(r["randomout_wins"] for r in rows) > len(rows) / 2,
    }
    write_summary(out / "width_summary.json", result)
    return result
