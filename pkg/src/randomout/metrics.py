"""Per-batch metrics records with a lossless CSV round-trip.

Floats are written with repr() so parsing the file reproduces the exact
binary values; identical runs therefore produce byte-identical files.
"""

import json
from dataclasses import dataclass

METRICS_HEADER = "epoch,batch,train_loss,train_acc,test_acc,mean_cgn,below_thresh,resets,diverged"


@dataclass
class MetricsRecord:
    epoch: int
    batch: int
    train_loss: float
    train_acc: float
    test_acc: float | None  # filled on each epoch's last batch only
    mean_cgn: float
    below_thresh: int
    resets: int
    diverged: bool

    def to_row(self):
        test = "" if self.test_acc is None else repr(self.test_acc)
        return (
            f"{self.epoch},{self.batch},{self.train_loss!r},{self.train_acc!r},"
            f"{test},{self.mean_cgn!r},{self.below_thresh},{self.resets},{int(self.diverged)}"
        )


def write_metrics(path, records):
    with open(path, "w") as f:
        f.write(METRICS_HEADER + "\n")
        for r in records:
            f.write(r.to_row() + "\n")


def _parse_int(text, path, lineno, col):
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: bad integer {text!r} in column {col!r}") from None


def _parse_float(text, path, lineno, col):
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: bad float {text!r} in column {col!r}") from None


def read_metrics(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        got = lines[0] if lines else "<empty file>"
        raise ValueError(f"{path}:1: bad header {got!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 9:
            raise ValueError(f"{path}:{lineno}: expected 9 fields, got {len(parts)}")
        ep, ba, tl, ta, te, cg, bt, rs, dv = parts
        diverged = _parse_int(dv, path, lineno, "diverged")
        if diverged not in (0, 1):
            raise ValueError(f"{path}:{lineno}: diverged must be 0 or 1, got {dv!r}")
        records.append(
            MetricsRecord(
                epoch=_parse_int(ep, path, lineno, "epoch"),
                batch=_parse_int(ba, path, lineno, "batch"),
                train_loss=_parse_float(tl, path, lineno, "train_loss"),
                train_acc=_parse_float(ta, path, lineno, "train_acc"),
                test_acc=None if te == "" else _parse_float(te, path, lineno, "test_acc"),
                mean_cgn=_parse_float(cg, path, lineno, "mean_cgn"),
                below_thresh=_parse_int(bt, path, lineno, "below_thresh"),
                resets=_parse_int(rs, path, lineno, "resets"),
                diverged=bool(diverged),
            )
        )
    return records


def write_summary(path, summary):
    with open(path, "w") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")


def read_summary(path):
    with open(path) as f:
        return json.load(f)
