"""Node-level confusion counts, sensitivity and specificity.

Precision is deliberately not reported: boundary nodes are a small minority,
so it says little about detector quality.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

NA = "NA"

CSV_FIELDS = [
    "n", "d", "seed", "snapshot_iter",
    "TP", "FN", "FP", "TN",
    "sensitivity", "specificity", "detect_ms",
]


@dataclass(frozen=True)
class Confusion:
    TP: int
    FN: int
    FP: int
    TN: int

    @property
    def total(self) -> int:
        return self.TP + self.FN + self.FP + self.TN


@dataclass(frozen=True)
class Scores:
    sensitivity: float | None
    specificity: float | None


def confusion_counts(detected_ids, truth_ids, n: int) -> Confusion:
    detected, truth = set(detected_ids), set(truth_ids)
    for i in detected | truth:
        if not 0 <= i < n:
            raise ValueError(f"node ID {i} out of range for {n} nodes")
    tp = len(detected & truth)
    fp = len(detected - truth)
    fn = len(truth - detected)
    return Confusion(tp, fn, fp, n - tp - fp - fn)


def scores(c: Confusion) -> Scores:
    """Undefined ratios (zero denominators) come back as ``None``."""
    sens = c.TP / (c.TP + c.FN) if c.TP + c.FN else None
    spec = c.TN / (c.TN + c.FP) if c.TN + c.FP else None
    return Scores(sens, spec)


def format_score(x: float | None) -> str:
    return NA if x is None else f"{x:.6f}"


def metrics_row(n: int, d: float, seed: int, snapshot_iter, c: Confusion, detect_ms: float) -> dict:
    s = scores(c)
    row = {"n": n, "d": f"{d:g}", "seed": seed, "snapshot_iter": snapshot_iter}
    row.update(asdict(c))
    row["sensitivity"] = format_score(s.sensitivity)
    row["specificity"] = format_score(s.specificity)
    row["detect_ms"] = f"{detect_ms:.3f}"
    return row


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def parse_score(text: str) -> float | None:
    return None if text == NA else float(text)
