"""KLD and classification scores for fused grids, plus boxplot aggregation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import EvidentialGrid, GeometryMismatch

KLD_EPS = 1e-6
EVAL_FIELDS = ["sample_id", "config", "method", "kld", "p_occ", "r_occ", "d_occ", "p_free", "r_free", "d_free"]
SUMMARY_FIELDS = [
    "config", "method", "n", "kld_mean", "kld_q1", "kld_med", "kld_q3", "kld_lo", "kld_hi",
    "p_occ", "r_occ", "d_occ", "p_free", "r_free", "d_free",
]


class EmptyInput(ValueError):
    pass


def _check(pred: EvidentialGrid, label: EvidentialGrid):
    if pred.geometry != label.geometry:
        raise GeometryMismatch(f"{pred.geometry} != {label.geometry}")


def bernoulli_kld(q, p, eps: float = KLD_EPS):
    q = np.clip(q, eps, 1 - eps)
    p = np.clip(p, eps, 1 - eps)
    return q * np.log(q / p) + (1 - q) * np.log((1 - q) / (1 - p))


def kld_score(pred: EvidentialGrid, label: EvidentialGrid, mode: str = "pignistic") -> float:
    """Mean per-cell KL(label || pred) in nats.

    ``pignistic`` compares Bernoulli occupancy probabilities; ``mass`` compares
    the three-way (free, occupied, unknown) mass vectors.
    """
    _check(pred, label)
    if mode == "pignistic":
        return float(np.mean(bernoulli_kld(label.p_occ, pred.p_occ)))
    if mode == "mass":
        q = np.clip(np.stack([label.m_free, label.m_occ, label.uncertainty]), KLD_EPS, 1.0)
        p = np.clip(np.stack([pred.m_free, pred.m_occ, pred.uncertainty]), KLD_EPS, 1.0)
        q /= q.sum(axis=0)
        p /= p.sum(axis=0)
        return float(np.mean((q * np.log(q / p)).sum(axis=0)))
    raise ValueError(f"unknown KLD mode {mode!r}")


@dataclass(frozen=True)
class PRD:
    precision: float
    recall: float
    dice: float
    support: int
    """number of label cells of this class"""
    empty: bool = False
    """no predicted and no true cells: scores reported as 1.0"""


def _prd(pred_pos, true_pos) -> PRD:
    tp = int(np.sum(pred_pos & true_pos))
    fp = int(np.sum(pred_pos & ~true_pos))
    fn = int(np.sum(~pred_pos & true_pos))
    support = tp + fn
    if tp + fp + fn == 0:
        return PRD(1.0, 1.0, 1.0, 0, True)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    dice = 2 * tp / (2 * tp + fp + fn)
    return PRD(precision, recall, dice, support)


@dataclass(frozen=True)
class ClassScores:
    occupied: PRD
    free: PRD


def classify_occupied(grid: EvidentialGrid) -> np.ndarray:
    """Occupied iff the pignistic occupancy probability exceeds 0.5."""
    return grid.p_occ > 0.5


def classification_scores(pred: EvidentialGrid, label: EvidentialGrid) -> ClassScores:
    _check(pred, label)
    po, lo = classify_occupied(pred), classify_occupied(label)
    return ClassScores(_prd(po, lo), _prd(~po, ~lo))


@dataclass
class EvalRecord:
    sample_id: str
    config: str
    method: str
    kld: float
    scores: ClassScores = field(repr=False)

    def row(self) -> dict:
        o, f = self.scores.occupied, self.scores.free
        return {
            "sample_id": self.sample_id, "config": self.config, "method": self.method,
            "kld": self.kld, "p_occ": o.precision, "r_occ": o.recall, "d_occ": o.dice,
            "p_free": f.precision, "r_free": f.recall, "d_free": f.dice,
        }


def evaluate(sample_id: str, config: str, method: str, pred: EvidentialGrid,
             label: EvidentialGrid, kld_mode: str = "pignistic") -> EvalRecord:
    return EvalRecord(sample_id, config, method, kld_score(pred, label, kld_mode),
                      classification_scores(pred, label))


def boxplot_stats(values) -> dict:
    """Quartiles and 1.5 IQR whiskers clipped to the data.

    Quartiles interpolate linearly between order statistics at rank
    ``(n + 1) p``, so 1..9 gives 2.5 / 5 / 7.5.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise EmptyInput("no values")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="weibull")
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr].min()
    hi = v[v <= q3 + 1.5 * iqr].max()
    return {"q1": float(q1), "med": float(med), "q3": float(q3), "lo": float(lo), "hi": float(hi),
            "mean": float(v.mean())}


def aggregate(rows) -> list[dict]:
    """One summary row per (config, method); ``rows`` are EvalRecords or eval.csv dicts."""
    rows = [r.row() if isinstance(r, EvalRecord) else r for r in rows]
    if not rows:
        raise EmptyInput("no records to aggregate")
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["config"], r["method"]), []).append(r)
    out = []
    for (config, method), rs in sorted(groups.items()):
        box = boxplot_stats([float(r["kld"]) for r in rs])
        summary = {"config": config, "method": method, "n": len(rs), "kld_mean": box["mean"],
                   "kld_q1": box["q1"], "kld_med": box["med"], "kld_q3": box["q3"],
                   "kld_lo": box["lo"], "kld_hi": box["hi"]}
        for key in ("p_occ", "r_occ", "d_occ", "p_free", "r_free", "d_free"):
            summary[key] = float(np.mean([float(r[key]) for r in rs]))
        out.append(summary)
    return out


def _fmt(v):
    return f"{v:.10g}" if isinstance(v, float) else v


def write_csv(rows, path, fields) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in fields})


def write_eval_csv(records, path) -> None:
    write_csv([r.row() if isinstance(r, EvalRecord) else r for r in records], path, EVAL_FIELDS)


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
