"""Verification metrics: DET curve, EER, AUC, fold aggregation and the
fusion-weight sweep.

All rates are computed from exact counts at every distinct score used as a
decision threshold. For similarity scores a comparison is accepted when
``score >= t``; for distances when ``score <= t``.
"""

import io
import json
from dataclasses import dataclass

import numpy as np

from .matcher import ScoreSet, fuse_scores

BRUTE_FORCE_LIMIT = 20_000


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class DetCurve:
    """Operating points ordered by increasing FAR (decreasing strictness).

    ``thresholds`` are in the scores' own units; the first and last entries
    are the infinite sentinels that reject and accept everything.
    """

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    polarity: str

    def __len__(self):
        return len(self.far)


@dataclass(frozen=True)
class FoldMetrics:
    fold_id: object
    eer: float
    auc: float


@dataclass(frozen=True)
class AggregateMetrics:
    eer_avg: float
    eer_std: float | None
    auc_avg: float
    auc_std: float | None
    n_folds: int


@dataclass(frozen=True)
class SweepResult:
    weights: np.ndarray
    eers: np.ndarray
    best_a: float

    @property
    def best_eer(self):
        return float(self.eers[np.flatnonzero(self.weights == self.best_a)[0]])


def _as_similarity(scores):
    if not isinstance(scores, ScoreSet):
        raise TypeError("expected a ScoreSet")
    if scores.genuine.size == 0 or scores.impostor.size == 0:
        raise MetricError(f"need non-empty genuine and impostor scores "
                          f"(got {scores.genuine.size} and {scores.impostor.size})")
    if scores.polarity == "similarity":
        return scores.genuine, scores.impostor, 1.0
    return -scores.genuine, -scores.impostor, -1.0


def det_curve(scores):
    gen, imp, sign = _as_similarity(scores)
    gen = np.sort(gen)
    imp = np.sort(imp)
    t = np.unique(np.concatenate([gen, imp]))[::-1]
    n_imp_below = np.searchsorted(imp, t, side="left")
    far = (imp.size - n_imp_below) / imp.size
    frr = np.searchsorted(gen, t, side="left") / gen.size
    far = np.concatenate([[0.0], far, [1.0]])
    frr = np.concatenate([[1.0], frr, [0.0]])
    thresholds = sign * np.concatenate([[np.inf], t, [-np.inf]])
    return DetCurve(thresholds, far, frr, scores.polarity)


def _crossing(far, frr):
    """FAR=FRR point by linear interpolation between bracketing operating points."""
    diff = far - frr
    k = int(np.argmax(diff >= 0))
    if diff[k] == 0:
        return float(far[k])
    d0, d1 = diff[k - 1], diff[k]
    lam = -d0 / (d1 - d0)
    return float(far[k - 1] + lam * (far[k] - far[k - 1]))


def eer(scores):
    """Equal error rate in percent."""
    c = det_curve(scores)
    return 100.0 * _crossing(c.far, c.frr)


def auc(scores):
    """Area under the ROC (accept rate of genuine vs FAR) in percent.

    Trapezoidal over all operating points, which counts tied
    genuine/impostor scores as one half.
    """
    c = det_curve(scores)
    tar = 1.0 - c.frr
    return 100.0 * float(np.sum(np.diff(c.far) * (tar[1:] + tar[:-1]) / 2.0))


def brute_force_eer(scores, chunk=512):
    """EER from direct counting at every candidate threshold.

    Quadratic in the number of scores; meant as a cross-check for ``eer``.
    """
    gen, imp, _ = _as_similarity(scores)
    if gen.size + imp.size > BRUTE_FORCE_LIMIT:
        raise MetricError(f"brute force limited to {BRUTE_FORCE_LIMIT} scores, "
                          f"got {gen.size + imp.size}")
    candidates = sorted(set(gen.tolist()) | set(imp.tolist()), reverse=True)
    far = [0.0]
    frr = [1.0]
    for start in range(0, len(candidates), chunk):
        t = np.array(candidates[start:start + chunk])[:, None]
        far.extend(np.count_nonzero(imp[None, :] >= t, axis=1) / imp.size)
        frr.extend(np.count_nonzero(gen[None, :] < t, axis=1) / gen.size)
    far.append(1.0)
    frr.append(0.0)

    prev = None
    for f, r in zip(far, frr):
        if f - r == 0:
            return 100.0 * f
        if f - r > 0:
            pf, pr = prev
            lam = -(pf - pr) / ((f - r) - (pf - pr))
            return 100.0 * (pf + lam * (f - pf))
        prev = (f, r)
    raise AssertionError("unreachable: FAR-FRR ends positive")


def evaluate(scores):
    """Metrics report for one score set."""
    return {
        "eer_pct": eer(scores),
        "auc_pct": auc(scores),
        "n_genuine": int(scores.genuine.size),
        "n_impostor": int(scores.impostor.size),
        "polarity": scores.polarity,
    }


def aggregate_folds(folds):
    """Mean and sample standard deviation (n - 1) of per-fold EER/AUC."""
    if not folds:
        raise MetricError("no folds to aggregate")
    e = np.array([f.eer for f in folds], dtype=np.float64)
    a = np.array([f.auc for f in folds], dtype=np.float64)
    multi = len(folds) >= 2
    return AggregateMetrics(
        eer_avg=float(e.mean()),
        eer_std=float(e.std(ddof=1)) if multi else None,
        auc_avg=float(a.mean()),
        auc_std=float(a.std(ddof=1)) if multi else None,
        n_folds=len(folds),
    )


def combined_eer(score_sets, mode="pooled"):
    """EER over several conditions.

    ``"pooled"`` concatenates all scores before computing one EER;
    ``"mean"`` averages the per-condition EERs.
    """
    score_sets = list(score_sets)
    if not score_sets:
        raise MetricError("no score sets")
    polarities = {s.polarity for s in score_sets}
    if len(polarities) != 1:
        raise MetricError(f"mixed polarities {sorted(polarities)}")
    if mode == "pooled":
        pooled = ScoreSet(np.concatenate([s.genuine for s in score_sets]),
                          np.concatenate([s.impostor for s in score_sets]),
                          polarities.pop())
        return eer(pooled)
    if mode == "mean":
        return float(np.mean([eer(s) for s in score_sets]))
    raise MetricError(f"unknown combination mode {mode!r}")


def sweep_weights(grid_step=0.1):
    if not 0 < grid_step <= 0.5:
        raise MetricError(f"grid_step must be in (0, 0.5], got {grid_step}")
    n = round(1.0 / grid_step)
    if abs(n * grid_step - 1.0) < 1e-9:
        return np.arange(n + 1) / n
    w = np.arange(int(np.floor(1.0 / grid_step + 1e-9)) + 1) * grid_step
    return np.append(w[w < 1.0], 1.0)


def fusion_sweep(s1, s2, grid_step=0.1, normalize="minmax", tie_tol=1e-9):
    """EER of ``a * s1 + (1 - a) * s2`` over a grid of weights.

    The best weight minimises EER; EERs within ``tie_tol`` percent of the
    minimum tie, and ties go to the weight closest to 0.5, then the smaller.
    """
    weights = sweep_weights(grid_step)
    eers = np.array([eer(fuse_scores(s1, s2, a, normalize)) for a in weights])
    near = np.flatnonzero(eers <= eers.min() + tie_tol)
    best = min(near, key=lambda i: (abs(weights[i] - 0.5), weights[i]))
    return SweepResult(weights, eers, float(weights[best]))


# ---------------------------------------------------------------------------
# exports

def det_csv(curve):
    buf = io.StringIO()
    buf.write("threshold,far,frr\n")
    for t, f, r in zip(curve.thresholds, curve.far, curve.frr):
        buf.write(f"{t:.9g},{f:.9g},{r:.9g}\n")
    return buf.getvalue()


def sweep_csv(result):
    buf = io.StringIO()
    buf.write("a,eer_pct\n")
    for a, e in zip(result.weights, result.eers):
        buf.write(f"{a:.9g},{e:.9g}\n")
    return buf.getvalue()


def fold_report(fold_reports, fold_ids=None):
    """Combine per-fold ``evaluate`` dicts with their average and std."""
    fold_ids = fold_ids or list(range(1, len(fold_reports) + 1))
    folds = [FoldMetrics(k, r["eer_pct"], r["auc_pct"]) for k, r in zip(fold_ids, fold_reports)]
    agg = aggregate_folds(folds)
    return {
        "folds": [dict(r, fold_id=k) for k, r in zip(fold_ids, fold_reports)],
        "avg": {"eer_pct": agg.eer_avg, "auc_pct": agg.auc_avg},
        "std": {"eer_pct": agg.eer_std, "auc_pct": agg.auc_std},
    }


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
