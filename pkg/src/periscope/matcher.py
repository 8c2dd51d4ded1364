"""Template comparison: cosine similarity, chi-square distance, left/right
averaging, batch scoring of pair lists and weighted score fusion."""

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ingest import (EYE_SIDES, PairEntry, PairList, ParseError, ValidationError,
                     _DuplicateGuard, check_pair_entry)

CHI2_EPS = _kernels.CHI2_EPS
POLARITY = {"cosine": "similarity", "chi2": "distance"}
POLARITIES = ("similarity", "distance")
SCORE_HEADER = ("label", "subject_a", "image_a", "subject_b", "image_b", "score")
BLOCK = 4096


class MatchError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreSet:
    """Genuine and impostor scores sharing one polarity.

    For a ``similarity`` set larger scores mean "more alike"; for a
    ``distance`` set smaller scores do.
    """

    genuine: np.ndarray
    impostor: np.ndarray
    polarity: str

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ValueError(f"unknown polarity {self.polarity!r}")
        object.__setattr__(self, "genuine", np.asarray(self.genuine, dtype=np.float64))
        object.__setattr__(self, "impostor", np.asarray(self.impostor, dtype=np.float64))

    @classmethod
    def from_labels(cls, scores, genuine_mask, polarity):
        scores = np.asarray(scores, dtype=np.float64)
        mask = np.asarray(genuine_mask, dtype=bool)
        return cls(scores[mask], scores[~mask], polarity)

    def flipped(self):
        """Negated scores with the opposite polarity (same decisions)."""
        other = "distance" if self.polarity == "similarity" else "similarity"
        return ScoreSet(-self.genuine, -self.impostor, other)


def _check_metric(metric):
    if metric not in POLARITY:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(POLARITY)}")


def cosine_similarity(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise MatchError(f"dimension mismatch {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise MatchError("cosine similarity of a zero-norm vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def chi2_distance(x, y, eps=CHI2_EPS, strict=True):
    """sum((x - y)**2 / max(x + y, eps)); no 1/2 factor.

    ``eps`` only replaces denominators smaller than itself, so bins that are
    zero in both vectors contribute nothing and all other terms are exact.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise MatchError(f"dimension mismatch {x.shape} vs {y.shape}")
    if strict and (np.any(x < 0) or np.any(y < 0)):
        raise MatchError("negative entry in chi-square input (strict mode)")
    d = x - y
    return float(np.sum(d * d / np.maximum(x + y, eps)))


METRIC_FUNCS = {"cosine": cosine_similarity, "chi2": chi2_distance}


def pair_score(a, b, metric):
    """Average the per-eye scores over the sides present in both templates.

    Templates are mappings with optional ``"left"``/``"right"`` vectors.
    """
    _check_metric(metric)
    fn = METRIC_FUNCS[metric]
    scores = [fn(a[s], b[s]) for s in EYE_SIDES
              if a.get(s) is not None and b.get(s) is not None]
    if not scores:
        raise MatchError("templates share no eye side")
    return sum(scores) / len(scores)


def _resolve(embeddings, pairs):
    index = embeddings.side_matrices()[0]
    ia = np.empty(len(pairs), dtype=np.int64)
    ib = np.empty(len(pairs), dtype=np.int64)
    missing = {}
    for k, e in enumerate(pairs):
        for ref, arr in ((e.a, ia), (e.b, ib)):
            row = index.get(ref)
            if row is None:
                missing[ref] = None
                row = -1
            arr[k] = row
    if missing:
        shown = ", ".join(f"{s}/{i}" for s, i in list(missing)[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise MatchError(f"{len(missing)} image(s) missing from the embedding store: {shown}{more}")
    return ia, ib


def _resolve_threads(threads):
    if threads in (None, "auto"):
        return os.cpu_count() or 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def compute_pair_scores(embeddings, pairs, metric, threads=1, strict=True):
    """Score every pair in ``pairs``; returns an array in pair-list order.

    Work is cut into fixed-size blocks regardless of ``threads`` so the
    result is bit-identical for any worker count.
    """
    _check_metric(metric)
    if len(pairs) == 0:
        return np.empty(0)
    index, left, right, has_l, has_r = embeddings.side_matrices()
    ia, ib = _resolve(embeddings, pairs)
    use_l = has_l[ia] & has_l[ib]
    use_r = has_r[ia] & has_r[ib]
    bad = np.flatnonzero(~(use_l | use_r))
    if bad.size:
        e = pairs[int(bad[0])]
        raise MatchError(f"pair {e.a}-{e.b} shares no eye side ({bad.size} such pairs)")

    if metric == "chi2":
        if strict and embeddings.min_value() < 0:
            raise MatchError("negative embedding value reached chi-square (strict mode)")
        kernel = _kernels.chi2_rows
    else:
        kernel = _kernels.dot_rows
        rows = list(index)
        every = np.arange(len(rows))
        norm_l = np.sqrt(kernel(left, every, every))
        norm_r = np.sqrt(kernel(right, every, every))
        for side, norms, has in (("left", norm_l, has_l), ("right", norm_r, has_r)):
            zero = np.flatnonzero(has & (norms == 0))
            if zero.size:
                s, i = rows[int(zero[0])]
                raise MatchError(f"zero-norm {side} embedding for {s}/{i}")

    def run_block(start):
        stop = min(start + BLOCK, len(pairs))
        a, b = ia[start:stop], ib[start:stop]
        ul, ur = use_l[start:stop], use_r[start:stop]
        sl = np.zeros(stop - start)
        sr = np.zeros(stop - start)
        sel_l = np.flatnonzero(ul)
        sel_r = np.flatnonzero(ur)
        if metric == "chi2":
            sl[sel_l] = kernel(left, a[sel_l], b[sel_l])
            sr[sel_r] = kernel(right, a[sel_r], b[sel_r])
        else:
            sl[sel_l] = kernel(left, a[sel_l], b[sel_l]) / (norm_l[a[sel_l]] * norm_l[b[sel_l]])
            sr[sel_r] = kernel(right, a[sel_r], b[sel_r]) / (norm_r[a[sel_r]] * norm_r[b[sel_r]])
            np.clip(sl, -1.0, 1.0, out=sl)
            np.clip(sr, -1.0, 1.0, out=sr)
        return np.where(ul & ur, (sl + sr) / 2, np.where(ul, sl, sr))

    starts = range(0, len(pairs), BLOCK)
    n_workers = min(_resolve_threads(threads), len(starts))
    if n_workers <= 1:
        parts = [run_block(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(run_block, starts))
    return np.concatenate(parts)


def score_pairs(embeddings, pairs, metric, threads=1, strict=True):
    """Score a pair list and split the results into a ``ScoreSet``."""
    scores = compute_pair_scores(embeddings, pairs, metric, threads=threads, strict=strict)
    return ScoreSet.from_labels(scores, pairs.labels(), POLARITY[metric])


def _minmax(values, name):
    lo, hi = float(np.min(values)), float(np.max(values))
    if not hi > lo:
        raise MatchError(f"score set {name} has a degenerate range ({lo}); cannot min-max normalize")
    return lo, hi - lo


def normalize_scores(scores, normalize="minmax", name="scores"):
    """Apply min-max scaling over the union of genuine and impostor scores."""
    if normalize == "none":
        return scores
    if normalize != "minmax":
        raise ValueError(f"unknown normalization {normalize!r}")
    lo, span = _minmax(np.concatenate([scores.genuine, scores.impostor]), name)
    return ScoreSet((scores.genuine - lo) / span, (scores.impostor - lo) / span, scores.polarity)


def fuse_arrays(x1, x2, a, normalize="minmax"):
    """Fuse two aligned score arrays; min-max ranges come from each whole array."""
    a = float(a)
    if not 0 <= a <= 1:
        raise ValueError(f"fusion weight must be in [0, 1], got {a}")
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise MatchError(f"score arrays are not aligned: {x1.size} vs {x2.size}")
    if normalize == "minmax":
        lo1, span1 = _minmax(x1, "s1")
        lo2, span2 = _minmax(x2, "s2")
        x1 = (x1 - lo1) / span1
        x2 = (x2 - lo2) / span2
    elif normalize != "none":
        raise ValueError(f"unknown normalization {normalize!r}")
    return a * x1 + (1 - a) * x2


def fuse_scores(s1, s2, a, normalize="minmax"):
    """Convex combination ``a * s1 + (1 - a) * s2`` of two aligned score sets."""
    a = float(a)
    if not 0 <= a <= 1:
        raise ValueError(f"fusion weight must be in [0, 1], got {a}")
    if s1.polarity != s2.polarity:
        raise MatchError(f"polarity mismatch: {s1.polarity} vs {s2.polarity}")
    if s1.genuine.shape != s2.genuine.shape or s1.impostor.shape != s2.impostor.shape:
        raise MatchError(
            f"score sets are not aligned: genuine {s1.genuine.size} vs {s2.genuine.size}, "
            f"impostor {s1.impostor.size} vs {s2.impostor.size}")
    n1 = normalize_scores(s1, normalize, "s1")
    n2 = normalize_scores(s2, normalize, "s2")
    return ScoreSet(a * n1.genuine + (1 - a) * n2.genuine,
                    a * n1.impostor + (1 - a) * n2.impostor, s1.polarity)


# ---------------------------------------------------------------------------
# score files

def write_scores(pairs, scores):
    """Render the score CSV; scores carry 9 significant digits."""
    buf = io.StringIO()
    buf.write(",".join(SCORE_HEADER) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for e, s in zip(pairs, scores):
        w.writerow((e.code, e.a[0], e.a[1], e.b[0], e.b[1], f"{s:.9g}"))
    return buf.getvalue()


def read_scores(text, source=None):
    """Parse a score CSV into ``(PairList, scores)``."""
    reader = csv.reader(io.StringIO(text))
    entries, scores = [], []
    guard = _DuplicateGuard()
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row:
            continue
        row = [c.strip() for c in row]
        if not header_seen:
            if tuple(row) != SCORE_HEADER:
                raise ParseError(f"bad header, expected {','.join(SCORE_HEADER)}",
                                 line=lineno, source=source)
            header_seen = True
            continue
        if len(row) != len(SCORE_HEADER) or row[0] not in ("G", "I"):
            raise ParseError("expected 'G|I,subject_a,image_a,subject_b,image_b,score'",
                             line=lineno, source=source)
        try:
            value = float(row[5])
        except ValueError:
            raise ParseError(f"bad score {row[5]!r}", line=lineno, source=source) from None
        if not math.isfinite(value):
            raise ValidationError("non-finite score", line=lineno, source=source)
        a = guard.intern((row[1], row[2]))[0]
        b = guard.intern((row[3], row[4]))[0]
        entry = PairEntry("genuine" if row[0] == "G" else "impostor", a, b)
        try:
            check_pair_entry(entry)
        except ValidationError as exc:
            raise ValidationError(exc.message, line=lineno, source=source) from None
        entries.append(entry)
        scores.append(value)
    if not header_seen:
        raise ParseError("missing header", line=1, source=source)
    return PairList(entries, validate=False), np.array(scores, dtype=np.float64)


def first_misaligned_row(pairs_a, pairs_b):
    """1-based data-row index where two score files stop matching, or None."""
    for i, (x, y) in enumerate(zip(pairs_a, pairs_b), start=1):
        if x != y:
            return i
    if len(pairs_a) != len(pairs_b):
        return min(len(pairs_a), len(pairs_b)) + 1
    return None
