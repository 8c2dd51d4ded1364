"""Readers and writers for the toolkit's text formats.

Four formats are handled here:

* face manifest (CSV): ``subject_id,image_id,pose,lx,ly,rx,ry,nx,ny,img_w,img_h``
* embedding store: ``OCEMB v1 dim=<D>`` header, then tab-separated records
* fold definitions: ``fold <k>`` followed by one subject id per line
* pair lists: ``G|I subjA imgA subjB imgB``

Every parse error carries the 1-based line number of the offending line.
"""

import csv
import io
import math
import re
from dataclasses import dataclass, field

import numpy as np

POSES = ("frontal", "three_quarter", "profile", "unspecified")
EYE_SIDES = ("left", "right")
MANIFEST_HEADER = ("subject_id", "image_id", "pose", "lx", "ly", "rx", "ry",
                   "nx", "ny", "img_w", "img_h")
EMBEDDING_MAGIC = "OCEMB"
EMBEDDING_VERSION = "v1"


class ParseError(ValueError):
    """Malformed input. ``line`` is 1-based, or None for whole-file problems."""

    def __init__(self, message, line=None, source=None):
        self.message = message
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class ValidationError(ParseError):
    """Well-formed input that violates a domain invariant."""


@dataclass(frozen=True)
class FaceAnnotation:
    subject_id: str
    image_id: str
    pose_tag: str
    left_eye: tuple
    right_eye: tuple
    nose: tuple
    image_width: int
    image_height: int

    def __post_init__(self):
        if self.pose_tag not in POSES:
            raise ValidationError(f"unknown pose {self.pose_tag!r} for {self.key}")
        coords = (*self.left_eye, *self.right_eye, *self.nose)
        if not all(math.isfinite(c) for c in coords):
            raise ValidationError(f"non-finite landmark in {self.key}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValidationError(f"non-positive image size in {self.key}")
        if tuple(self.left_eye) == tuple(self.right_eye):
            raise ValidationError(f"zero inter-eye distance in {self.key}")

    @property
    def key(self):
        return (self.subject_id, self.image_id)


@dataclass(frozen=True)
class EmbeddingRecord:
    subject_id: str
    image_id: str
    pose_tag: str
    eye_side: str
    vector: np.ndarray = field(repr=False, compare=False)

    @property
    def key(self):
        return (self.subject_id, self.image_id, self.eye_side)


class EmbeddingSet:
    """Immutable collection of embedding records with a uniform dimension.

    Records keep insertion order; ``write_embeddings`` sorts them.
    ``clamped`` counts negative values zeroed by a lenient read.
    """

    def __init__(self, records, dim, clamped=0):
        self.dim = int(dim)
        self.clamped = int(clamped)
        self._records = {}
        for rec in records:
            if rec.key in self._records:
                raise ValidationError(f"duplicate embedding key {rec.key}")
            vec = np.asarray(rec.vector, dtype=np.float64)
            if vec.shape != (self.dim,):
                raise ValidationError(
                    f"vector for {rec.key} has shape {vec.shape}, expected ({self.dim},)")
            vec.setflags(write=False)
            object.__setattr__(rec, "vector", vec)
            self._records[rec.key] = rec
        self._matrices = None

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records.values())

    def __contains__(self, key):
        return key in self._records

    def __getitem__(self, key):
        return self._records[key]

    def keys(self):
        return self._records.keys()

    def template(self, subject_id, image_id):
        """Return ``{"left": vec|None, "right": vec|None}`` for one face image."""
        return {side: (self._records[(subject_id, image_id, side)].vector
                       if (subject_id, image_id, side) in self._records else None)
                for side in EYE_SIDES}

    def side_matrices(self):
        """Dense per-side storage used by the batch scorer.

        Returns ``(index, left, right, has_left, has_right)`` where ``index``
        maps ``(subject_id, image_id)`` to a row shared by both matrices.
        Cached; the set is immutable.
        """
        if self._matrices is None:
            index = {}
            for rec in self._records.values():
                index.setdefault((rec.subject_id, rec.image_id), len(index))
            n = len(index)
            mats = {s: np.zeros((n, self.dim)) for s in EYE_SIDES}
            present = {s: np.zeros(n, dtype=bool) for s in EYE_SIDES}
            for rec in self._records.values():
                row = index[(rec.subject_id, rec.image_id)]
                mats[rec.eye_side][row] = rec.vector
                present[rec.eye_side][row] = True
            self._matrices = (index, mats["left"], mats["right"],
                              present["left"], present["right"])
        return self._matrices

    def min_value(self):
        if not self._records:
            return 0.0
        return min(float(r.vector.min()) for r in self._records.values())


@dataclass(frozen=True)
class FoldSpec:
    fold_id: int
    test_subject_ids: tuple

    def __post_init__(self):
        seen = set()
        for s in self.test_subject_ids:
            if s in seen:
                raise ValidationError(f"subject {s!r} repeated in fold {self.fold_id}")
            seen.add(s)


@dataclass(frozen=True, slots=True)
class PairEntry:
    label: str          # "genuine" | "impostor"
    a: tuple            # (subject_id, image_id)
    b: tuple

    @property
    def code(self):
        return "G" if self.label == "genuine" else "I"


class _DuplicateGuard:
    """Detects repeated unordered pairs using compact integer keys."""

    def __init__(self):
        self._refs = {}
        self._seen = {}

    def intern(self, ref):
        """Return ``(canonical_ref, id)``; repeated refs then share one tuple."""
        hit = self._refs.get(ref)
        if hit is None:
            hit = self._refs[ref] = (ref, len(self._refs))
        return hit

    def add(self, a, b, position):
        """Register pair a-b; return the position of an earlier duplicate or None."""
        i, j = self.intern(a)[1], self.intern(b)[1]
        if i > j:
            i, j = j, i
        key = (i << 32) | j
        prev = self._seen.get(key)
        if prev is None:
            self._seen[key] = position
        return prev


class PairList:
    """Ordered, validated list of genuine/impostor comparisons."""

    def __init__(self, entries, validate=True):
        self.entries = tuple(entries)
        if validate:
            self._validate()

    def _validate(self):
        guard = _DuplicateGuard()
        for i, e in enumerate(self.entries, start=1):
            check_pair_entry(e, line=i)
            prev = guard.add(e.a, e.b, i)
            if prev is not None:
                raise ValidationError(
                    f"duplicate pair {e.a}-{e.b} (first seen at entry {prev})", line=i)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def n_genuine(self):
        return sum(e.label == "genuine" for e in self.entries)

    @property
    def n_impostor(self):
        return len(self.entries) - self.n_genuine

    def labels(self):
        return np.fromiter((e.label == "genuine" for e in self.entries),
                           dtype=bool, count=len(self.entries))


def check_pair_entry(entry, line=None):
    if entry.a == entry.b:
        raise ValidationError(f"pair compares image {entry.a} with itself", line=line)
    same = entry.a[0] == entry.b[0]
    if entry.label == "genuine" and not same:
        raise ValidationError(
            f"genuine pair across subjects {entry.a[0]!r} and {entry.b[0]!r}", line=line)
    if entry.label == "impostor" and same:
        raise ValidationError(f"impostor pair within subject {entry.a[0]!r}", line=line)


# ---------------------------------------------------------------------------
# face manifest

def _number(token, what, line):
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"{what}: not a number: {token!r}", line=line) from None
    if not math.isfinite(v):
        raise ValidationError(f"{what}: non-finite value {token!r}", line=line)
    return v


def parse_face_manifest(text, source=None):
    """Parse a face-landmark manifest into a list of ``FaceAnnotation``."""
    reader = csv.reader(io.StringIO(text))
    faces = []
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        row = [c.strip() for c in row]
        if not header_seen:
            if tuple(row[:len(MANIFEST_HEADER)]) != MANIFEST_HEADER:
                raise ParseError(
                    f"bad header, expected {','.join(MANIFEST_HEADER)}", line=lineno, source=source)
            header_seen = True
            continue
        if len(row) < len(MANIFEST_HEADER):
            raise ParseError(
                f"expected {len(MANIFEST_HEADER)} fields, got {len(row)}", line=lineno, source=source)
        subject_id, image_id, pose = row[0], row[1], row[2]
        if pose not in POSES:
            raise ParseError(f"unknown pose {pose!r}", line=lineno, source=source)
        try:
            lx, ly, rx, ry, nx, ny = (_number(t, n, lineno)
                                      for t, n in zip(row[3:9], MANIFEST_HEADER[3:9]))
            w, h = _number(row[9], "img_w", lineno), _number(row[10], "img_h", lineno)
            if w != int(w) or h != int(h):
                raise ParseError("image size must be integral", line=lineno)
            faces.append(FaceAnnotation(subject_id, image_id, pose, (lx, ly), (rx, ry),
                                        (nx, ny), int(w), int(h)))
        except ParseError as exc:
            raise type(exc)(exc.message, line=lineno, source=source) from None
    if not header_seen:
        raise ParseError("missing header", line=1, source=source)
    return faces


def _fmt_num(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def format_face_manifest(faces, extra_columns=None):
    """Serialize annotations back to manifest CSV.

    ``extra_columns`` maps a column name to a per-face list of values and is
    appended after the standard columns (the crop manifest uses ``status``).
    """
    extra_columns = extra_columns or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER + tuple(extra_columns))
    for i, f in enumerate(faces):
        w.writerow([f.subject_id, f.image_id, f.pose_tag,
                    *map(_fmt_num, (*f.left_eye, *f.right_eye, *f.nose)),
                    f.image_width, f.image_height,
                    *(col[i] for col in extra_columns.values())])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# embedding store

_HEADER_RE = re.compile(rf"^{EMBEDDING_MAGIC}\s+(v\d+)\s+dim=(\d+)\s*$")


def read_embeddings(text, strict=True, source=None):
    """Parse an embedding store.

    In strict mode negative values are rejected. Otherwise they are clamped
    to zero and counted in ``EmbeddingSet.clamped``.
    """
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty store, missing header", line=1, source=source)
    m = _HEADER_RE.match(lines[0].strip())
    if not m:
        raise ParseError(f"bad header {lines[0]!r}, expected "
                         f"'{EMBEDDING_MAGIC} {EMBEDDING_VERSION} dim=<D>'", line=1, source=source)
    if m.group(1) != EMBEDDING_VERSION:
        raise ParseError(f"unsupported store version {m.group(1)}", line=1, source=source)
    dim = int(m.group(2))
    if dim <= 0:
        raise ParseError("dim must be positive", line=1, source=source)

    records = []
    keys = {}
    clamped = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) != 5:
            raise ParseError(f"expected 5 tab-separated fields, got {len(fields)}",
                             line=lineno, source=source)
        subject_id, image_id, pose, side, values = fields
        if pose not in POSES:
            raise ParseError(f"unknown pose {pose!r}", line=lineno, source=source)
        if side not in EYE_SIDES:
            raise ParseError(f"unknown eye side {side!r}", line=lineno, source=source)
        tokens = values.split()
        if len(tokens) != dim:
            raise ParseError(f"dim mismatch: {len(tokens)} values, header says {dim}",
                             line=lineno, source=source)
        try:
            vec = np.array(tokens, dtype=np.float64)
        except ValueError:
            raise ParseError("non-numeric value", line=lineno, source=source) from None
        if not np.all(np.isfinite(vec)):
            raise ValidationError("non-finite value", line=lineno, source=source)
        neg = vec < 0
        if neg.any():
            if strict:
                raise ValidationError(
                    f"negative value {vec[neg][0]!r} in strict mode", line=lineno, source=source)
            clamped += int(neg.sum())
            vec[neg] = 0.0
        key = (subject_id, image_id, side)
        if key in keys:
            raise ValidationError(f"duplicate key {key} (first at line {keys[key]})",
                                  line=lineno, source=source)
        keys[key] = lineno
        records.append(EmbeddingRecord(subject_id, image_id, pose, side, vec))
    return EmbeddingSet(records, dim, clamped=clamped)


def write_embeddings(embeddings):
    """Serialize an ``EmbeddingSet``; records sorted by (subject, image, eye)."""
    out = [f"{EMBEDDING_MAGIC} {EMBEDDING_VERSION} dim={embeddings.dim}\n"]
    for key in sorted(embeddings.keys()):
        rec = embeddings[key]
        # repr() is the shortest string that round-trips a float64 exactly
        vals = " ".join(repr(float(v)) for v in rec.vector)
        out.append(f"{rec.subject_id}\t{rec.image_id}\t{rec.pose_tag}\t{rec.eye_side}\t{vals}\n")
    return "".join(out)


# ---------------------------------------------------------------------------
# folds

def parse_folds(text, source=None):
    folds = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "fold":
            if len(parts) != 2:
                raise ParseError("expected 'fold <k>'", line=lineno, source=source)
            try:
                k = int(parts[1])
            except ValueError:
                raise ParseError(f"bad fold id {parts[1]!r}", line=lineno, source=source) from None
            if current is not None:
                folds.append(current)
            current = (k, [], lineno)
            continue
        if current is None:
            raise ParseError("subject id before any 'fold <k>' line", line=lineno, source=source)
        if len(parts) != 1:
            raise ParseError("expected one subject id per line", line=lineno, source=source)
        current[1].append(parts[0])
    if current is not None:
        folds.append(current)

    out = []
    seen_ids = set()
    for k, subjects, lineno in folds:
        if k in seen_ids:
            raise ValidationError(f"fold {k} defined twice", line=lineno, source=source)
        seen_ids.add(k)
        try:
            out.append(FoldSpec(k, tuple(subjects)))
        except ValidationError as exc:
            raise ValidationError(exc.message, line=lineno, source=source) from None
    return out


def format_folds(folds):
    lines = []
    for f in folds:
        lines.append(f"fold {f.fold_id}")
        lines.extend(f.test_subject_ids)
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# pair lists

_LABELS = {"G": "genuine", "I": "impostor"}


def parse_pair_list(text, source=None):
    entries = []
    guard = _DuplicateGuard()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 5 or parts[0] not in _LABELS:
            raise ParseError("expected 'G|I subjA imgA subjB imgB'", line=lineno, source=source)
        a = guard.intern((parts[1], parts[2]))[0]
        b = guard.intern((parts[3], parts[4]))[0]
        entry = PairEntry(_LABELS[parts[0]], a, b)
        try:
            check_pair_entry(entry)
        except ValidationError as exc:
            raise ValidationError(exc.message, line=lineno, source=source) from None
        prev = guard.add(a, b, lineno)
        if prev is not None:
            raise ValidationError(f"duplicate pair (first at line {prev})",
                                  line=lineno, source=source)
        entries.append(entry)
    return PairList(entries, validate=False)


def format_pair_list(pairs):
    return "".join(f"{e.code} {e.a[0]} {e.a[1]} {e.b[0]} {e.b[1]}\n" for e in pairs)
