"""Verification pair protocols.

Genuine pairs compare images of one subject; impostor pairs compare the
first image of subject i with the second image of subject j, for every
ordered pair i != j. "First" and "second" follow input order, so the
impostor set depends on how images are ordered within a subject.
"""

from dataclasses import dataclass
from math import comb

from .ingest import EYE_SIDES, PairEntry, PairList, ValidationError

# per-fold UFPR counts of the official OW/CW protocol
UFPR_REFERENCE_COUNTS = (78_540, 4_190_670)


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class SubjectGallery:
    """Ordered image ids of one subject, grouped by pose (or by eye side)."""

    subject_id: str
    images: dict

    def of(self, group):
        return self.images.get(group, ())


def build_galleries(faces):
    """Group annotations by subject and pose, keeping manifest order."""
    grouped = {}
    seen = set()
    for f in faces:
        if f.key in seen:
            raise ValidationError(f"image {f.image_id!r} listed twice for subject {f.subject_id!r}")
        seen.add(f.key)
        grouped.setdefault(f.subject_id, {}).setdefault(f.pose_tag, []).append(f.image_id)
    return [SubjectGallery(s, {p: tuple(ids) for p, ids in poses.items()})
            for s, poses in grouped.items()]


def build_eye_galleries(embeddings, subject_ids=None):
    """Galleries keyed by eye side, for stores holding one eye per image id.

    Image order is store order. ``subject_ids`` selects and orders subjects;
    a subject absent from the store raises ``ProtocolError``.
    """
    grouped = {}
    sides_of = {}
    for rec in embeddings:
        ref = (rec.subject_id, rec.image_id)
        if ref in sides_of:
            raise ProtocolError(
                f"image {rec.subject_id}/{rec.image_id} carries both eyes; per-eye protocols "
                "need one eye side per image id")
        sides_of[ref] = rec.eye_side
        grouped.setdefault(rec.subject_id, {s: [] for s in EYE_SIDES})[rec.eye_side].append(
            rec.image_id)
    if subject_ids is None:
        subject_ids = list(grouped)
    out = []
    for s in subject_ids:
        if s not in grouped:
            raise ProtocolError(f"subject {s!r} has no embeddings")
        out.append(SubjectGallery(s, {side: tuple(ids) for side, ids in grouped[s].items()}))
    return out


def _genuine_within(subject_id, ids):
    return [PairEntry("genuine", (subject_id, ids[i]), (subject_id, ids[j]))
            for i in range(len(ids)) for j in range(i + 1, len(ids))]


def _impostor_first_vs_second(galleries, group_a, group_b):
    entries = []
    for gi in galleries:
        first = gi.of(group_a)[0]
        for gj in galleries:
            if gj.subject_id != gi.subject_id:
                entries.append(PairEntry("impostor", (gi.subject_id, first),
                                         (gj.subject_id, gj.of(group_b)[1])))
    return entries


def gen_same_pose_pairs(galleries, pose):
    """All within-subject image pairs of ``pose`` plus first-vs-second impostors."""
    for g in galleries:
        if len(g.of(pose)) < 2:
            raise ProtocolError(f"subject {g.subject_id!r} has {len(g.of(pose))} {pose} "
                                "image(s); need at least 2")
    entries = []
    for g in galleries:
        entries.extend(_genuine_within(g.subject_id, g.of(pose)))
    entries.extend(_impostor_first_vs_second(galleries, pose, pose))
    return PairList(entries)


def gen_cross_pose_pairs(galleries, pose_a, pose_b):
    """Full within-subject cross product between two poses plus impostors.

    Impostors compare image #1 of ``pose_a`` of subject i with image #2 of
    ``pose_b`` of subject j.
    """
    if pose_a == pose_b:
        raise ProtocolError("cross-pose needs two different poses; use gen_same_pose_pairs")
    need_b = 2 if len(galleries) > 1 else 1
    for g in galleries:
        if not g.of(pose_a):
            raise ProtocolError(f"subject {g.subject_id!r} has no {pose_a} image")
        if len(g.of(pose_b)) < need_b:
            raise ProtocolError(f"subject {g.subject_id!r} has {len(g.of(pose_b))} {pose_b} "
                                f"image(s); need at least {need_b}")
    entries = []
    for g in galleries:
        s = g.subject_id
        entries.extend(PairEntry("genuine", (s, x), (s, y))
                       for x in g.of(pose_a) for y in g.of(pose_b))
    entries.extend(_impostor_first_vs_second(galleries, pose_a, pose_b))
    return PairList(entries)


def gen_ufpr_fold_pairs(fold, gallery=None, mode="external", external=None):
    """Pairs for one UFPR test fold.

    ``mode="external"`` validates and passes through an official pair list
    (``external``); every referenced subject must belong to ``fold``.

    ``mode="per_eye_exhaustive"`` enumerates, separately for each eye side,
    all within-subject sample pairs as genuine and the first-vs-second rule
    over ordered subject pairs as impostors. ``gallery`` must come from
    ``build_eye_galleries``. Its impostor count (2*S*(S-1)) does not match the
    official lists; compare against ``UFPR_REFERENCE_COUNTS`` before relying
    on it.
    """
    members = set(fold.test_subject_ids)
    if mode == "external":
        if external is None:
            raise ProtocolError("external mode needs an official pair list")
        for lineno, e in enumerate(external, start=1):
            for subject in (e.a[0], e.b[0]):
                if subject not in members:
                    raise ProtocolError(
                        f"pair {lineno} references subject {subject!r} outside fold {fold.fold_id}")
        return external if isinstance(external, PairList) else PairList(external)
    if mode != "per_eye_exhaustive":
        raise ProtocolError(f"unknown UFPR mode {mode!r}")
    if gallery is None:
        raise ProtocolError("per_eye_exhaustive mode needs an eye gallery")
    by_id = {g.subject_id: g for g in gallery}
    missing = [s for s in fold.test_subject_ids if s not in by_id]
    if missing:
        raise ProtocolError(f"fold {fold.fold_id} subjects missing from gallery: {missing[:10]}")
    chosen = [by_id[s] for s in fold.test_subject_ids]
    if len(chosen) > 1:
        for g in chosen:
            for side in EYE_SIDES:
                if len(g.of(side)) < 2:
                    raise ProtocolError(f"subject {g.subject_id!r} has fewer than 2 {side}-eye samples")
    entries = []
    for side in EYE_SIDES:
        for g in chosen:
            entries.extend(_genuine_within(g.subject_id, g.of(side)))
    if len(chosen) > 1:
        for side in EYE_SIDES:
            entries.extend(_impostor_first_vs_second(chosen, side, side))
    return PairList(entries)


def count_pairs(protocol, n_subjects, n_images, n_images_b=None):
    """Closed-form ``(genuine, impostor)`` counts for uniform galleries.

    ``protocol`` is ``"same_pose"``, ``"cross_pose"`` (``n_images`` of the
    first pose, ``n_images_b`` of the second) or ``"ufpr_per_eye"``
    (``n_images`` samples per eye side).
    """
    s = int(n_subjects)
    impostor = s * (s - 1)
    if protocol == "same_pose":
        return s * comb(n_images, 2), impostor
    if protocol == "cross_pose":
        nb = n_images if n_images_b is None else n_images_b
        return s * n_images * nb, impostor
    if protocol == "ufpr_per_eye":
        return 2 * s * comb(n_images, 2), 2 * impostor
    raise ProtocolError(f"unknown protocol {protocol!r}")


def count_gallery_pairs(protocol, galleries, group_a, group_b=None):
    """Closed-form counts for galleries of any shape, without enumeration.

    Subjects with fewer images than a protocol needs are not checked here;
    the generators reject them.
    """
    s = len(galleries)
    if protocol == "same_pose":
        return sum(comb(len(g.of(group_a)), 2) for g in galleries), s * (s - 1)
    if protocol == "cross_pose":
        return sum(len(g.of(group_a)) * len(g.of(group_b)) for g in galleries), s * (s - 1)
    if protocol == "ufpr_per_eye":
        genuine = sum(comb(len(g.of(side)), 2) for g in galleries for side in EYE_SIDES)
        return genuine, 2 * s * (s - 1)
    raise ProtocolError(f"unknown protocol {protocol!r}")
