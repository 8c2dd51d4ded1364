from itertools import combinations, permutations

import pytest
from hypothesis import given, settings, strategies as st

from periscope.ingest import FoldSpec, PairEntry, PairList, ValidationError
from periscope.protocols import (UFPR_REFERENCE_COUNTS, ProtocolError, SubjectGallery,
                                 build_eye_galleries, build_galleries, count_gallery_pairs,
                                 count_pairs, gen_cross_pose_pairs, gen_same_pose_pairs,
                                 gen_ufpr_fold_pairs)
from periscope.synthetic import gen_synthetic_embeddings, gen_synthetic_manifest


def uniform_galleries(n_subjects, n_images, poses=("frontal",)):
    return [SubjectGallery(f"s{i}", {p: tuple(f"{p}{j}" for j in range(n_images)) for p in poses})
            for i in range(n_subjects)]


def enumerate_same_pose(galleries, pose):
    """Independent enumeration straight from the protocol's wording."""
    gen = {(g.subject_id, a, b) for g in galleries for a, b in combinations(g.of(pose), 2)}
    imp = {((gi.subject_id, gi.of(pose)[0]), (gj.subject_id, gj.of(pose)[1]))
           for gi, gj in permutations(galleries, 2)}
    return gen, imp


def as_sets(pairs):
    gen = {(e.a[0], e.a[1], e.b[1]) for e in pairs if e.label == "genuine"}
    imp = {(e.a, e.b) for e in pairs if e.label == "impostor"}
    return gen, imp


class TestSamePose:
    def test_two_subjects_three_images(self):
        pl = gen_same_pose_pairs(uniform_galleries(2, 3), "frontal")
        assert (pl.n_genuine, pl.n_impostor) == (6, 2)
        assert as_sets(pl) == enumerate_same_pose(uniform_galleries(2, 3), "frontal")

    def test_single_subject(self):
        pl = gen_same_pose_pairs(uniform_galleries(1, 10), "frontal")
        assert (pl.n_genuine, pl.n_impostor) == (45, 0)

    def test_closed_form_small(self):
        assert count_pairs("same_pose", 3, 2) == (3, 6)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 20), st.integers(2, 10))
    def test_enumeration_matches_closed_form(self, s, n):
        galleries = uniform_galleries(s, n)
        pl = gen_same_pose_pairs(galleries, "frontal")
        assert (pl.n_genuine, pl.n_impostor) == count_pairs("same_pose", s, n)
        assert as_sets(pl) == enumerate_same_pose(galleries, "frontal")
        assert len({frozenset((e.a, e.b)) for e in pl}) == len(pl)

    def test_genuine_set_ignores_image_order(self):
        g = uniform_galleries(3, 4)
        shuffled = [SubjectGallery(x.subject_id, {"frontal": x.of("frontal")[::-1]}) for x in g]
        norm = lambda pl: {frozenset((e.a, e.b)) for e in pl if e.label == "genuine"}
        assert norm(gen_same_pose_pairs(g, "frontal")) == norm(gen_same_pose_pairs(shuffled, "frontal"))

    def test_impostor_set_follows_image_order(self):
        g = uniform_galleries(3, 4)
        shuffled = [SubjectGallery(x.subject_id, {"frontal": x.of("frontal")[::-1]}) for x in g]
        imp = lambda pl: {(e.a, e.b) for e in pl if e.label == "impostor"}
        assert imp(gen_same_pose_pairs(g, "frontal")) != imp(gen_same_pose_pairs(shuffled, "frontal"))

    def test_too_few_images(self):
        with pytest.raises(ProtocolError, match="need at least 2"):
            gen_same_pose_pairs(uniform_galleries(3, 1), "frontal")

    def test_irregular_gallery_counts(self):
        galleries = [SubjectGallery("a", {"frontal": ("1", "2", "3", "4")}),
                     SubjectGallery("b", {"frontal": ("1", "2")}),
                     SubjectGallery("c", {"frontal": ("1", "2", "3")})]
        pl = gen_same_pose_pairs(galleries, "frontal")
        assert (pl.n_genuine, pl.n_impostor) == count_gallery_pairs("same_pose", galleries, "frontal")
        assert (pl.n_genuine, pl.n_impostor) == (6 + 1 + 3, 6)


class TestCrossPose:
    def test_small(self):
        g = uniform_galleries(2, 2, ("frontal", "three_quarter"))
        pl = gen_cross_pose_pairs(g, "frontal", "three_quarter")
        assert (pl.n_genuine, pl.n_impostor) == (8, 2)
        for e in pl:
            assert e.a[1].startswith("frontal") and e.b[1].startswith("three_quarter")

    def test_same_pose_rejected(self):
        with pytest.raises(ProtocolError):
            gen_cross_pose_pairs(uniform_galleries(2, 2), "frontal", "frontal")

    def test_matches_closed_form(self):
        g = uniform_galleries(7, 3, ("frontal", "three_quarter"))
        pl = gen_cross_pose_pairs(g, "frontal", "three_quarter")
        assert (pl.n_genuine, pl.n_impostor) == count_pairs("cross_pose", 7, 3, 3)
        assert count_gallery_pairs("cross_pose", g, "frontal", "three_quarter") == (63, 42)


class TestCounts:
    def test_reference_population(self):
        assert count_pairs("same_pose", 368, 10) == (16_560, 135_056)
        assert count_pairs("cross_pose", 368, 10) == (36_800, 135_056)

    def test_unknown_protocol(self):
        with pytest.raises(ProtocolError):
            count_pairs("open_set", 3, 3)

    def test_galleries_from_manifest(self):
        faces = gen_synthetic_manifest(4, 3, poses=("frontal", "three_quarter"))
        g = build_galleries(faces)
        assert [x.subject_id for x in g] == ["s001", "s002", "s003", "s004"]
        assert g[0].of("frontal") == ("frontal_01", "frontal_02", "frontal_03")
        with pytest.raises(ValidationError):
            build_galleries(faces + faces[:1])


class TestUfpr:
    def test_single_subject(self):
        es = gen_synthetic_embeddings(1, 2, 4, 1.0, 0.1, seed=0, per_eye_ids=True)
        g = build_eye_galleries(es)
        pl = gen_ufpr_fold_pairs(FoldSpec(1, ("s001",)), g, mode="per_eye_exhaustive")
        assert (pl.n_genuine, pl.n_impostor) == (2, 0)
        assert {(e.a[1], e.b[1]) for e in pl} == {("L01", "L02"), ("R01", "R02")}

    def test_reference_genuine_count(self):
        g = [SubjectGallery(f"s{i}", {"left": tuple(f"L{j}" for j in range(15)),
                                      "right": tuple(f"R{j}" for j in range(15))})
             for i in range(374)]
        genuine, impostor = count_gallery_pairs("ufpr_per_eye", g, None)
        assert genuine == UFPR_REFERENCE_COUNTS[0] == count_pairs("ufpr_per_eye", 374, 15)[0]
        assert impostor == 2 * 374 * 373 != UFPR_REFERENCE_COUNTS[1]

    def test_enumeration_matches_count(self):
        es = gen_synthetic_embeddings(6, 4, 4, 1.0, 0.1, seed=0, per_eye_ids=True)
        g = build_eye_galleries(es)
        fold = FoldSpec(2, tuple(x.subject_id for x in g))
        pl = gen_ufpr_fold_pairs(fold, g, mode="per_eye_exhaustive")
        assert (pl.n_genuine, pl.n_impostor) == count_pairs("ufpr_per_eye", 6, 4)
        # an eye is never compared with the other side
        assert all(e.a[1][0] == e.b[1][0] for e in pl)

    def test_both_eyes_on_one_image_rejected(self):
        es = gen_synthetic_embeddings(2, 2, 4, 1.0, 0.1, seed=0)
        with pytest.raises(ProtocolError, match="both eyes"):
            build_eye_galleries(es)

    def test_external_pass_through(self):
        fold = FoldSpec(1, ("a", "b"))
        ext = PairList([PairEntry("genuine", ("a", "1"), ("a", "2")),
                        PairEntry("impostor", ("a", "1"), ("b", "2"))])
        assert gen_ufpr_fold_pairs(fold, external=ext) is ext
        with pytest.raises(ProtocolError, match="outside fold"):
            gen_ufpr_fold_pairs(FoldSpec(1, ("a",)), external=ext)
        with pytest.raises(ProtocolError):
            gen_ufpr_fold_pairs(fold)

    def test_external_duplicates_rejected(self):
        e = PairEntry("genuine", ("a", "1"), ("a", "2"))
        with pytest.raises(ValidationError, match="duplicate"):
            gen_ufpr_fold_pairs(FoldSpec(1, ("a",)), external=[e, PairEntry("genuine", ("a", "2"), ("a", "1"))])

    def test_unknown_subject_in_fold(self):
        es = gen_synthetic_embeddings(2, 2, 4, 1.0, 0.1, seed=0, per_eye_ids=True)
        with pytest.raises(ProtocolError, match="missing"):
            gen_ufpr_fold_pairs(FoldSpec(1, ("s001", "zzz")), build_eye_galleries(es),
                                mode="per_eye_exhaustive")
