import math

import numpy as np
import pytest

from periscope.ingest import FaceAnnotation
from periscope.matcher import ScoreSet


def random_annotation(rng, subject="s", image="i", pose=None, width=640, height=480):
    """Random face inside the image: random eye line angle, IED and nose offset."""
    ied = rng.uniform(20, 160)
    angle = rng.uniform(-math.pi, math.pi)
    cx = rng.uniform(0.3, 0.7) * width
    cy = rng.uniform(0.3, 0.7) * height
    ux, uy = math.cos(angle), math.sin(angle)
    left = (cx - ux * ied / 2, cy - uy * ied / 2)
    right = (cx + ux * ied / 2, cy + uy * ied / 2)
    along = rng.uniform(-0.8, 0.8) * ied
    down = rng.uniform(0.3, 0.9) * ied
    nose = (cx + along * ux - down * uy, cy + along * uy + down * ux)
    if pose is None:
        pose = rng.choice(["frontal", "three_quarter", "profile", "unspecified"])
    return FaceAnnotation(subject, image, str(pose), left, right, nose, width, height)


def random_scoreset(rng, n_total, polarity=None, ties=False):
    """Two overlapping Gaussian score clouds; ``ties`` rounds to force duplicates."""
    n_gen = int(rng.integers(1, n_total))
    n_imp = n_total - n_gen
    shift = rng.uniform(0, 3)
    gen = rng.normal(shift, 1, n_gen)
    imp = rng.normal(0, 1, n_imp)
    if ties:
        gen = np.round(gen, 1)
        imp = np.round(imp, 1)
    polarity = polarity or rng.choice(["similarity", "distance"])
    if polarity == "distance":
        gen, imp = -gen, -imp
    return ScoreSet(gen, imp, str(polarity))


def mann_whitney_pct(scores):
    """Direct pair counting: P(genuine beats impostor) + 0.5 P(tie), in percent."""
    g, i = scores.genuine, scores.impostor
    if scores.polarity == "distance":
        g, i = -g, -i
    wins = ties = 0
    for start in range(0, g.size, 256):
        block = g[start:start + 256, None]
        wins += np.count_nonzero(block > i[None, :])
        ties += np.count_nonzero(block == i[None, :])
    return 100.0 * (wins + 0.5 * ties) / (g.size * i.size)


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)
