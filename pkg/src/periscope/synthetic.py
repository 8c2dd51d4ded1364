"""Seeded synthetic embeddings and manifests for exercising the pipeline
without trained networks or licensed images."""

import numpy as np

from .ingest import EYE_SIDES, EmbeddingRecord, EmbeddingSet, FaceAnnotation

# landmark layout of a synthetic frontal face on a 512x512 image (IED 113 px)
_SYNTH_LANDMARKS = ((199.5, 240.0), (312.5, 240.0), (256.0, 320.0))
_SYNTH_SIZE = 512


def _ids(n_subjects, n_images, poses):
    sw = max(3, len(str(n_subjects)))
    iw = max(2, len(str(n_images)))
    subjects = [f"s{i + 1:0{sw}d}" for i in range(n_subjects)]
    images = {p: [f"{p}_{j + 1:0{iw}d}" for j in range(n_images)] for p in poses}
    return subjects, images, iw


def gen_synthetic_embeddings(n_subjects, n_images, dim, separation, noise, seed,
                             poses=("frontal",), per_eye_ids=False, class_seed=None):
    """Non-negative class-structured embeddings.

    Every subject gets a mean vector ``base + separation * |z|`` with ``base``
    shared by all subjects, so ``separation=0`` makes genuine and impostor
    comparisons identically distributed. Each (image, eye) vector is the
    subject mean plus Gaussian noise of scale ``noise``, clamped at zero.

    ``class_seed`` fixes the subject means separately from the noise, which
    gives two "systems" that share class structure but not noise.
    ``per_eye_ids=True`` stores each eye under its own image id (``L01``,
    ``R01``...), the layout of eye-image datasets.
    """
    if min(n_subjects, n_images, dim) <= 0:
        raise ValueError("n_subjects, n_images and dim must be positive")
    if separation < 0 or noise < 0:
        raise ValueError("separation and noise must be non-negative")
    if per_eye_ids and len(poses) != 1:
        raise ValueError("per_eye_ids supports a single pose")
    class_rng = np.random.default_rng(seed if class_seed is None else class_seed)
    base = np.abs(class_rng.standard_normal(dim))
    means = base + separation * np.abs(class_rng.standard_normal((n_subjects, dim)))
    rng = np.random.default_rng([seed, 1])

    subjects, images, iw = _ids(n_subjects, n_images, poses)
    records = []
    for s, mean in zip(subjects, means):
        for pose in poses:
            for j, image_id in enumerate(images[pose]):
                for side in EYE_SIDES:
                    vec = np.maximum(mean + noise * rng.standard_normal(dim), 0.0)
                    if per_eye_ids:
                        image_id = f"{side[0].upper()}{j + 1:0{iw}d}"
                    records.append(EmbeddingRecord(s, image_id, pose, side, vec))
    return EmbeddingSet(records, dim)


def gen_synthetic_manifest(n_subjects, n_images, poses=("frontal",)):
    """Face annotations matching ``gen_synthetic_embeddings`` ids.

    Landmarks are a fixed frontal layout that passes every filter.
    """
    subjects, images, _ = _ids(n_subjects, n_images, poses)
    left, right, nose = _SYNTH_LANDMARKS
    return [FaceAnnotation(s, image_id, pose, left, right, nose, _SYNTH_SIZE, _SYNTH_SIZE)
            for s in subjects for pose in poses for image_id in images[pose]]
