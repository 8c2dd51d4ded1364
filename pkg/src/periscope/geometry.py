"""Ocular crop geometry.

Faces are rotated so the eye line is horizontal and scaled to a fixed
inter-eye distance (IED). Each eye's aligned centre then becomes pixel
(56, 56) of its own 113x113 crop. The aligned frame puts the eye midpoint
at the origin, so the annotated left eye lands at (-IED/2, 0) and the right
eye at (+IED/2, 0).

Pixel convention: pixel ``img[i, j]`` is centred on the point ``(x=j, y=i)``,
the same frame the landmark annotations use.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

CROP_SIZE = 113
CROP_CENTER = CROP_SIZE // 2  # 56
FRONTAL_IED = 113.0
THREE_QUARTER_IED = 80.0
MIN_IED = 50.0
FRONTALITY_RATIO = 0.40

STATUS_OK = "ok"
STATUS_FRONTALITY = "reject_frontality"
STATUS_RESOLUTION = "reject_resolution"
STATUS_POSE = "excluded_pose"
STATUSES = (STATUS_OK, STATUS_FRONTALITY, STATUS_RESOLUTION, STATUS_POSE)


class ConfigError(ValueError):
    pass


class CropError(ValueError):
    pass


@dataclass(frozen=True)
class AlignmentTransform:
    """Similarity transform ``q = scale * R(rotation) @ p + translation``."""

    rotation: float
    scale: float
    translation: tuple

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def matrix(self):
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points):
        """Map source points (..., 2) into the aligned frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.matrix().T + np.asarray(self.translation)

    def inverse(self, points):
        """Map aligned points (..., 2) back to source coordinates."""
        q = np.asarray(points, dtype=np.float64) - np.asarray(self.translation)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        rot_t = np.array([[c, s], [-s, c]]) / self.scale
        return q @ rot_t.T


@dataclass(frozen=True)
class OcularCrop:
    subject_id: str
    image_id: str
    eye_side: str
    pose_tag: str
    pixels: np.ndarray = field(repr=False, compare=False)
    flipped: bool = False

    @property
    def key(self):
        return (self.subject_id, self.image_id, self.eye_side)


def inter_eye_distance(face):
    (lx, ly), (rx, ry) = face.left_eye, face.right_eye
    return math.hypot(rx - lx, ry - ly)


def frontality_offset(face):
    """Distance from the eye midpoint to the nose, measured along the eye line."""
    (lx, ly), (rx, ry) = face.left_eye, face.right_eye
    ied = math.hypot(rx - lx, ry - ly)
    ux, uy = (rx - lx) / ied, (ry - ly) / ied
    mx, my = (lx + rx) / 2, (ly + ry) / 2
    nx, ny = face.nose
    return abs((nx - mx) * ux + (ny - my) * uy)


def frontality_check(face, threshold_ratio=FRONTALITY_RATIO):
    """True when the nose lies strictly within ``threshold_ratio`` IED of the eye midpoint."""
    if not threshold_ratio > 0:
        raise ConfigError(f"frontality threshold must be positive, got {threshold_ratio}")
    return frontality_offset(face) < threshold_ratio * inter_eye_distance(face)


def resolution_check(face, min_ied=MIN_IED):
    if not min_ied > 0:
        raise ConfigError(f"min_ied must be positive, got {min_ied}")
    return inter_eye_distance(face) >= min_ied


def target_ied_for(face, frontal_ied=FRONTAL_IED, three_quarter_ied=THREE_QUARTER_IED):
    return three_quarter_ied if face.pose_tag == "three_quarter" else frontal_ied


def compute_alignment(face, target_ied):
    """Similarity transform making the eye line horizontal at ``target_ied``.

    The annotated left eye ends up at the smaller x and the eye midpoint at
    the origin.
    """
    if not target_ied > 0:
        raise ConfigError(f"target_ied must be positive, got {target_ied}")
    (lx, ly), (rx, ry) = face.left_eye, face.right_eye
    dx, dy = rx - lx, ry - ly
    rotation = -math.atan2(dy, dx)
    scale = target_ied / math.hypot(dx, dy)
    c, s = math.cos(rotation), math.sin(rotation)
    mx, my = (lx + rx) / 2, (ly + ry) / 2
    tx = -scale * (c * mx - s * my)
    ty = -scale * (s * mx + c * my)
    return AlignmentTransform(rotation, scale, (tx, ty))


def bilinear_sample(image, xs, ys, fill="zero"):
    """Sample ``image`` at float coordinates with bilinear weights.

    ``fill="zero"`` treats everything outside the image as 0;
    ``fill="edge"`` replicates the border pixels.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if fill == "edge":
        xs = np.clip(xs, 0, w - 1)
        ys = np.clip(ys, 0, h - 1)
    elif fill != "zero":
        raise ConfigError(f"unknown fill mode {fill!r}")
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def tap(yi, xi):
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = img[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        if vals.ndim > inside.ndim:
            inside = inside[..., None]
        return np.where(inside, vals, 0.0)

    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    return ((1 - fx) * (1 - fy) * tap(y0, x0) + fx * (1 - fy) * tap(y0, x0 + 1)
            + (1 - fx) * fy * tap(y0 + 1, x0) + fx * fy * tap(y0 + 1, x0 + 1))


def flip_crop(crop):
    """Mirror a crop horizontally and toggle its ``flipped`` flag."""
    return replace(crop, pixels=crop.pixels[:, ::-1].copy(), flipped=not crop.flipped)


def extract_crops(image, face, transform, fill="zero"):
    """Cut the two eye-centred 113x113 crops out of ``image``.

    Returns ``(left, right)``; the left crop is mirrored. ``image`` is an
    (H, W) or (H, W, C) uint8 array matching the annotation's size.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if (w, h) != (face.image_width, face.image_height):
        raise CropError(f"image {face.key} is {w}x{h}, annotation says "
                        f"{face.image_width}x{face.image_height}")
    offsets = np.arange(CROP_SIZE, dtype=np.float64) - CROP_CENTER
    crops = {}
    for side, eye in (("left", face.left_eye), ("right", face.right_eye)):
        ex, ey = eye
        if not (0 <= ex <= w - 1 and 0 <= ey <= h - 1):
            raise CropError(f"{side} eye of {face.key} at ({ex}, {ey}) lies outside the image")
        cx, cy = transform.apply(eye)
        gx, gy = np.meshgrid(cx + offsets, cy + offsets)
        src = transform.inverse(np.stack([gx, gy], axis=-1))
        vals = bilinear_sample(image, src[..., 0], src[..., 1], fill=fill)
        pixels = np.clip(np.rint(vals), 0, 255).astype(np.uint8)
        crops[side] = OcularCrop(face.subject_id, face.image_id, side, face.pose_tag, pixels)
    return flip_crop(crops["left"]), crops["right"]


def normalize_pixels(crop):
    """Map 8-bit intensities to ``(v - 127.5) / 128``."""
    pixels = crop.pixels if isinstance(crop, OcularCrop) else crop
    return (np.asarray(pixels, dtype=np.float64) - 127.5) / 128.0


def classify_face(face, frontality_ratio=FRONTALITY_RATIO, min_ied=MIN_IED):
    """Return the crop-manifest status for one face.

    Profiles are excluded outright. The frontality rule is applied before
    the resolution rule, so each face gets exactly one status.
    """
    if face.pose_tag == "profile":
        return STATUS_POSE
    if not frontality_check(face, frontality_ratio):
        return STATUS_FRONTALITY
    if not resolution_check(face, min_ied):
        return STATUS_RESOLUTION
    return STATUS_OK


@dataclass
class CropCounts:
    total: int = 0
    accepted: int = 0
    reject_frontality: int = 0
    reject_resolution: int = 0
    excluded_pose: int = 0
    errors: int = 0
    crops: int = 0

    def add(self, status):
        self.total += 1
        if status == STATUS_OK:
            self.accepted += 1
        elif status == STATUS_FRONTALITY:
            self.reject_frontality += 1
        elif status == STATUS_RESOLUTION:
            self.reject_resolution += 1
        elif status == STATUS_POSE:
            self.excluded_pose += 1
        else:
            self.errors += 1

    def identity_holds(self):
        rejected = self.reject_frontality + self.reject_resolution + self.excluded_pose
        return (self.accepted == self.total - rejected - self.errors
                and self.crops == 2 * self.accepted)


def process_face(face, load_image, frontal_ied=FRONTAL_IED, three_quarter_ied=THREE_QUARTER_IED,
                 min_ied=MIN_IED, frontality_ratio=FRONTALITY_RATIO, fill="zero"):
    """Filter and crop one face. Returns ``(status, crops_or_None, error_or_None)``."""
    status = classify_face(face, frontality_ratio, min_ied)
    if status != STATUS_OK:
        return status, None, None
    try:
        image = load_image(face)
        t = compute_alignment(face, target_ied_for(face, frontal_ied, three_quarter_ied))
        return status, extract_crops(image, face, t, fill=fill), None
    except (OSError, CropError, ValueError) as exc:
        return "error", None, str(exc)


def crop_faces(faces, load_image, frontal_ied=FRONTAL_IED, three_quarter_ied=THREE_QUARTER_IED,
               min_ied=MIN_IED, frontality_ratio=FRONTALITY_RATIO, fill="zero", threads=1):
    """Run the filter and crop pipeline over a sequence of annotations.

    ``load_image(face)`` returns the decoded pixel array. Faces that fail to
    load or crop get status ``"error"``.

    Returns ``(statuses, crops, counts, errors)``: ``crops`` holds the
    ``(left, right)`` tuple of each accepted face in input order, ``errors``
    maps a face index to its message. Output order does not depend on
    ``threads``.
    """
    if not 0 < frontality_ratio <= 1:
        raise ConfigError(f"frontality ratio must be in (0, 1], got {frontality_ratio}")
    if not min_ied > 0:
        raise ConfigError(f"min_ied must be positive, got {min_ied}")
    work = partial(process_face, load_image=load_image, frontal_ied=frontal_ied,
                   three_quarter_ied=three_quarter_ied, min_ied=min_ied,
                   frontality_ratio=frontality_ratio, fill=fill)
    if threads > 1 and len(faces) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, faces))
    else:
        results = [work(f) for f in faces]

    statuses, crops, errors = [], [], {}
    counts = CropCounts()
    for i, (status, pair, err) in enumerate(results):
        statuses.append(status)
        counts.add(status)
        if pair is not None:
            crops.append(pair)
            counts.crops += 2
        if err is not None:
            errors[i] = err
    return statuses, crops, counts, errors
