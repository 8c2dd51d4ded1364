"""Filtering faces and cutting ocular crops.

A synthetic face image is drawn with two bright "eyes", rotated by 20
degrees, and pushed through the filter and crop pipeline. The aligned crops
put each eye at pixel (56, 56); the left crop comes back mirrored.
"""

import math

import numpy as np

from periscope.geometry import (classify_face, compute_alignment, extract_crops,
                                inter_eye_distance, normalize_pixels, target_ied_for)
from periscope.ingest import FaceAnnotation

H, W = 400, 500
angle = math.radians(20)
centre = np.array([250.0, 200.0])
ux, uy = math.cos(angle), math.sin(angle)
half_ied = 45.0
left = tuple(centre - half_ied * np.array([ux, uy]))
right = tuple(centre + half_ied * np.array([ux, uy]))
nose = tuple(centre + 50 * np.array([-uy, ux]))

# paint a gaussian blob at each eye so the crops have something to show
yy, xx = np.mgrid[0:H, 0:W]
image = np.zeros((H, W))
for ex, ey in (left, right):
    image += 255 * np.exp(-((xx - ex) ** 2 + (yy - ey) ** 2) / (2 * 6.0 ** 2))
image = np.clip(image, 0, 255).astype(np.uint8)

faces = [
    FaceAnnotation("demo", "tilted", "frontal", left, right, nose, W, H),
    FaceAnnotation("demo", "turned", "frontal", left, right, (centre[0] + 60, centre[1]), W, H),
    FaceAnnotation("demo", "tiny", "frontal", (240, 200), (270, 200), (255, 230), W, H),
    FaceAnnotation("demo", "side", "profile", left, right, nose, W, H),
]
for f in faces:
    print(f"{f.image_id:8s} IED {inter_eye_distance(f):6.1f}px -> {classify_face(f)}")

face = faces[0]
t = compute_alignment(face, target_ied_for(face))
print("aligned eyes:", np.round(t.apply([face.left_eye, face.right_eye]), 6).tolist())

left_crop, right_crop = extract_crops(image, face, t)
for crop in (left_crop, right_crop):
    peak = tuple(int(v) for v in np.unravel_index(np.argmax(crop.pixels), crop.pixels.shape))
    print(f"{crop.eye_side:5s} crop {crop.pixels.shape}, flipped={crop.flipped}, "
          f"brightest pixel at {peak}")

x = normalize_pixels(right_crop)
print(f"network input range [{x.min():.3f}, {x.max():.3f}]")
