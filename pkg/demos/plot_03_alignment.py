"""
Landmark alignment and cropping
===============================

A scan arrives in its own pose and scale.  Five landmarks (inner eye
corners, nasal base, mouth corners) fix a similarity transform onto the
reference frame; both surfaces are then cut to a sphere around the nose tip.
"""

import numpy as np

from facemorph.geomeval import SimilarityTransform, apply_transform, crop_sphere, similarity_align
from facemorph.synthkit import ALIGNMENT_LANDMARKS, face_template, generate_test_mesh, make_rng, random_rotation

rng = make_rng(3)
reference = face_template(method_tag="SPG")
surface = generate_test_mesh("dome", 41, 200.0)

pose = SimilarityTransform(random_rotation(rng), 1.15, [30.0, -12.0, 250.0])
scan_lms = apply_transform(reference, pose)
scan_mesh = apply_transform(surface, pose)

###############################################################################
# Fit on the five landmarks only, then move everything.

t = similarity_align(scan_lms.subset(ALIGNMENT_LANDMARKS), reference.subset(ALIGNMENT_LANDMARKS))
print("scale", t.scale, "rotation angle (rad)", t.rotation_angle)
aligned = apply_transform(scan_lms, t)
print("max landmark error after alignment:", np.abs(aligned.points - reference.points).max())

# The fitted transform undoes the pose
print("composition is identity:", np.allclose(t.compose(pose).matrix(), np.eye(4), atol=1e-9))

###############################################################################
# Crop at 60 mm around the nose tip.  Faces with any vertex outside go away.

nose = reference.point("prn")
cropped = crop_sphere(apply_transform(scan_mesh, t), nose, 60.0)
print(scan_mesh.vertex_count, "->", cropped.vertex_count, "vertices")
print("farthest kept vertex:", np.linalg.norm(cropped.vertices - nose, axis=1).max())
