"""
Reading and writing meshes and landmarks
========================================

Build a small dome surface, save it as binary and ASCII PLY, read it back,
and do the same for a landmark set in CSV and JSON.
"""

import tempfile
import warnings
from pathlib import Path

import numpy as np

from facemorph.meshio import read_landmarks, read_ply, validate_mesh, write_landmarks, write_ply
from facemorph.synthkit import face_template, generate_test_mesh

out = Path(tempfile.mkdtemp(prefix="facemorph_demo_"))

# A 21 x 21 paraboloid cap, 100 mm across
mesh = generate_test_mesh("dome", 21, 100.0)
print(mesh.vertex_count, "vertices,", mesh.face_count, "faces")

# Binary files store doubles, so the round trip is bit-exact
write_ply(mesh, out / "dome.ply")
back = read_ply(out / "dome.ply")
print("binary round trip exact:", back == mesh)

write_ply(mesh, out / "dome_ascii.ply", "ascii")
print("ascii round trip exact:", read_ply(out / "dome_ascii.ply") == mesh)

###############################################################################
# Validation reports problems without raising.  Here one face reuses a vertex.

faces = mesh.faces.copy()
faces[0, 1] = faces[0, 0]
report = validate_mesh(mesh.replace(faces=faces))
print("ok:", report.ok, "warnings:", report.warnings)

###############################################################################
# Landmarks.  JSON keeps subject and method metadata, CSV only names and xyz.

lms = face_template(subject_id="s001", method_tag="SPG")
write_landmarks(lms, out / "s001.json")
print(read_landmarks(out / "s001.json") == lms)

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    write_landmarks(lms, out / "s001.csv")
print(caught[0].message)
csv_back = read_landmarks(out / "s001.csv")
print(csv_back.subject_id, np.array_equal(csv_back.points, lms.points))
