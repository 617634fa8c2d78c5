"""
End-to-end evaluation run
=========================

Write a synthetic study (ground truth plus two simulated low-cost methods)
to disk, run every stage through the command-line entry point, and read a
few numbers out of the JSON report.
"""

import json
import tempfile
from pathlib import Path

from facemorph.cli import main
from facemorph.synthkit import EffectSpec, MethodSim, write_study

root = Path(tempfile.mkdtemp(prefix="facemorph_study_"))
config = write_study(
    root,
    n_subjects=12,
    methods={
        "COPY": MethodSim(copy=True),
        "PHONE": MethodSim(landmark_noise=1.5, surface_noise=0.8, resolution=21),
    },
    effects=(EffectSpec({"prn"}, (0.0, 3.0, 0.0), "A"),),
    seed=0,
)

###############################################################################
# Same as ``facemorph pipeline config.json --n-perm 999`` on the shell.

exit_code = main(["pipeline", str(config), "--n-perm", "999"])
print("exit code", exit_code)
report = json.loads((root / "out" / "report.json").read_text())

for row in report["geometric"]["summary"]:
    print(f"{row['method']:6s} {row['avg']:.3f} +- {row['sd']:.3f}  max {row['max']:.3f} mm")

for m, block in report["morphometric"]["methods"].items():
    print(f"{m:6s} PD {block['procrustes_distance']:.4f}  p {block['permutation']['p_value']:.3f}  "
          f"IoU {block['hull_iou']:.2f}  CS r {block['centroid_size']['correlation']['r']:.3f}")

print(json.dumps(report["edma"]["matching"], indent=1))
print("artifacts:", sorted(p.name for p in (root / "out" / "PHONE" / "s000").iterdir()))
