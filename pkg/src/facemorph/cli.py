"""Command-line interface.

    facemorph pipeline CONFIG [overrides]
    facemorph align-crop | geom-compare | gpa-analyze | edma-compare CONFIG [overrides]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .errors import ConfigError, FaceMorphError

log = logging.getLogger("facemorph")

_COMMANDS = {
    "pipeline": "run every stage and write report.json",
    "align-crop": "align methods onto the ground truth and crop meshes",
    "geom-compare": "point-to-point and surface deviation metrics",
    "gpa-analyze": "CS/PPD correlations, GPA/PCA morphospace, IoU, PD permutation test",
    "edma-compare": "EDMA form differences and matching distances",
}


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=Path, help="TOML or JSON run configuration")
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--crop-radius", type=float)
    p.add_argument("--nose-tip-name")
    p.add_argument("--align-landmark-names", nargs="+")
    p.add_argument("--no-align", dest="align", action="store_const", const=False)
    p.add_argument("--rigid", dest="align_scale", action="store_const", const=False,
                   help="fit rotation + translation only")
    p.add_argument("--direction", choices=["source_to_target", "target_to_source", "symmetric"])
    p.add_argument("--grouping", help="CSV with subject_id,group columns")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--n-perm", type=int)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--top-n", type=int, nargs="+")
    p.add_argument("--seed", type=int)
    p.add_argument("--report", type=Path, help="report path (default <output_dir>/report.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facemorph", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"facemorph {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in _COMMANDS.items():
        _add_overrides(sub.add_parser(name, help=helptext))
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ["crop_radius", "nose_tip_name", "align_landmark_names", "align", "align_scale",
            "direction", "tol", "max_iter", "n_perm", "n_boot", "alpha", "top_n", "seed"]
    out = {k: getattr(args, k) for k in keys}
    if args.output_dir is not None:
        out["output_dir"] = str(args.output_dir.resolve())
    if args.grouping is not None:
        out["grouping"] = str(Path(args.grouping).resolve())
    return out


def run(args: argparse.Namespace) -> int:
    cfg = pipeline.load_config(args.config, _overrides(args))
    if args.command == "pipeline":
        report = pipeline.cmd_pipeline(cfg)
        name = "report.json"
    else:
        stage = {
            "align-crop": lambda: pipeline.cmd_align_crop(cfg)[1],
            "geom-compare": lambda: pipeline.cmd_geom_compare(cfg),
            "gpa-analyze": lambda: pipeline.cmd_gpa_analyze(cfg),
            "edma-compare": lambda: pipeline.cmd_edma_compare(cfg),
        }[args.command]
        report = {
            "schema_version": pipeline.SCHEMA_VERSION,
            "command": args.command,
            "result": stage(),
            "provenance": pipeline.provenance(cfg),
        }
        name = f"report_{args.command.replace('-', '_')}.json"
    path = args.report or Path(cfg.output_dir) / name
    pipeline.write_report(report, path)
    log.info("wrote %s", path)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return run(args)
    except FaceMorphError as exc:
        print(f"facemorph: error {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"facemorph: error {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
