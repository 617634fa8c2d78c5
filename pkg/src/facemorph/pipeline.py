"""End-to-end evaluation pipeline: align/crop, geometry, morphometrics, EDMA.

A run is described by a :class:`RunConfig` (loaded from TOML or JSON).
Every stage returns a JSON-ready report fragment and writes its artifacts
under ``<output_dir>/<method_tag>/<subject_id>/``.
"""

from __future__ import annotations

import contextlib
import csv
import datetime as _dt
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__, edma, geomeval, morpho
from .errors import (
    ConfigError,
    DataError,
    FaceMorphError,
    GroupTooSmall,
    IoFailure,
    MissingAlignmentLandmark,
    NumericError,
    SubjectMismatch,
    TooFewSubjects,
)
from .meshio import LandmarkSet, TriangleMesh, read_landmarks, read_ply, write_landmarks, write_ply

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "SCHEMA_VERSION",
    "SubjectInput",
    "RunConfig",
    "StageError",
    "Dataset",
    "load_config",
    "load_inputs",
    "cmd_align_crop",
    "cmd_geom_compare",
    "cmd_gpa_analyze",
    "cmd_edma_compare",
    "cmd_pipeline",
    "dump_report",
    "write_report",
]

SCHEMA_VERSION = 1
DEFAULT_ALIGN = ("en_r", "en_l", "sn", "ch_r", "ch_l")


class StageError(FaceMorphError):
    """Failure inside a pipeline stage, tagged with where it happened."""

    def __init__(self, stage: str, cause: Exception, subject: str | None = None,
                 method: str | None = None):
        self.stage, self.cause, self.subject, self.method = stage, cause, subject, method
        self.exit_code = getattr(cause, "exit_code", 3 if isinstance(cause, OSError) else 4)
        where = [f"stage={stage}"]
        if method:
            where.append(f"method={method}")
        if subject:
            where.append(f"subject={subject}")
        super().__init__(f"[{' '.join(where)}] {type(cause).__name__}: {cause}")


@contextlib.contextmanager
def _stage(name: str, subject: str | None = None, method: str | None = None):
    try:
        yield
    except StageError:
        raise
    except (FaceMorphError, OSError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc, subject, method) from exc


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class SubjectInput:
    landmarks: Path
    mesh: Path | None = None


@dataclass
class RunConfig:
    ground_truth: dict[str, SubjectInput]
    methods: dict[str, dict[str, SubjectInput]]
    ground_truth_tag: str = "SPG"
    crop_radius: float = 100.0
    nose_tip_name: str = "prn"
    align_landmark_names: tuple[str, ...] = DEFAULT_ALIGN
    align: bool = True
    align_scale: bool = True
    direction: str = "source_to_target"
    grouping: dict[str, str] | None = None
    groups: tuple[str, str] | None = None
    tol: float = morpho.GPA_TOL
    max_iter: int = morpho.GPA_MAX_ITER
    n_perm: int = morpho.N_PERM
    n_boot: int = edma.N_BOOT
    alpha: float = edma.ALPHA
    top_n: tuple[int, ...] = (5, 10)
    seed: int = 0
    output_dir: Path = Path("facemorph_out")
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def subjects(self) -> list[str]:
        return list(self.ground_truth)

    def check(self) -> None:
        if not self.ground_truth:
            raise ConfigError("ground_truth lists no subjects")
        if not self.methods:
            raise ConfigError("no methods configured")
        if self.ground_truth_tag in self.methods:
            raise ConfigError(f"method name {self.ground_truth_tag!r} clashes with the ground truth tag")
        if not self.crop_radius > 0:
            raise ConfigError("crop_radius must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if self.n_perm < 1 or self.n_boot < 1 or self.max_iter < 1:
            raise ConfigError("n_perm, n_boot and max_iter must be positive")
        if not self.top_n or any(n < 1 for n in self.top_n):
            raise ConfigError("top_n entries must be >= 1")
        if self.direction not in ("source_to_target", "target_to_source", "symmetric"):
            raise ConfigError(f"unknown direction {self.direction!r}")
        want = set(self.ground_truth)
        for m, subj in self.methods.items():
            if set(subj) != want:
                missing = sorted(want - set(subj))
                extra = sorted(set(subj) - want)
                raise SubjectMismatch(
                    f"method {m!r} subjects differ from ground truth (missing {missing}, extra {extra})"
                )


def _subject_inputs(block: Any, base: Path, what: str) -> dict[str, SubjectInput]:
    if not isinstance(block, dict):
        raise ConfigError(f"{what} must map subject ids to {{mesh, landmarks}}")
    out = {}
    for sid, entry in block.items():
        if isinstance(entry, str):
            entry = {"landmarks": entry}
        if not isinstance(entry, dict) or "landmarks" not in entry:
            raise ConfigError(f"{what}.{sid} needs a 'landmarks' path")
        mesh = entry.get("mesh")
        out[str(sid)] = SubjectInput(base / entry["landmarks"], base / mesh if mesh else None)
    return out


def _read_grouping(value: Any, base: Path) -> dict[str, str]:
    if isinstance(value, dict):
        return {str(k): str(v) for k, v in value.items()}
    if isinstance(value, str):
        path = base / value
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = [r for r in csv.reader(fh) if r]
        except OSError as exc:
            raise ConfigError(f"cannot read grouping file {path}: {exc}") from exc
        if rows and [c.strip().lower() for c in rows[0]] == ["subject_id", "group"]:
            rows = rows[1:]
        return {r[0].strip(): r[1].strip() for r in rows if len(r) >= 2}
    raise ConfigError("grouping must be a mapping or a CSV path")


_SCALARS = {
    "crop_radius": float, "nose_tip_name": str, "align": bool, "align_scale": bool,
    "direction": str, "tol": float, "max_iter": int, "n_perm": int, "n_boot": int,
    "alpha": float, "seed": int,
}


def config_from_dict(doc: dict, base: Path = Path("."), overrides: dict | None = None) -> RunConfig:
    doc = dict(doc)
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    try:
        gt = doc["ground_truth"]
        methods = doc["methods"]
    except KeyError as exc:
        raise ConfigError(f"config lacks required key {exc.args[0]!r}") from None
    if isinstance(gt, dict) and "subjects" in gt:
        gt_tag = str(gt.get("tag", "SPG"))
        gt = gt["subjects"]
    else:
        gt_tag = str(doc.get("ground_truth_tag", "SPG"))
    if not isinstance(methods, dict):
        raise ConfigError("methods must map method tags to subject blocks")
    kw: dict[str, Any] = {
        "ground_truth": _subject_inputs(gt, base, "ground_truth"),
        "methods": {str(m): _subject_inputs(b, base, f"methods.{m}") for m, b in methods.items()},
        "ground_truth_tag": gt_tag,
        "raw": doc,
    }
    try:
        for key, typ in _SCALARS.items():
            if key in doc:
                if typ is bool and not isinstance(doc[key], bool):
                    raise ConfigError(f"{key} must be true/false")
                kw[key] = typ(doc[key])
        if "align_landmark_names" in doc:
            kw["align_landmark_names"] = tuple(str(n) for n in doc["align_landmark_names"])
        if "top_n" in doc:
            tn = doc["top_n"]
            kw["top_n"] = tuple(int(n) for n in (tn if isinstance(tn, (list, tuple)) else [tn]))
        if doc.get("grouping") is not None:
            kw["grouping"] = _read_grouping(doc["grouping"], base)
        if doc.get("groups") is not None:
            g = tuple(str(x) for x in doc["groups"])
            if len(g) != 2:
                raise ConfigError("groups must name exactly two labels")
            kw["groups"] = g
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None
    out = doc.get("output_dir", "facemorph_out")
    kw["output_dir"] = Path(out) if Path(out).is_absolute() else base / out
    cfg = RunConfig(**kw)
    cfg.check()
    return cfg


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a TOML or JSON run configuration; paths inside are relative to it."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            doc = tomllib.loads(data.decode("utf-8"))
        else:
            doc = json.loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a table/object")
    return config_from_dict(doc, path.parent, overrides)


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.raw, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# data

@dataclass
class Dataset:
    """Landmarks (and meshes, when loaded) per tag and subject.

    ``landmarks[tag][subject]`` / ``meshes[tag][subject]``; ``tag`` is either
    the ground-truth tag or a method name.
    """

    gt_tag: str
    subjects: list[str]
    methods: list[str]
    landmarks: dict[str, dict[str, LandmarkSet]]
    meshes: dict[str, dict[str, TriangleMesh]]
    transforms: dict[str, dict[str, geomeval.SimilarityTransform]] = field(default_factory=dict)
    aligned: bool = False

    @property
    def tags(self) -> list[str]:
        return [self.gt_tag] + self.methods

    def configs(self, tag: str) -> list[LandmarkSet]:
        return [self.landmarks[tag][s] for s in self.subjects]


def load_inputs(cfg: RunConfig, need_meshes: bool = True) -> Dataset:
    blocks = {cfg.ground_truth_tag: cfg.ground_truth, **cfg.methods}
    lms: dict[str, dict[str, LandmarkSet]] = {}
    meshes: dict[str, dict[str, TriangleMesh]] = {}
    names = None
    for tag, block in blocks.items():
        lms[tag], meshes[tag] = {}, {}
        for sid in cfg.subjects:
            inp = block[sid]
            with _stage("load", sid, tag):
                ls = read_landmarks(inp.landmarks, subject_id=sid, method_tag=tag)
                if names is None:
                    names = ls.names
                elif ls.names != names:
                    raise DataError("landmark names/order differ from the first subject's")
                lms[tag][sid] = ls
                if need_meshes:
                    if inp.mesh is None:
                        raise ConfigError("no mesh path configured")
                    meshes[tag][sid] = read_ply(inp.mesh)
    return Dataset(cfg.ground_truth_tag, cfg.subjects, list(cfg.methods), lms, meshes,
                   aligned=not cfg.align)


def _outdir(cfg: RunConfig, *parts: str) -> Path:
    p = Path(cfg.output_dir, *parts)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {p}: {exc}") from exc
    return p


# --------------------------------------------------------------------------
# stages

def cmd_align_crop(cfg: RunConfig, data: Dataset | None = None) -> tuple[Dataset, dict]:
    """Similarity-align every method onto the ground truth and crop all meshes.

    The transform is fitted on the configured alignment landmarks and
    applied to the method's mesh and full landmark set.  Ground-truth and
    aligned method meshes are then cropped to ``crop_radius`` around the
    ground-truth nose tip.
    """
    if data is None:
        data = load_inputs(cfg)
    frag: dict[str, Any] = {"crop_radius": cfg.crop_radius, "allow_scale": cfg.align_scale,
                            "landmarks": list(cfg.align_landmark_names), "methods": {}}
    have_meshes = all(data.meshes[t] for t in data.tags)
    gt = data.gt_tag
    for sid in data.subjects:
        with _stage("align_crop", sid, gt):
            gl = data.landmarks[gt][sid]
            if cfg.nose_tip_name not in gl.names:
                raise MissingAlignmentLandmark(f"nose tip {cfg.nose_tip_name!r} not in landmarks")
            if have_meshes:
                data.meshes[gt][sid] = geomeval.crop_sphere(
                    data.meshes[gt][sid], gl.point(cfg.nose_tip_name), cfg.crop_radius)
                out = _outdir(cfg, gt, sid)
                write_ply(data.meshes[gt][sid], out / "mesh.ply")
                write_landmarks(gl, out / "landmarks.json")

    for m in data.methods:
        rows = {}
        data.transforms[m] = {}
        for sid in data.subjects:
            with _stage("align_crop", sid, m):
                gl, ml = data.landmarks[gt][sid], data.landmarks[m][sid]
                missing = [n for n in cfg.align_landmark_names if n not in gl.names or n not in ml.names]
                if missing:
                    raise MissingAlignmentLandmark(f"alignment landmarks {missing} not found")
                t = geomeval.similarity_align(
                    ml.subset(cfg.align_landmark_names), gl.subset(cfg.align_landmark_names),
                    allow_scale=cfg.align_scale)
                ml = geomeval.apply_transform(ml, t)
                data.landmarks[m][sid] = ml
                data.transforms[m][sid] = t
                resid = ml.subset(cfg.align_landmark_names).points - gl.subset(cfg.align_landmark_names).points
                row = {
                    "scale": t.scale,
                    "rotation_angle": t.rotation_angle,
                    "translation": t.translation.tolist(),
                    "rms_residual": float(np.sqrt(np.mean(np.sum(resid * resid, axis=1)))),
                }
                out = _outdir(cfg, m, sid)
                if have_meshes:
                    mesh = geomeval.apply_transform(data.meshes[m][sid], t)
                    mesh = geomeval.crop_sphere(mesh, gl.point(cfg.nose_tip_name), cfg.crop_radius)
                    data.meshes[m][sid] = mesh
                    row["vertices_after_crop"] = mesh.vertex_count
                    write_ply(mesh, out / "mesh.ply")
                write_landmarks(ml, out / "landmarks.json")
                (out / "transform.json").write_text(json.dumps(t.to_dict(), indent=2) + "\n")
                rows[sid] = row
        frag["methods"][m] = {"subjects": rows}
    data.aligned = True
    return data, frag


def _ensure_aligned(cfg: RunConfig, data: Dataset | None, need_meshes: bool) -> tuple[Dataset, dict | None]:
    if data is None:
        data = load_inputs(cfg, need_meshes)
    if not data.aligned:
        return cmd_align_crop(cfg, data)
    return data, None


def cmd_geom_compare(cfg: RunConfig, data: Dataset | None = None) -> dict:
    """Point-to-point and point-to-surface metrics of every method vs ground truth."""
    data, _ = _ensure_aligned(cfg, data, need_meshes=True)
    gt = data.gt_tag
    frag: dict[str, Any] = {"direction": cfg.direction, "methods": {}, "summary": []}
    for m in data.methods:
        per_subject, pooled_p2p, pooled_dev = {}, [], []
        for sid in data.subjects:
            with _stage("geom_compare", sid, m):
                src, tgt = data.meshes[m][sid], data.meshes[gt][sid]
                st = geomeval.point_to_point_stats(src, tgt, cfg.direction)
                dev = geomeval.surface_deviation(src, tgt)
                out = _outdir(cfg, m, sid)
                write_ply(geomeval.colorize_deviation(src, dev), out / "deviation.ply")
                _write_point_csv(out / "point_distances.csv", st, dev, cfg.direction)
                per_subject[sid] = {"point_to_point": st.summary(), "surface_deviation": dev.summary()}
                pooled_p2p.append(st.per_point)
                pooled_dev.append(dev.per_vertex)
        with _stage("geom_compare", None, m):
            pooled = geomeval.DistanceStats.from_distances(np.concatenate(pooled_p2p))
            pooled_d = geomeval.DeviationField(np.concatenate(pooled_dev))
            subj_means = [per_subject[s]["point_to_point"]["mean"] for s in data.subjects]
            frag["methods"][m] = {
                "pooled": pooled.summary(),
                "mean_of_subject_means": float(np.mean(subj_means)),
                "surface_deviation": pooled_d.summary(),
                "subjects": per_subject,
            }
            frag["summary"].append({"method": m, "avg": pooled.mean, "sd": pooled.sd, "max": pooled.max})
    return frag


def _write_point_csv(path: Path, st: geomeval.DistanceStats, dev: geomeval.DeviationField,
                     direction: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if direction == "source_to_target":
            w.writerow(["vertex", "point_to_point", "point_to_surface"])
            for i, (a, b) in enumerate(zip(st.per_point.tolist(), dev.per_vertex.tolist())):
                w.writerow([i, repr(a), repr(b)])
        else:
            w.writerow(["index", "point_to_point"])
            for i, a in enumerate(st.per_point.tolist()):
                w.writerow([i, repr(a)])


def _hull_iou(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    ha, hb = morpho.convex_hull_2d(a), morpho.convex_hull_2d(b)
    return ha, hb, morpho.polygon_iou(ha, hb)


def cmd_gpa_analyze(cfg: RunConfig, data: Dataset | None = None) -> dict:
    """CS/PPD correlations, joint GPA + PCA morphospace, hull IoU and PD permutation test."""
    data, _ = _ensure_aligned(cfg, data, need_meshes=False)
    if len(data.subjects) < 3:
        raise StageError("gpa_analyze", TooFewSubjects("need at least 3 subjects"))
    gt = data.gt_tag
    with _stage("gpa_analyze", None, gt):
        gt_cfgs = data.configs(gt)
        gt_cs = [morpho.centroid_size(c) for c in gt_cfgs]
        gt_ppd = morpho.pairwise_procrustes_distances(morpho.gpa(gt_cfgs, tol=cfg.tol, max_iter=cfg.max_iter))
    frag: dict[str, Any] = {"n_perm": cfg.n_perm, "seed": cfg.seed, "methods": {}}
    for m in data.methods:
        with _stage("gpa_analyze", None, m):
            cfgs = data.configs(m)
            cs = [morpho.centroid_size(c) for c in cfgs]
            ppd = morpho.pairwise_procrustes_distances(morpho.gpa(cfgs, tol=cfg.tol, max_iter=cfg.max_iter))
            joint = morpho.gpa(gt_cfgs + cfgs, tol=cfg.tol, max_iter=cfg.max_iter)
            pc = morpho.pca(joint)
            n = len(gt_cfgs)
            hg, hm, iou = _hull_iou(pc.scores[:n, :2], pc.scores[n:, :2])
            perm = morpho.permutation_test_pd(gt_cfgs, cfgs, cfg.n_perm, cfg.seed, cfg.tol, cfg.max_iter)
            _write_scores_csv(_outdir(cfg, m) / "pca_scores.csv", pc, data.subjects, gt, m)
            prop = pc.proportion()
            frag["methods"][m] = {
                "centroid_size": {"correlation": morpho.pearson_correlation(gt_cs, cs).to_dict(),
                                  "ground_truth": gt_cs, "method": cs},
                "ppd": morpho.pearson_correlation(gt_ppd, ppd).to_dict(),
                "procrustes_distance": perm.observed_statistic,
                "permutation": perm.to_dict(),
                "gpa": {"iterations": joint.iterations, "converged": joint.converged},
                "pca_variance": [
                    {"pc": k + 1, "variance": float(v), "proportion": float(p),
                     "cumulative": float(c)}
                    for k, (v, p, c) in enumerate(zip(pc.variance_explained, prop, np.cumsum(prop)))
                ],
                "hull_iou": iou,
                "hulls": {"ground_truth": hg.tolist(), "method": hm.tolist()},
            }
    return frag


def _write_scores_csv(path: Path, pc: morpho.PcaResult, subjects, gt: str, m: str) -> None:
    k = pc.scores.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "method_tag"] + [f"PC{i + 1}" for i in range(k)])
        tags = [gt] * len(subjects) + [m] * len(subjects)
        for sid, tag, row in zip(list(subjects) * 2, tags, pc.scores.tolist()):
            w.writerow([sid, tag] + [repr(v) for v in row])


def _group_labels(cfg: RunConfig, subjects: list[str]) -> tuple[str, str]:
    if cfg.grouping is None:
        raise ConfigError("EDMA needs a subject grouping")
    missing = [s for s in subjects if s not in cfg.grouping]
    if missing:
        raise SubjectMismatch(f"grouping lacks subjects {missing}")
    labels = sorted({cfg.grouping[s] for s in subjects})
    if cfg.groups is not None:
        if set(cfg.groups) != set(labels):
            raise ConfigError(f"groups {list(cfg.groups)} do not match labels {labels}")
        return cfg.groups
    if len(labels) != 2:
        raise ConfigError(f"EDMA needs exactly two groups, found {labels}")
    return labels[0], labels[1]


def cmd_edma_compare(cfg: RunConfig, data: Dataset | None = None) -> dict:
    """Group form differences per method and matching distances vs ground truth."""
    data, _ = _ensure_aligned(cfg, data, need_meshes=False)
    with _stage("edma_compare"):
        la, lb = _group_labels(cfg, data.subjects)
        ga = [s for s in data.subjects if cfg.grouping[s] == la]
        gb = [s for s in data.subjects if cfg.grouping[s] == lb]
        if len(ga) < 2 or len(gb) < 2:
            raise GroupTooSmall(f"groups {la!r}/{lb!r} have {len(ga)}/{len(gb)} subjects")
    frag: dict[str, Any] = {"groups": [la, lb], "alpha": cfg.alpha, "n_boot": cfg.n_boot,
                            "seed": cfg.seed, "methods": {}, "matching": {}}
    tops: dict[str, dict[int, edma.TopN]] = {}
    for tag in data.tags:
        with _stage("edma_compare", None, tag):
            fa = [edma.form_matrix(data.landmarks[tag][s]) for s in ga]
            fb = [edma.form_matrix(data.landmarks[tag][s]) for s in gb]
            fdm = edma.bootstrap_fdm(fa, fb, cfg.n_boot, cfg.alpha, cfg.seed)
            sig = edma.significant_distances(fdm)
            edma.write_fdm_csv(fdm, _outdir(cfg, tag) / "fdm.csv")
            tops[tag] = {n: edma.top_n(sig, n) for n in cfg.top_n}
            frag["methods"][tag] = {
                "n_significant": {"longer": len(sig.longer), "shorter": len(sig.shorter)},
                "top_n": {str(n): t.to_dict() for n, t in tops[tag].items()},
            }
    for n in cfg.top_n:
        table = {}
        for m in data.methods:
            md = edma.matching_distances(tops[data.gt_tag][n], tops[m][n])
            frag["methods"][m].setdefault("matching_distances", {})[str(n)] = md.to_dict()
            table[m] = {"longer": md.longer, "shorter": md.shorter, "avg": md.average}
        frag["matching"][f"top{n}"] = table
    return frag


def cmd_pipeline(cfg: RunConfig, timestamp: str | None = None) -> dict:
    """Run every stage and assemble the schema-v1 report."""
    data = load_inputs(cfg, need_meshes=True)
    align_frag = None
    if cfg.align:
        data, align_frag = cmd_align_crop(cfg, data)
    report = {
        "schema_version": SCHEMA_VERSION,
        "ground_truth": data.gt_tag,
        "methods": data.methods,
        "subjects": data.subjects,
        "alignment": align_frag,
        "geometric": cmd_geom_compare(cfg, data),
        "morphometric": cmd_gpa_analyze(cfg, data),
        "edma": cmd_edma_compare(cfg, data) if cfg.grouping is not None else None,
        "provenance": provenance(cfg, timestamp),
    }
    return report


def provenance(cfg: RunConfig, timestamp: str | None = None) -> dict:
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return {
        "timestamp": timestamp,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {"facemorph": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }


def dump_report(report: dict) -> str:
    """Deterministic JSON text (sorted keys, shortest round-trip floats, no NaN)."""
    try:
        return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    except ValueError as exc:
        raise NumericError(f"report contains a non-finite number: {exc}") from None


def write_report(report: dict, path) -> None:
    text = dump_report(report)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc}") from exc
