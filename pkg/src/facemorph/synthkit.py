"""Seeded synthetic landmark populations and analytic test meshes.

Random numbers come from numpy's Philox-4x64 counter-based generator seeded
through ``numpy.random.SeedSequence(seed)``; Gaussian draws use
``Generator.standard_normal``.  The same seed therefore reproduces the same
population bit for bit on any platform running the same numpy release.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import GroupTooSmall, UnknownLandmarkName
from .meshio import LandmarkSet, TriangleMesh, write_landmarks, write_ply

__all__ = [
    "FACE_TEMPLATE",
    "ALIGNMENT_LANDMARKS",
    "face_template",
    "EffectSpec",
    "PopulationSpec",
    "generate_population",
    "generate_test_mesh",
    "make_rng",
    "MethodSim",
    "random_rotation",
    "write_study",
]

# Synthetic 21-landmark face (mm).  x: subject's left, y: up, z: forward.
# The nose tip "prn" sits at the origin.
FACE_TEMPLATE: dict[str, tuple[float, float, float]] = {
    "n": (0.0, 38.0, -20.0),
    "prn": (0.0, 0.0, 0.0),
    "sn": (0.0, -15.0, -14.0),
    "ls": (0.0, -27.0, -11.0),
    "sto": (0.0, -35.0, -14.0),
    "li": (0.0, -44.0, -12.0),
    "pg": (0.0, -68.0, -16.0),
    "ex_r": (-46.0, 32.0, -35.0),
    "ex_l": (46.0, 32.0, -35.0),
    "en_r": (-16.0, 32.0, -24.0),
    "en_l": (16.0, 32.0, -24.0),
    "ps_r": (-31.0, 38.0, -25.0),
    "ps_l": (31.0, 38.0, -25.0),
    "pi_r": (-31.0, 27.0, -26.0),
    "pi_l": (31.0, 27.0, -26.0),
    "al_r": (-17.0, -5.0, -16.0),
    "al_l": (17.0, -5.0, -16.0),
    "ch_r": (-25.0, -35.0, -22.0),
    "ch_l": (25.0, -35.0, -22.0),
    "go_r": (-55.0, -55.0, -70.0),
    "go_l": (55.0, -55.0, -70.0),
}

# inner eye commissures, nasal septum base, mouth corners
ALIGNMENT_LANDMARKS = ("en_r", "en_l", "sn", "ch_r", "ch_l")


def face_template(subject_id: str = "template", method_tag: str = "") -> LandmarkSet:
    names = list(FACE_TEMPLATE)
    return LandmarkSet(names, np.array([FACE_TEMPLATE[n] for n in names]), subject_id, method_tag)


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class EffectSpec:
    """Fixed displacement added to some landmarks of one group."""

    target_landmarks: frozenset
    displacement: tuple[float, float, float]
    applies_to: str = "A"

    def __post_init__(self):
        object.__setattr__(self, "target_landmarks", frozenset(self.target_landmarks))
        d = tuple(float(v) for v in self.displacement)
        if len(d) != 3 or not all(np.isfinite(d)):
            raise ValueError("displacement must be a finite 3-vector")
        object.__setattr__(self, "displacement", d)
        if self.applies_to not in ("A", "B"):
            raise ValueError("applies_to must be 'A' or 'B'")


@dataclass(frozen=True)
class PopulationSpec:
    template: LandmarkSet
    group_sizes: tuple[int, int] = (20, 20)
    noise_sd: float = 1.0
    effects: Sequence[EffectSpec] = field(default_factory=tuple)
    seed: int = 0
    method_tag: str = "SYN"

    def __post_init__(self):
        if min(self.group_sizes) < 2:
            raise GroupTooSmall("each group needs at least 2 specimens")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        for e in self.effects:
            unknown = e.target_landmarks - set(self.template.names)
            if unknown:
                raise UnknownLandmarkName(f"unknown landmarks {sorted(unknown)}")

    def group_offset(self, label: str) -> np.ndarray:
        off = np.zeros((len(self.template), 3))
        for e in self.effects:
            if e.applies_to == label:
                idx = [self.template.index(n) for n in e.target_landmarks]
                off[idx] += e.displacement
        return off


def generate_population(spec: PopulationSpec) -> tuple[list[LandmarkSet], list[LandmarkSet]]:
    """Template + isotropic Gaussian noise (+ group effects), group A drawn first."""
    rng = make_rng(spec.seed)
    base = spec.template.points
    groups = []
    for label, size in zip(("A", "B"), spec.group_sizes):
        off = spec.group_offset(label)
        members = []
        for i in range(size):
            noise = rng.standard_normal(base.shape) * spec.noise_sd
            members.append(LandmarkSet(
                spec.template.names, base + off + noise, f"{label}{i:03d}", spec.method_tag,
            ))
        groups.append(members)
    return groups[0], groups[1]


def generate_test_mesh(kind: str, resolution: int, extent: float = 100.0,
                       center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Analytic test surfaces.

    ``plane``: resolution x resolution grid spanning ``extent`` mm in x and y
    at z = 0, 2 (resolution - 1)^2 triangles.  ``sphere``: UV sphere of
    radius ``extent`` with ``resolution`` latitude rings and
    ``2 * resolution`` longitudes.  ``dome``: the plane grid lifted onto a
    paraboloid cap z = -(x^2 + y^2) / extent, apex at the center.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    c = np.asarray(center, dtype=np.float64)
    if kind in ("plane", "dome"):
        g = np.linspace(-extent / 2, extent / 2, resolution)
        xx, yy = np.meshgrid(g, g, indexing="xy")
        zz = np.zeros_like(xx) if kind == "plane" else -(xx ** 2 + yy ** 2) / extent
        v = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        faces = []
        for r in range(resolution - 1):
            for q in range(resolution - 1):
                a = r * resolution + q
                b, d = a + 1, a + resolution
                faces.append((a, b, d + 1))
                faces.append((a, d + 1, d))
        return TriangleMesh(v + c, np.array(faces))
    if kind == "sphere":
        n_lat, n_lon = resolution, 2 * resolution
        theta = np.pi * np.arange(1, n_lat + 1) / (n_lat + 1)
        phi = 2 * np.pi * np.arange(n_lon) / n_lon
        t, p = np.meshgrid(theta, phi, indexing="ij")
        ring = np.column_stack([np.sin(t).ravel() * np.cos(p).ravel(),
                                np.sin(t).ravel() * np.sin(p).ravel(),
                                np.cos(t).ravel()])
        v = np.vstack([[0.0, 0.0, 1.0], ring, [0.0, 0.0, -1.0]])
        v = v / np.linalg.norm(v, axis=1, keepdims=True) * extent
        top, bottom = 0, len(v) - 1
        faces = []
        for j in range(n_lon):
            faces.append((top, 1 + j, 1 + (j + 1) % n_lon))
        for i in range(n_lat - 1):
            for j in range(n_lon):
                a = 1 + i * n_lon + j
                b = 1 + i * n_lon + (j + 1) % n_lon
                faces.append((a, a + n_lon, b))
                faces.append((b, a + n_lon, b + n_lon))
        last = 1 + (n_lat - 1) * n_lon
        for j in range(n_lon):
            faces.append((last + j, bottom, last + (j + 1) % n_lon))
        return TriangleMesh(v + c, np.array(faces))
    raise ValueError(f"unknown mesh kind {kind!r}")


@dataclass(frozen=True)
class MethodSim:
    """How a simulated low-cost method degrades the ground truth.

    ``copy`` writes the ground-truth files unchanged.  Otherwise landmarks get
    isotropic noise, mesh vertices get noise along z, the mesh is rebuilt
    at ``resolution``, and with ``pose`` everything is moved by a random
    similarity transform so alignment has work to do.
    """

    copy: bool = False
    landmark_noise: float = 0.0
    surface_noise: float = 0.0
    resolution: int = 25
    pose: bool = True


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def write_study(root, n_subjects: int = 10, methods: dict | None = None, noise_sd: float = 1.0,
                effects: Sequence[EffectSpec] = (), seed: int = 0, gt_resolution: int = 31,
                extent: float = 160.0, config_overrides: dict | None = None):
    """Write a synthetic ground truth plus simulated methods and a JSON config.

    Subjects ``s000``... are split into groups ``A`` (first half) and ``B``
    with ``effects`` applied as in :func:`generate_population`.  Each
    subject's surface is a paraboloid dome whose apex sits on its nose tip.
    Returns the config path.
    """
    root = Path(root)
    methods = {"COPY": MethodSim(copy=True)} if methods is None else methods
    na = n_subjects // 2
    spec = PopulationSpec(face_template(), (na, n_subjects - na), noise_sd, tuple(effects), seed)
    group_a, group_b = generate_population(spec)
    subjects = [f"s{i:03d}" for i in range(n_subjects)]
    grouping = {s: ("A" if i < na else "B") for i, s in enumerate(subjects)}
    rng = make_rng([seed, 1])

    def surface(ls: LandmarkSet, res: int) -> TriangleMesh:
        return generate_test_mesh("dome", res, extent, center=ls.point("prn"))

    cfg = {"ground_truth": {"tag": "SPG", "subjects": {}}, "methods": {m: {} for m in methods},
           "grouping": grouping, "output_dir": "out", "seed": seed}
    for sid, ls in zip(subjects, group_a + group_b):
        ls = ls.replace(subject_id=sid, method_tag="SPG")
        d = root / "SPG" / sid
        d.mkdir(parents=True, exist_ok=True)
        gt_mesh = surface(ls, gt_resolution)
        write_ply(gt_mesh, d / "mesh.ply")
        write_landmarks(ls, d / "landmarks.json")
        cfg["ground_truth"]["subjects"][sid] = {"mesh": f"SPG/{sid}/mesh.ply",
                                                "landmarks": f"SPG/{sid}/landmarks.json"}
        for m, sim in methods.items():
            md = root / m / sid
            md.mkdir(parents=True, exist_ok=True)
            if sim.copy:
                mls, mesh = ls.replace(method_tag=m), gt_mesh
            else:
                pts = ls.points + rng.standard_normal(ls.points.shape) * sim.landmark_noise
                mls = ls.replace(points=pts, method_tag=m)
                base = surface(ls, sim.resolution)
                v = base.vertices.copy()
                v[:, 2] += rng.standard_normal(len(v)) * sim.surface_noise
                mesh = base.replace(vertices=v)
                if sim.pose:
                    rot = random_rotation(rng)
                    scale = float(np.exp(rng.uniform(-0.2, 0.2)))
                    shift = rng.uniform(-50, 50, 3)
                    mls = mls.replace(points=scale * mls.points @ rot.T + shift)
                    mesh = mesh.replace(vertices=scale * mesh.vertices @ rot.T + shift)
            write_ply(mesh, md / "mesh.ply")
            write_landmarks(mls, md / "landmarks.json")
            cfg["methods"][m][sid] = {"mesh": f"{m}/{sid}/mesh.ply", "landmarks": f"{m}/{sid}/landmarks.json"}
    cfg.update(config_overrides or {})
    path = root / "config.json"
    path.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    return path
