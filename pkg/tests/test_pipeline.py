import csv
import json
import shutil
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from facemorph import cli, edma, geomeval, morpho, pipeline
from facemorph.errors import ConfigError, SubjectMismatch
from facemorph.meshio import read_landmarks, read_ply, write_landmarks, write_ply
from facemorph.synthkit import EffectSpec, MethodSim, write_study

SCHEMA = json.loads(resources.files("facemorph").joinpath("report_schema.json").read_text())
METHODS = {"COPY": MethodSim(copy=True),
           "NOISY": MethodSim(landmark_noise=1.0, surface_noise=0.5, resolution=25)}
FAST = ["--n-perm", "199", "--n-boot", "200"]


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    root = tmp_path_factory.mktemp("study")
    cfg = write_study(root, n_subjects=8, methods=METHODS, seed=3)
    assert cli.main(["pipeline", str(cfg)] + FAST) == 0
    report = json.loads((root / "out" / "report.json").read_text())
    return root, cfg, report


def test_report_schema_and_round_trip(study):
    _, _, report = study
    jsonschema.validate(report, SCHEMA)
    text = pipeline.dump_report(report)
    assert json.loads(text) == report


def test_self_comparison_identities(study):
    _, _, report = study
    g = report["geometric"]["methods"]["COPY"]
    assert g["pooled"]["max"] < 1e-9 and g["pooled"]["mean"] < 1e-9
    m = report["morphometric"]["methods"]["COPY"]
    assert m["procrustes_distance"] < 1e-9
    assert m["permutation"]["p_value"] == 1.0
    assert m["centroid_size"]["correlation"]["r"] == pytest.approx(1.0, abs=1e-9)
    assert m["ppd"]["r"] == pytest.approx(1.0, abs=1e-9)
    assert m["hull_iou"] == pytest.approx(1.0, abs=1e-9)
    for n in ("top5", "top10"):
        assert report["edma"]["matching"][n]["COPY"] == {"longer": 100.0, "shorter": 100.0, "avg": 100.0}
    for row in report["alignment"]["methods"]["COPY"]["subjects"].values():
        assert row["rotation_angle"] < 1e-9


def test_summary_rows_layout(study):
    _, _, report = study
    rows = report["geometric"]["summary"]
    assert [r["method"] for r in rows] == ["COPY", "NOISY"]
    assert all(set(r) == {"method", "avg", "sd", "max"} for r in rows)
    assert rows[1]["avg"] > 0


def test_pooled_stats_from_point_csv(study):
    root, _, report = study
    d = []
    for sid in report["subjects"]:
        with open(root / "out" / "NOISY" / sid / "point_distances.csv") as fh:
            d += [float(r["point_to_point"]) for r in csv.DictReader(fh)]
    d = np.array(d)
    pooled = report["geometric"]["methods"]["NOISY"]["pooled"]
    assert pooled["n"] == len(d)
    assert pooled["mean"] == pytest.approx(d.mean(), rel=1e-12)
    assert pooled["sd"] == pytest.approx(d.std(), rel=1e-12)
    assert pooled["max"] == d.max()


def test_metrics_match_direct_calls(study):
    root, _, report = study
    out = root / "out"
    subjects = report["subjects"]
    gt_lms = [read_landmarks(out / "SPG" / s / "landmarks.json") for s in subjects]
    m_lms = [read_landmarks(out / "NOISY" / s / "landmarks.json") for s in subjects]
    for s in subjects[:3]:
        st = geomeval.point_to_point_stats(read_ply(out / "NOISY" / s / "mesh.ply"),
                                           read_ply(out / "SPG" / s / "mesh.ply"))
        assert report["geometric"]["methods"]["NOISY"]["subjects"][s]["point_to_point"] == st.summary()
    m = report["morphometric"]["methods"]["NOISY"]
    cs = morpho.pearson_correlation([morpho.centroid_size(c) for c in gt_lms],
                                    [morpho.centroid_size(c) for c in m_lms])
    assert m["centroid_size"]["correlation"] == cs.to_dict()
    perm = morpho.permutation_test_pd(gt_lms, m_lms, n_perm=199, seed=3)
    assert m["permutation"] == perm.to_dict()
    grouping = json.loads((root / "config.json").read_text())["grouping"]
    fa = [edma.form_matrix(l) for l, s in zip(m_lms, subjects) if grouping[s] == "A"]
    fb = [edma.form_matrix(l) for l, s in zip(m_lms, subjects) if grouping[s] == "B"]
    sig = edma.significant_distances(edma.bootstrap_fdm(fa, fb, 200, 0.10, 3))
    assert report["edma"]["methods"]["NOISY"]["top_n"]["5"] == edma.top_n(sig, 5).to_dict()


def test_crop_radius_respected(study):
    root, _, report = study
    for s in report["subjects"]:
        nose = read_landmarks(root / "out" / "SPG" / s / "landmarks.json").point("prn")
        for tag in ("SPG", "NOISY"):
            v = read_ply(root / "out" / tag / s / "mesh.ply").vertices
            assert np.max(np.linalg.norm(v - nose, axis=1)) <= 100.0


def test_determinism(tmp_path):
    cfg = write_study(tmp_path, n_subjects=6, methods=METHODS, seed=1)
    texts = []
    for _ in range(2):
        report = pipeline.cmd_pipeline(pipeline.load_config(cfg, {"n_perm": 99, "n_boot": 100}))
        del report["provenance"]["timestamp"]
        texts.append(pipeline.dump_report(report))
    assert texts[0] == texts[1]


def test_known_transform_recovered(tmp_path):
    cfg_path = write_study(tmp_path, n_subjects=4, methods={"COPY": MethodSim(copy=True)}, seed=2)
    doc = json.loads(cfg_path.read_text())
    rng = np.random.default_rng(0)
    truth = {}
    doc["methods"]["POSED"] = {}
    for sid, entry in doc["ground_truth"]["subjects"].items():
        t = geomeval.SimilarityTransform(Rotation.random(random_state=rng).as_matrix(),
                                         float(rng.uniform(0.8, 1.2)), rng.uniform(-50, 50, 3))
        truth[sid] = t
        d = tmp_path / "POSED" / sid
        d.mkdir(parents=True)
        write_landmarks(geomeval.apply_transform(read_landmarks(tmp_path / entry["landmarks"]), t),
                        d / "landmarks.json")
        write_ply(geomeval.apply_transform(read_ply(tmp_path / entry["mesh"]), t), d / "mesh.ply")
        doc["methods"]["POSED"][sid] = {"landmarks": f"POSED/{sid}/landmarks.json",
                                        "mesh": f"POSED/{sid}/mesh.ply"}
    cfg = pipeline.config_from_dict(doc, tmp_path)
    data, frag = pipeline.cmd_align_crop(cfg)
    for sid, t in truth.items():
        inv = t.inverse()
        got = data.transforms["POSED"][sid]
        assert np.linalg.norm(got.rotation - inv.rotation) < 1e-9
        assert abs(got.scale - inv.scale) / inv.scale < 1e-12
        gt = data.landmarks["SPG"][sid].points
        assert np.max(np.abs(data.landmarks["POSED"][sid].points - gt)) < 1e-9
        assert frag["methods"]["POSED"]["subjects"][sid]["rms_residual"] < 1e-9
        saved = json.loads((tmp_path / "out" / "POSED" / sid / "transform.json").read_text())
        assert np.allclose(saved["rotation"], got.rotation, atol=0)


def test_edma_effect_on_nose_pairs(tmp_path):
    cfg = write_study(tmp_path, n_subjects=30, methods={"COPY": MethodSim(copy=True)}, seed=0,
                      effects=(EffectSpec({"prn"}, (0, 0, 4.0), "A"),))
    c = pipeline.load_config(cfg, {"n_boot": 500})
    frag = pipeline.cmd_edma_compare(c)
    top = frag["methods"]["SPG"]["top_n"]["10"]["longer"]
    assert len(top) >= 5
    assert all("prn" in row["pair"] for row in top[:5])
    assert (tmp_path / "out" / "SPG" / "fdm.csv").exists()


def test_subcommands_write_reports(study, tmp_path):
    _, cfg, _ = study
    for cmd in ("align-crop", "geom-compare", "gpa-analyze", "edma-compare"):
        out = tmp_path / cmd
        assert cli.main([cmd, str(cfg), "--output-dir", str(out)] + FAST) == 0
        rep = json.loads((out / f"report_{cmd.replace('-', '_')}.json").read_text())
        assert rep["command"] == cmd and rep["schema_version"] == 1


def test_toml_config_and_grouping_csv(study, tmp_path):
    root, _, _ = study
    doc = json.loads((root / "config.json").read_text())
    lines = ["seed = 5", "n_perm = 49", "n_boot = 50", 'grouping = "groups.csv"',
             f'output_dir = "{tmp_path / "tout"}"', "", "[ground_truth]", 'tag = "SPG"', ""]
    for sid, e in doc["ground_truth"]["subjects"].items():
        lines += [f"[ground_truth.subjects.{sid}]", f'mesh = "{root / e["mesh"]}"',
                  f'landmarks = "{root / e["landmarks"]}"', ""]
    for sid, e in doc["methods"]["NOISY"].items():
        lines += [f"[methods.NOISY.{sid}]", f'mesh = "{root / e["mesh"]}"',
                  f'landmarks = "{root / e["landmarks"]}"', ""]
    (tmp_path / "run.toml").write_text("\n".join(lines))
    (tmp_path / "groups.csv").write_text(
        "subject_id,group\n" + "".join(f"{s},{g}\n" for s, g in doc["grouping"].items()))
    cfg = pipeline.load_config(tmp_path / "run.toml", {"seed": 6})
    assert cfg.seed == 6 and cfg.n_perm == 49 and cfg.grouping == doc["grouping"]
    assert cli.main(["pipeline", str(tmp_path / "run.toml")]) == 0
    rep = json.loads((tmp_path / "tout" / "report.json").read_text())
    jsonschema.validate(rep, SCHEMA)
    assert rep["provenance"]["seed"] == 5


def _copy_study(study, tmp_path):
    root, _, _ = study
    dst = tmp_path / "s"
    shutil.copytree(root, dst, ignore=shutil.ignore_patterns("out"))
    return dst


def test_missing_landmark_file_exit_code(study, tmp_path, capsys):
    dst = _copy_study(study, tmp_path)
    (dst / "NOISY" / "s002" / "landmarks.json").unlink()
    code = cli.main(["pipeline", str(dst / "config.json")] + FAST)
    err = capsys.readouterr().err
    assert code == 3
    assert "stage=load" in err and "subject=s002" in err and "method=NOISY" in err


def test_config_errors_exit_2(tmp_path, capsys):
    assert cli.main(["pipeline", str(tmp_path / "nope.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["pipeline", str(tmp_path / "bad.json")]) == 2
    (tmp_path / "empty.json").write_text('{"methods": {}}')
    assert cli.main(["pipeline", str(tmp_path / "empty.json")]) == 2
    assert "ground_truth" in capsys.readouterr().err


def test_bad_override_exit_2(study, tmp_path):
    _, cfg, _ = study
    assert cli.main(["pipeline", str(cfg), "--crop-radius", "-1", "--output-dir", str(tmp_path)]) == 2
    assert cli.main(["pipeline", str(cfg), "--alpha", "1.5", "--output-dir", str(tmp_path)]) == 2


def test_subject_mismatch(study):
    root, _, _ = study
    doc = json.loads((root / "config.json").read_text())
    del doc["methods"]["NOISY"]["s001"]
    with pytest.raises(SubjectMismatch):
        pipeline.config_from_dict(doc, root)


def test_numeric_failure_exit_4(study, tmp_path, capsys):
    dst = _copy_study(study, tmp_path)
    p = dst / "NOISY" / "s000" / "landmarks.json"
    ls = read_landmarks(p)
    line = np.outer(np.arange(len(ls), dtype=float), [1.0, 2.0, 3.0])
    write_landmarks(ls.replace(points=line), p)
    assert cli.main(["pipeline", str(dst / "config.json")] + FAST) == 4
    err = capsys.readouterr().err
    assert "stage=align_crop" in err and "subject=s000" in err


def test_missing_alignment_landmark(study):
    root, _, _ = study
    doc = json.loads((root / "config.json").read_text())
    doc["align_landmark_names"] = ["en_r", "en_l", "sn", "ch_r", "zz"]
    doc["output_dir"] = str(root / "out_missing")
    with pytest.raises(pipeline.StageError) as info:
        pipeline.cmd_align_crop(pipeline.config_from_dict(doc, root))
    assert info.value.stage == "align_crop" and info.value.exit_code == 3


def test_edma_needs_grouping(study):
    root, _, _ = study
    doc = json.loads((root / "config.json").read_text())
    doc.pop("grouping")
    doc["output_dir"] = str(root / "out_nogroup")
    cfg = pipeline.config_from_dict(doc, root)
    with pytest.raises(pipeline.StageError) as info:
        pipeline.cmd_edma_compare(cfg)
    assert isinstance(info.value.cause, ConfigError)
