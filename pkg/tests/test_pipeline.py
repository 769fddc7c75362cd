import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from masklift import cli, pipeline
from masklift.io import load_labels, load_scene
from masklift.labels import propagate
from masklift.lift import load_mask3d
from masklift.pipeline import RunConfig, resolve_config, run_pipeline

ARTIFACTS = ("mask3d.bin", "mask3d.prov.json", "init.labels", "stack.bin", "reliable.labels",
             "expanded.labels", "losses.json", "eval.json")


def test_config_defaults_and_validation():
    cfg = RunConfig()
    assert (cfg.n_view, cfg.theta, cfg.tau, cfg.kappa, cfg.K, cfg.eta) == (5, 0.3, 0.9, 0.01, 2, 0.7)
    with pytest.raises(ValueError):
        RunConfig(eta=1.5)
    with pytest.raises(ValueError):
        RunConfig(kappa=-0.1)
    with pytest.raises(ValueError):
        RunConfig().updated(bogus=1)


def test_config_precedence(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"eta": 0.5, "tau": 0.8, "K": 3}))
    env = {"MASKLIFT_TAU": "0.7", "MASKLIFT_K": "4", "MASKLIFT_DELTA": "0.02"}
    cfg = resolve_config(tmp_path / "c.json", env=env, K=5)
    assert (cfg.eta, cfg.tau, cfg.K, cfg.delta) == (0.5, 0.7, 5, 0.02)


def test_empty_scene_list():
    report = run_pipeline(RunConfig())
    assert report["aggregate"] == {"num_scenes": 0}
    assert report["scenes"] == [] and report["failed"] == []


def test_report_structure(scene_dirs, tmp_path):
    report = run_pipeline(RunConfig(scenes=scene_dirs[:1], out_dir=str(tmp_path)))
    assert report["config"] == RunConfig(scenes=scene_dirs[:1], out_dir=str(tmp_path)).to_dict()
    assert report["schema_version"] == pipeline.SCHEMA_VERSION
    s = report["scenes"][0]
    for key in ("num_masks", "sampled_views", "delta", "losses", "labels", "eval"):
        assert key in s
    for name in ARTIFACTS:
        assert (tmp_path / Path(scene_dirs[0]).name / name).exists()
    assert json.loads((tmp_path / "report.json").read_text()) == json.loads(pipeline.dumps(report))


def test_failing_scene_is_recorded(scene_dirs, tmp_path):
    broken = tmp_path / "broken"
    shutil.copytree(scene_dirs[0], broken)
    (broken / "views" / "view_001.mask.png").unlink()
    cfg = RunConfig(scenes=[str(broken), scene_dirs[1]])
    report = run_pipeline(cfg)
    assert len(report["scenes"]) == 1
    (f,) = report["failed"]
    assert f["scene"] == str(broken) and f["stage"] == "load" and "view_001" in f["error"]
    assert cli.main(["run", str(broken), "--out", str(tmp_path / "o")]) == 1


def test_determinism_and_jobs(scene_dirs, tmp_path):
    cfg = RunConfig(scenes=scene_dirs, out_dir=str(tmp_path / "out"))
    run_pipeline(cfg)
    first = (tmp_path / "out" / "report.json").read_bytes()
    run_pipeline(cfg, jobs=1)
    assert (tmp_path / "out" / "report.json").read_bytes() == first
    run_pipeline(cfg, jobs=4)
    assert (tmp_path / "out" / "report.json").read_bytes() == first


def test_stage_composition(scene_dirs, tmp_path, capsys):
    scene = scene_dirs[0]
    run = tmp_path / "run"
    st = tmp_path / "stages"
    assert cli.main(["run", scene, "--out", str(run), "--eta", "0.5"]) == 0
    ref = run / Path(scene).name
    assert cli.main(["lift", scene, "--out", str(st)]) == 0
    assert cli.main(["init-labels", scene, "--masks", str(st / "mask3d.bin"),
                     "--out", str(st / "init.labels")]) == 0
    assert cli.main(["select-reliable", scene, "--out", str(st)]) == 0
    assert cli.main(["propagate", "--sparse", f"{scene}/sparse.labels", "--reliable",
                     str(st / "reliable.labels"), "--masks", str(st / "mask3d.bin"),
                     "--eta", "0.5", "--out", str(st / "expanded.labels")]) == 0
    assert cli.main(["losses", "--sparse", f"{scene}/sparse.labels", "--expanded",
                     str(st / "expanded.labels"), "--reliable", str(st / "reliable.labels"),
                     "--stack", str(st / "stack.bin"), "--out", str(st / "losses.json")]) == 0
    assert cli.main(["eval", scene, "--pred", str(st / "expanded.labels"),
                     "--out", str(st / "eval.json")]) == 0
    for name in ARTIFACTS:
        assert (st / name).read_bytes() == (ref / name).read_bytes(), name

    # the propagate stage is exactly the library call
    bundle = load_scene(scene)
    lib = propagate(bundle.sparse, load_labels(st / "reliable.labels"), load_mask3d(st / "mask3d.bin"), 0.5)
    np.testing.assert_array_equal(load_labels(st / "expanded.labels"), lib)


def test_eval_identical(scene_dirs, capsys):
    gt = f"{scene_dirs[0]}/gt.labels"
    capsys.readouterr()
    assert cli.main(["eval", "--pred", gt, "--gt", gt, "--num-classes", "8"]) == 0
    assert json.loads(capsys.readouterr().out)["miou"] == 1.0


def test_external_stack_file(scene_dirs, tmp_path):
    scene = tmp_path / "s"
    shutil.copytree(scene_dirs[0], scene)
    out = tmp_path / "o"
    run_pipeline(RunConfig(scenes=[str(scene)], out_dir=str(out)))
    shutil.copy(out / "s" / "stack.bin", scene / "pred.bin")
    again = run_pipeline(RunConfig(scenes=[str(scene)], out_dir=str(tmp_path / "p"), stack_file="pred.bin",
                                   K=7))
    assert again["failed"] == []
    for name in ("stack.bin", "reliable.labels", "expanded.labels"):
        assert (tmp_path / "p" / "s" / name).read_bytes() == (out / "s" / name).read_bytes()


def test_synth_and_eta_sweep_cli(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"room": [4.0, 3.5, 2.0], "num_boxes": 2, "point_density": 100.0,
                                "num_cameras": 3, "camera_radius": 1.0, "image_size": [160, 120]}))
    assert cli.main(["synth", "--spec", str(spec), "--seed", "9", "--out", str(tmp_path / "s")]) == 0
    assert len(load_scene(tmp_path / "s").views) == 3
    capsys.readouterr()
    assert cli.main(["eta-sweep", str(tmp_path / "s"), "--out", str(tmp_path / "sweep.json")]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0].split()[0] == "eta"
    rows = json.loads((tmp_path / "sweep.json").read_text())["rows"]
    counts = [r["reliable_branch_masks"] for r in rows]
    assert counts == sorted(counts, reverse=True)


def test_module_entry_point(scene_dirs):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "masklift", "eval", scene_dirs[0], "--pred",
                          f"{scene_dirs[0]}/gt.labels"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["miou"] == 1.0
