import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from periscope import cli, metrics
from periscope.ingest import FaceAnnotation, format_face_manifest
from periscope.matcher import read_scores


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def synth(tmp_path):
    """A synthetic store plus its manifest and same-pose pair list."""
    emb, man, pairs = tmp_path / "emb.txt", tmp_path / "faces.csv", tmp_path / "pairs.txt"
    assert run("synth", "--subjects", 12, "--images", 4, "--dim", 16, "--seed", 4,
               "--manifest", man, "--out", emb) == 0
    assert run("pairs", "same-pose", "--manifest", man, "--out", pairs) == 0
    return tmp_path, emb, man, pairs


class TestCrop:
    def _write(self, tmp_path, faces):
        rng = np.random.default_rng(0)
        img_dir = tmp_path / "img"
        img_dir.mkdir()
        for f in faces:
            arr = rng.integers(0, 256, (f.image_height, f.image_width), dtype=np.uint8)
            Image.fromarray(arr).save(img_dir / f"{f.image_id}.png")
        man = tmp_path / "faces.csv"
        man.write_text(format_face_manifest(faces))
        return man, img_dir

    def test_frontal_faces(self, tmp_path):
        faces = [FaceAnnotation("s1", f"f{k}", "frontal", (100, 120), (170, 118), (136, 160), 256, 240)
                 for k in range(3)]
        faces.append(FaceAnnotation("s2", "small", "frontal", (100, 120), (130, 120), (115, 140), 256, 240))
        faces.append(FaceAnnotation("s2", "side", "profile", (100, 120), (170, 120), (136, 160), 256, 240))
        man, img_dir = self._write(tmp_path, faces)
        out = tmp_path / "out"
        assert run("crop", "--manifest", man, "--images", img_dir, "--out", out) == 0
        pngs = sorted(p.name for p in out.glob("*.png"))
        assert len(pngs) == 6 and "s1_f0_left.png" in pngs
        assert Image.open(out / pngs[0]).size == (113, 113)
        statuses = [line.rsplit(",", 1)[1] for line in (out / "crops.csv").read_text().splitlines()[1:]]
        assert statuses == ["ok", "ok", "ok", "reject_resolution", "excluded_pose"]
        report = json.loads((out / "run_report.json").read_text())
        assert report["counts"]["accepted"] == 3 and report["counts"]["identity_holds"]

    def test_empty_manifest(self, tmp_path):
        man, img_dir = self._write(tmp_path, [])
        assert run("crop", "--manifest", man, "--images", img_dir, "--out", tmp_path / "o") == 0
        assert json.loads((tmp_path / "o" / "run_report.json").read_text())["counts"]["total"] == 0

    def test_missing_image_is_data_error(self, tmp_path):
        faces = [FaceAnnotation("s1", "f0", "frontal", (100, 120), (170, 118), (136, 160), 256, 240)]
        man, img_dir = self._write(tmp_path, faces)
        (img_dir / "f0.png").unlink()
        assert run("crop", "--manifest", man, "--images", img_dir, "--out", tmp_path / "o") == 1
        assert "error" in (tmp_path / "o" / "crops.csv").read_text()

    def test_bad_ratio_is_usage_error(self, tmp_path):
        man, img_dir = self._write(tmp_path, [])
        assert run("crop", "--manifest", man, "--images", img_dir, "--out", tmp_path / "o",
                   "--frontality-ratio", 0) == 2


class TestPairsAndScore:
    def test_counts_only(self, synth, capsys):
        _, _, man, _ = synth
        capsys.readouterr()
        assert run("pairs", "same-pose", "--manifest", man, "--counts-only") == 0
        assert capsys.readouterr().out == '{"genuine":72,"impostor":132}\n'

    def test_pair_file(self, synth):
        lines = synth[3].read_text().splitlines()
        assert len(lines) == 72 + 132
        assert lines[0] == "G s001 frontal_01 s001 frontal_02"

    def test_ufpr_external(self, tmp_path, capsys):
        (tmp_path / "folds.txt").write_text("fold 1\na\nb\n")
        (tmp_path / "ext.txt").write_text("G a 1 a 2\nI a 1 b 2\n")
        assert run("pairs", "ufpr", "--folds", tmp_path / "folds.txt", "--fold", 1,
                   "--external", tmp_path / "ext.txt", "--counts-only") == 0
        assert json.loads(capsys.readouterr().out) == {"genuine": 1, "impostor": 1}
        assert run("pairs", "ufpr", "--folds", tmp_path / "folds.txt", "--fold", 1) == 2
        assert run("pairs", "ufpr", "--folds", tmp_path / "folds.txt", "--fold", 3,
                   "--external", tmp_path / "ext.txt") == 1

    def test_ufpr_per_eye(self, tmp_path, capsys):
        emb = tmp_path / "eyes.txt"
        assert run("synth", "--subjects", 5, "--images", 3, "--dim", 4, "--per-eye", "--out", emb) == 0
        (tmp_path / "folds.txt").write_text("fold 1\ns001\ns002\ns003\n")
        assert run("pairs", "ufpr", "--folds", tmp_path / "folds.txt", "--fold", 1, "--mode",
                   "per_eye_exhaustive", "--embeddings", emb, "--counts-only") == 0
        assert json.loads(capsys.readouterr().out) == {"genuine": 18, "impostor": 12}

    def test_thread_count_does_not_change_output(self, synth):
        tmp, emb, _, pairs = synth
        outputs = []
        for t in (1, 4, 8):
            out = tmp / f"s{t}.csv"
            assert run("score", "--embeddings", emb, "--pairs", pairs, "--threads", t, "--out", out) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]

    def test_negative_values(self, tmp_path):
        emb = tmp_path / "e.txt"
        emb.write_text("OCEMB v1 dim=2\ns1\ti1\tfrontal\tleft\t-0.5 1\ns1\ti2\tfrontal\tleft\t1 1\n")
        (tmp_path / "p.txt").write_text("G s1 i1 s1 i2\n")
        assert run("score", "--embeddings", emb, "--pairs", tmp_path / "p.txt") == 1
        assert run("score", "--embeddings", emb, "--pairs", tmp_path / "p.txt", "--lenient",
                   "--out", tmp_path / "s.csv") == 0
        _, scores = read_scores((tmp_path / "s.csv").read_text())
        assert scores[0] == pytest.approx(1.0)

    def test_malformed_pairs(self, synth):
        tmp, emb, _, _ = synth
        (tmp / "bad.txt").write_text("G s001 a s002 b\n")
        assert run("score", "--embeddings", emb, "--pairs", tmp / "bad.txt") == 1


class TestMetricsAndFuse:
    @pytest.fixture
    def scored(self, synth):
        tmp, emb, _, pairs = synth
        run("score", "--embeddings", emb, "--pairs", pairs, "--out", tmp / "chi2.csv")
        run("score", "--embeddings", emb, "--pairs", pairs, "--metric", "cosine",
            "--out", tmp / "cos.csv")
        return tmp

    def test_metrics_report(self, scored, capsys):
        capsys.readouterr()
        assert run("metrics", "--scores", scored / "chi2.csv", "--det", scored / "det.csv") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["polarity"] == "distance" and report["n_genuine"] == 72
        assert 0 <= report["eer_pct"] <= 100
        assert (scored / "det.csv").read_text().startswith("threshold,far,frr\n")

    def test_fold_report(self, scored, capsys):
        capsys.readouterr()
        assert run("metrics", "--scores", scored / "chi2.csv", scored / "chi2.csv",
                   "--det", scored / "det.csv") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["std"]["eer_pct"] == 0.0
        assert report["pooled"]["eer_pct"] == pytest.approx(report["mean_of_eers_pct"])
        assert (scored / "det_fold2.csv").is_file()

    def test_weight_one_reproduces_input(self, scored, capsys):
        capsys.readouterr()
        run("metrics", "--scores", scored / "chi2.csv")
        single = json.loads(capsys.readouterr().out)
        assert run("fuse", "--scores-a", scored / "chi2.csv", "--scores-b", scored / "chi2.csv",
                   "--weight", 1.0) == 0
        fused = json.loads(capsys.readouterr().out)
        assert fused["eer_pct"] == pytest.approx(single["eer_pct"], abs=1e-9)
        assert fused["auc_pct"] == pytest.approx(single["auc_pct"], abs=1e-9)

    def test_sweep_identical_inputs(self, scored, capsys):
        capsys.readouterr()
        assert run("fuse", "--scores-a", scored / "chi2.csv", "--scores-b", scored / "chi2.csv",
                   "--sweep", "--out", scored / "sweep.csv") == 0
        assert json.loads(capsys.readouterr().out)["best_a"] == 0.5
        assert len((scored / "sweep.csv").read_text().splitlines()) == 12

    def test_misaligned(self, scored):
        text = (scored / "chi2.csv").read_text().splitlines()
        (scored / "short.csv").write_text("\n".join(text[:-1]) + "\n")
        assert run("fuse", "--scores-a", scored / "chi2.csv", "--scores-b", scored / "short.csv",
                   "--weight", 0.5) == 1

    def test_weight_and_sweep_exclusive(self, scored):
        assert run("fuse", "--scores-a", scored / "chi2.csv", "--scores-b", scored / "chi2.csv") == 2

    def test_mixed_polarity_via_flag(self, scored, capsys):
        # cosine scores read as distances rank pairs backwards
        capsys.readouterr()
        run("metrics", "--scores", scored / "cos.csv", "--polarity", "distance")
        wrong = json.loads(capsys.readouterr().out)
        run("metrics", "--scores", scored / "cos.csv", "--metric", "cosine")
        right = json.loads(capsys.readouterr().out)
        assert wrong["auc_pct"] == pytest.approx(100 - right["auc_pct"], abs=1e-9)


class TestConfigAndExitCodes:
    def test_synth_is_deterministic(self, tmp_path):
        for name in ("a", "b"):
            run("synth", "--subjects", 3, "--images", 2, "--dim", 4, "--seed", 7, "--out", tmp_path / name)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# defaults for this run\nmetric = cosine\nseed = 3\nthreads = 2\n")
        args = cli.build_parser().parse_args(["score", "--embeddings", "e", "--pairs", "p",
                                              "--config", str(cfg), "--seed", "9"])
        c = cli.resolve_config(args)
        assert (c.metric, c.seed, c.threads, c.target_ied) == ("cosine", 9, 2, 113.0)

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("speed = 3\n")
        assert run("synth", "--subjects", 1, "--images", 1, "--dim", 1, "--config", cfg) == 2

    def test_run_report(self, synth):
        tmp, emb, _, pairs = synth
        assert run("score", "--embeddings", emb, "--pairs", pairs, "--out", tmp / "s.csv",
                   "--run-report", tmp / "r.json") == 0
        report = json.loads((tmp / "r.json").read_text())
        assert report["counts"]["pairs"] == 204 and str(emb) in report["inputs"]

    def test_argparse_error_exits_2(self):
        with pytest.raises(SystemExit) as info:
            run("score")
        assert info.value.code == 2

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "periscope.cli", "synth", "--subjects", "2",
                               "--images", "2", "--dim", "3"], capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.startswith("OCEMB v1 dim=3")
        proc = subprocess.run([sys.executable, "-m", "periscope.cli", "metrics", "--scores",
                               str(tmp_path / "nope.csv")], capture_output=True, text=True)
        assert proc.returncode == 1 and "error" in proc.stderr


def test_dumps_is_stable():
    assert metrics.dumps({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
