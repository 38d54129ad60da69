import json

import pytest
import yaml

from main import main
from services.score_file import read_scores


@pytest.mark.slow
class TestEndToEnd:
    @pytest.fixture
    def config_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            yaml.safe_dump(
                {
                    "model": {"face_size": 32, "body_variant": "upper", "precision": "float64"},
                    "training": {"max_epochs": 3, "frame_cap": 60, "show_progress": False},
                    "logging": {"level": "WARNING", "file": None},
                }
            )
        )
        return str(path)

    def test_synth_train_infer_eval(self, config_file, tmp_path, capsys):
        data, out, scores = tmp_path / "data", tmp_path / "run", tmp_path / "scores.csv"
        cli = ["--config", config_file]

        synth = ["synth", "--out-dir", str(data), "--entities", "6", "--seed", "2"]
        assert main(cli + synth + ["--min-frames", "10", "--max-frames", "14"]) == 0
        assert json.loads(capsys.readouterr().out)["test_entities"] == 1

        media = ["--media-root", str(data)]
        train = ["train", "--manifest", str(data / "train.csv"), "--out-dir", str(out)]
        assert main(cli + train + media + ["--val-manifest", str(data / "test.csv")]) == 0
        assert "for 3 epochs" in capsys.readouterr().out
        assert (out / "final.fblw").exists()

        infer = ["infer", "--weights", str(out / "final.fblw"), "--out", str(scores)]
        assert main(cli + infer + media + ["--manifest", str(data / "test.csv")]) == 0
        capsys.readouterr()
        assert {row.category for row in read_scores(scores)} == {"synthetic"}

        assert main(cli + ["eval", "--scores", str(scores)]) == 0
        value = float(capsys.readouterr().out.split()[1])
        assert 0.0 <= value <= 1.0

    def test_modes_compared_on_corrupted_faces(self, config_file, tmp_path, capsys):
        data = tmp_path / "noisy"
        cli = ["--config", config_file]
        media = ["--media-root", str(data)]
        synth = ["synth", "--out-dir", str(data), "--entities", "6", "--seed", "4"]
        synth += ["--min-frames", "10", "--max-frames", "12", "--corrupt-faces"]
        assert main(cli + synth) == 0
        capsys.readouterr()

        results = {}
        for mode in ("fabulight", "lightasd"):
            out, scores = tmp_path / mode, tmp_path / f"{mode}.csv"
            train = ["train", "--manifest", str(data / "train.csv"), "--out-dir", str(out)]
            assert main(cli + train + media + ["--mode", mode, "--epochs", "2"]) == 0
            infer = ["infer", "--weights", str(out / "final.fblw"), "--out", str(scores)]
            assert main(cli + infer + media + ["--manifest", str(data / "test.csv")]) == 0
            capsys.readouterr()
            assert main(cli + ["eval", "--scores", str(scores), "--by-category"]) == 0
            report = capsys.readouterr().out
            assert "synthetic" in report
            results[mode] = float(report.split()[1])

        assert set(results) == {"fabulight", "lightasd"}
        assert all(0.0 <= value <= 1.0 for value in results.values())
