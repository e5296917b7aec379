"""
End-to-end tests of the command-line front end.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from gvf import FlowField, write_flow
from imagecore import write_field_png
from main import ablation_cells, main
from models import PipelineConfig
from synthetic import checker, rectangle, step

GOLDEN_REPORT = Path(__file__).parent / "fixtures" / "eval_report_golden.json"


def read_png(path):
    with Image.open(path) as img:
        return np.asarray(img)


@pytest.fixture
def image_dir(tmp_path):
    directory = tmp_path / "images"
    directory.mkdir()
    write_field_png(directory / "checker.png", checker(64, 48, 8))
    write_field_png(directory / "rect.png", rectangle(40, 40, 10, 10, 30, 30))
    write_field_png(directory / "step.png", step(56, 56, 20))
    return directory


class TestConfigCommand:
    def test_defaults_are_echoed(self, capsys):
        assert main(["config"]) == 0
        echoed = json.loads(capsys.readouterr().out)
        assert (echoed["mu"], echoed["beta"], echoed["iterations"]) == (0.15, 0.1, 10)
        assert (echoed["grid"], echoed["tensor_size"]) == (56, 224)
        assert echoed["seeds"] == [42, 43, 44, 45, 46]

    def test_flags_override_the_config_file(self, tmp_path, capsys):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"mu": 0.05, "iterations": 30}))
        assert main(["config", "--config", str(path), "--mu", "0.25"]) == 0
        echoed = json.loads(capsys.readouterr().out)
        assert (echoed["mu"], echoed["iterations"]) == (0.25, 30)

    def test_unknown_key_fails(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"gain": 2}))
        assert main(["config", "--config", str(path)]) == 1


class TestSaliencyCommand:
    def test_uniform_maps(self, image_dir, tmp_path):
        out = tmp_path / "sal"
        assert main(["saliency", str(image_dir), "--generator", "uniform", "-o", str(out)]) == 0
        maps = sorted(out.glob("*.png"))
        assert [p.stem for p in maps] == ["checker", "rect", "step"]
        for path in maps:
            assert np.unique(read_png(path)).size == 1

    def test_fcf_output(self, image_dir, tmp_path):
        out = tmp_path / "sal"
        assert main(["saliency", str(image_dir), "--generator", "center", "--format", "fcf", "-o", str(out)]) == 0
        assert len(list(out.glob("*.fcf"))) == 3

    def test_empty_directory(self, tmp_path, caplog):
        (tmp_path / "empty").mkdir()
        assert main(["saliency", str(tmp_path / "empty"), "-o", str(tmp_path / "sal")]) == 1
        assert "no images found" in caplog.text

    def test_corrupt_file_is_reported(self, image_dir, tmp_path, capsys):
        (image_dir / "rect.png").write_bytes(b"\x89PNG\r\n\x1a\n" + b"garbage")
        out = tmp_path / "sal"
        assert main(["saliency", str(image_dir), "-o", str(out)]) == 1
        assert len(list(out.glob("*.png"))) == 2
        assert "rect.png" in capsys.readouterr().out


class TestGvfCommand:
    def test_uniform_saliency_streams_are_byte_identical(self, image_dir, tmp_path, capsys):
        out = tmp_path / "flows"
        assert main(["gvf", str(image_dir / "rect.png"), "--saliency", "uniform", "-o", str(out)]) == 0
        assert (out / "rect_baseline.fcf").read_bytes() == (out / "rect_enhanced.fcf").read_bytes()
        for name in ("rect_averaged.fcf", "rect_tensor.fcf", "rect_tensor.png"):
            assert (out / name).is_file()
        assert read_png(out / "rect_tensor.png").shape == (224, 224, 3)
        printed = capsys.readouterr().out
        assert "iteration 0" in printed and "iteration 10" in printed

    def test_saliency_file_and_more_iterations(self, image_dir, tmp_path, capsys):
        saliency = tmp_path / "rect_saliency.png"
        write_field_png(saliency, rectangle(20, 20, 5, 5, 15, 15))
        out = tmp_path / "flows"
        argv = ["gvf", str(image_dir / "rect.png"), "--saliency", str(saliency),
                "--iterations", "50", "--mu", "0.15", "-o", str(out)]
        assert main(argv) == 0
        assert (out / "rect_baseline.fcf").read_bytes() != (out / "rect_enhanced.fcf").read_bytes()
        assert "iteration 50" in capsys.readouterr().out

    def test_missing_image(self, tmp_path):
        assert main(["gvf", str(tmp_path / "absent.png"), "-o", str(tmp_path)]) == 1


class TestEmbedCommand:
    def test_identical_images_give_identical_rows(self, tmp_path):
        directory = tmp_path / "twins"
        directory.mkdir()
        for name in ("a", "b"):
            write_field_png(directory / f"{name}.png", checker(56, 56, 7))
        out = tmp_path / "d.csv"
        assert main(["embed", str(directory), "-o", str(out), "--threads", "1"]) == 0
        first, second = out.read_text().splitlines()
        assert first.split(",")[0] == "a" and second.split(",")[0] == "b"
        assert first.split(",")[1:] == second.split(",")[1:]
        assert len(first.split(",")) == 601

    def test_ablation_view_shortens_rows(self, image_dir, tmp_path):
        out = tmp_path / "d.csv"
        argv = ["embed", str(image_dir), "-o", str(out), "--drop-feature", "curl", "--streams", "saliency"]
        assert main(argv) == 0
        assert all(len(line.split(",")) == 201 for line in out.read_text().splitlines())

    def test_failures_give_nonzero_exit(self, image_dir, tmp_path):
        (image_dir / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\n")
        out = tmp_path / "d.csv"
        assert main(["embed", str(image_dir), "-o", str(out)]) == 1
        assert len(out.read_text().splitlines()) == 3

    def test_corrupt_saliency_file_is_a_per_image_failure(self, image_dir, tmp_path, capsys):
        saliency_dir = tmp_path / "saliency"
        saliency_dir.mkdir()
        for name in ("checker", "rect", "step"):
            write_field_png(saliency_dir / f"{name}.png", rectangle(20, 20, 5, 5, 15, 15))
        data = (saliency_dir / "checker.png").read_bytes()
        (saliency_dir / "checker.png").write_bytes(data[:len(data) // 2])
        out = tmp_path / "d.csv"
        argv = ["embed", str(image_dir), "--saliency-source", f"file:{saliency_dir}", "-o", str(out)]
        assert main(argv) == 1
        assert [line.split(",")[0] for line in out.read_text().splitlines()] == ["rect", "step"]
        assert "failed: checker.png" in capsys.readouterr().out

    def test_corrupt_saliency_file_fails_gvf(self, image_dir, tmp_path):
        saliency = tmp_path / "broken.png"
        write_field_png(saliency, rectangle(20, 20, 5, 5, 15, 15))
        saliency.write_bytes(saliency.read_bytes()[:20])
        argv = ["gvf", str(image_dir / "rect.png"), "--saliency", str(saliency), "-o", str(tmp_path / "flows")]
        assert main(argv) == 1


class TestEndToEnd:
    def test_line_corpus_separates_and_is_deterministic(self, line_corpus, tmp_path):
        images, labels = line_corpus / "images", line_corpus / "labels.tsv"
        reports = []
        descriptors = []
        for threads in ("1", "4"):
            csv_path = tmp_path / f"d{threads}.csv"
            report_path = tmp_path / f"r{threads}.json"
            assert main(["embed", str(images), "--labels", str(labels), "-o", str(csv_path), "--threads", threads]) == 0
            assert main(["eval", str(csv_path), str(labels), "-o", str(report_path), "--threads", threads]) == 0
            descriptors.append(csv_path.read_bytes())
            reports.append(report_path.read_bytes())

        assert descriptors[0] == descriptors[1]
        assert reports[0] == reports[1]
        report = json.loads(reports[0])
        assert report["n_images"] == 40 and report["embedding_dim"] == 600
        assert [s["seed"] for s in report["seeds"]] == [42, 43, 44, 45, 46]
        assert report["mean"] >= 0.75

    def test_cda2_on_line_corpus(self, line_corpus, tmp_path):
        csv_path = tmp_path / "d.csv"
        report_path = tmp_path / "r.json"
        assert main(["embed", str(line_corpus / "images"), "-o", str(csv_path)]) == 0
        assert main(["eval", str(csv_path), str(line_corpus / "labels.tsv"), "--mode", "cda2",
                     "-o", str(report_path)]) == 0
        assert json.loads(report_path.read_text())["mode"] == "cda2"


class TestEvalCommand:
    def write_toy_set(self, tmp_path):
        (tmp_path / "e.csv").write_text("a1,0,0\na2,0,0\nb1,10,10\nb2,10,10\n")
        (tmp_path / "l.tsv").write_text("a1\tCenter\na2\tCenter\nb1\tHorizontal\nb2\tHorizontal\n")
        return tmp_path / "e.csv", tmp_path / "l.tsv"

    def test_report_matches_golden_file(self, tmp_path):
        embeddings, labels = self.write_toy_set(tmp_path)
        out = tmp_path / "report.json"
        assert main(["eval", str(embeddings), str(labels), "-o", str(out)]) == 0
        assert json.loads(out.read_text()) == json.loads(GOLDEN_REPORT.read_text())

    def test_parse_error_is_reported_with_line(self, tmp_path, caplog):
        embeddings, labels = self.write_toy_set(tmp_path)
        embeddings.write_text("a1,0,0\na2,0\n")
        assert main(["eval", str(embeddings), str(labels), "-o", str(tmp_path / "r.json")]) == 1
        assert "line 2" in caplog.text


class TestRenderCommand:
    def test_zero_flow_magnitude_is_black(self, tmp_path):
        zeros = np.zeros((16, 16))
        write_flow(tmp_path / "zero.fcf", FlowField(zeros, zeros))
        out = tmp_path / "mag.png"
        assert main(["render", str(tmp_path / "zero.fcf"), "--kind", "mag", "-o", str(out)]) == 0
        assert not read_png(out).any()

    def test_divergence_of_position_field_is_uniform(self, tmp_path):
        rows, cols = np.mgrid[0:16, 0:16].astype(np.float64)
        write_flow(tmp_path / "pos.fcf", FlowField(cols, rows))
        out = tmp_path / "div.png"
        assert main(["render", str(tmp_path / "pos.fcf"), "--kind", "div", "-o", str(out)]) == 0
        assert np.unique(read_png(out)).size == 1

    def test_constant_flow_quiver_arrows_are_identical_and_point_right(self, tmp_path):
        write_flow(tmp_path / "right.fcf", FlowField(np.ones((16, 16)), np.zeros((16, 16))))
        out = tmp_path / "quiver.png"
        assert main(["render", str(tmp_path / "right.fcf"), "--kind", "quiver", "-o", str(out)]) == 0
        pixels = read_png(out)
        assert pixels.shape == (128, 128)

        def arrow(a, b):
            return pixels[32 * a + 12:32 * a + 28, 32 * b + 18:32 * b + 50]

        assert arrow(0, 0).any()
        for a in range(4):
            for b in range(3):
                assert np.array_equal(arrow(a, b), arrow(0, 0))
        assert pixels[20, 20] == 255 and pixels[20, 40] == 255
        assert not pixels[:, :18].any()

    def test_saliency_from_image(self, image_dir, tmp_path):
        out = tmp_path / "sal.png"
        assert main(["render", str(image_dir / "step.png"), "--kind", "saliency", "-o", str(out)]) == 0
        assert read_png(out).shape == (56, 56)

    def test_flow_file_has_no_saliency(self, tmp_path):
        zeros = np.zeros((8, 8))
        write_flow(tmp_path / "f.fcf", FlowField(zeros, zeros))
        assert main(["render", str(tmp_path / "f.fcf"), "--kind", "saliency", "-o", str(tmp_path / "s.png")]) == 1

    def test_malformed_flow_file(self, tmp_path):
        (tmp_path / "bad.fcf").write_bytes(b"FCF2\x00")
        assert main(["render", str(tmp_path / "bad.fcf"), "--kind", "mag", "-o", str(tmp_path / "m.png")]) == 1

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["render", str(tmp_path / "f.fcf"), "--kind", "laplace", "-o", str(tmp_path / "m.png")])


class TestAblateCommand:
    def test_default_sweep_has_twelve_cells(self, small_line_corpus, tmp_path):
        out = tmp_path / "ablation"
        argv = ["ablate", str(small_line_corpus / "images"), str(small_line_corpus / "labels.tsv"), "-o", str(out)]
        assert main(argv) == 0
        reports = sorted(out.glob("*.json"))
        assert len(reports) == 12
        configs = {p.stem: json.loads(p.read_text())["config"] for p in reports}
        grid = {(c["mu"], c["iterations"]) for name, c in configs.items() if name.startswith("mu")}
        assert grid == {(mu, it) for mu in (0.05, 0.15, 0.25) for it in (10, 30, 50)}
        assert {configs[f"edge_{s}"]["edge_source"] for s in ("intensity", "sobel", "canny")} == {
            "intensity", "sobel", "canny"}
        summary = pd.read_csv(out / "summary.csv")
        assert len(summary) == 12
        assert list(summary.columns[:4]) == ["name", "mu", "iterations", "edge_source"]

    def test_extended_sweep_cells(self):
        names = [name for name, _ in ablation_cells(PipelineConfig(), extended=True)]
        assert len(names) == 20
        assert {"saliency_uniform", "no_div", "stream_baseline"} <= set(names)
        file_based = PipelineConfig(saliency_source="file:maps")
        assert "saliency_file" in [name for name, _ in ablation_cells(file_based, extended=True)]
