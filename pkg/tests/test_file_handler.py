"""
Tests for artifact I/O: raw and PGM images, bank tables, ridge models and CSV.
"""

import os

import numpy as np
import pytest

from dynamic_dps.conditional import RidgeModel
from dynamic_dps.constants import RAW_MAGIC
from dynamic_dps.dcats import BankMeta, MemoryBank
from dynamic_dps.exceptions import ConfigurationError, MissingArtifactError, ValidationError
from dynamic_dps.file_handler import FileHandler


@pytest.fixture
def handler() -> FileHandler:
    return FileHandler()


class TestGuards:
    def test_existing_artifact_needs_force(self, handler, tmp_path):
        path = tmp_path / "a.raw"
        path.write_bytes(b"old")
        with pytest.raises(ConfigurationError) as exc_info:
            handler.check_writable(path)
        assert exc_info.value.context["config_key"] == "force"
        assert FileHandler(force=True).check_writable(path) == path

    def test_new_path_is_writable(self, handler, tmp_path):
        assert handler.check_writable(tmp_path / "new.raw") == tmp_path / "new.raw"

    def test_missing_artifact(self, handler, tmp_path):
        with pytest.raises(MissingArtifactError) as exc_info:
            FileHandler.require(tmp_path / "bank.txt", command="solve")
        assert exc_info.value.context["command"] == "solve"
        assert exc_info.value.context["artifact"].endswith("bank.txt")
        with pytest.raises(MissingArtifactError):
            handler.read_raw(tmp_path / "nothing.raw")


class TestAtomicWrites:
    def test_no_temporary_files_left(self, handler, tmp_path):
        handler.write_text(tmp_path / "sub" / "notes.txt", "hello\n")
        assert os.listdir(tmp_path / "sub") == ["notes.txt"]
        assert (tmp_path / "sub" / "notes.txt").read_text() == "hello\n"

    def test_failed_replace_keeps_old_content(self, handler, tmp_path, mocker, caplog):
        path = tmp_path / "table.csv"
        path.write_text("old\n")
        mocker.patch("dynamic_dps.file_handler.os.replace", side_effect=OSError("disk full"))
        with pytest.raises(OSError):
            handler.write_text(path, "new\n")
        assert path.read_text() == "old\n"
        assert os.listdir(tmp_path) == ["table.csv"]
        assert "disk full" in caplog.text


class TestImages:
    def test_raw_round_trip_is_exact(self, handler, tmp_path, rng):
        image = rng.standard_normal((3, 5))
        path = handler.write_raw(tmp_path / "x.raw", image)
        data = path.read_bytes()
        assert data[:8] == RAW_MAGIC
        assert int.from_bytes(data[8:12], "little") == 5
        assert int.from_bytes(data[12:16], "little") == 3
        assert len(data) == 16 + 8 * 15
        assert np.array_equal(handler.read_raw(path), image)

    def test_raw_rejects_foreign_files(self, handler, tmp_path):
        (tmp_path / "bad.raw").write_bytes(b"NOTRAW00" + bytes(8))
        with pytest.raises(ValidationError):
            handler.read_raw(tmp_path / "bad.raw")
        (tmp_path / "short.raw").write_bytes(b"DDPS")
        with pytest.raises(ValidationError):
            handler.read_raw(tmp_path / "short.raw")

    def test_raw_rejects_truncated_pixels(self, handler, tmp_path):
        path = handler.write_raw(tmp_path / "x.raw", np.zeros((4, 4)))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValidationError):
            handler.read_raw(path)

    def test_pgm_quantization(self, handler, tmp_path, rng):
        image = rng.uniform(0, 1, (6, 4))
        path = handler.write_pgm(tmp_path / "x.pgm", image)
        assert path.read_bytes().startswith(b"P5\n4 6\n65535\n")
        assert np.allclose(handler.read_pgm(path), image, atol=0.5 / 65535 + 1e-12)

    def test_pgm_clips_to_display_range(self, handler, tmp_path):
        path = handler.write_pgm(tmp_path / "x.pgm", np.array([[-0.5, 0.5, 1.5]]))
        assert np.array_equal(handler.read_pgm(path), [[0.0, 32768 / 65535, 1.0]])

    def test_pgm_needs_range(self, handler, tmp_path):
        with pytest.raises(ValidationError):
            handler.write_pgm(tmp_path / "x.pgm", np.zeros((2, 2)), lo=1.0, hi=1.0)

    def test_labels_round_trip(self, handler, tmp_path):
        labels = np.array([[0, 1, 2], [3, 2, 1]])
        path = handler.write_labels(tmp_path / "labels.pgm", labels)
        assert np.array_equal(handler.read_labels(path), labels)

    def test_labels_must_be_non_negative(self, handler, tmp_path):
        with pytest.raises(ValidationError):
            handler.write_labels(tmp_path / "labels.pgm", np.array([[0, -1]]))


class TestBankTable:
    def test_round_trip(self, handler, tmp_path):
        bank = MemoryBank(
            t_grid=np.array([1, 26, 51]),
            avg_loglik=np.array([-0.5123456789012345, -3.25, -1e-17]),
            se=np.array([0.01, 0.2, 0.0]),
            meta=BankMeta(n_refs=16, n_draws=4, noise_sigma=0.02, n_evaluations=192, fingerprint="0123456789abcdef"),
        )
        path = handler.write_bank(tmp_path / "bank.txt", bank)
        text = path.read_text()
        assert "# fingerprint = 0123456789abcdef" in text
        assert "t avg_loglik se" in text
        loaded = handler.read_bank(path)
        assert np.array_equal(loaded.t_grid, bank.t_grid)
        assert np.array_equal(loaded.avg_loglik, bank.avg_loglik)
        assert np.array_equal(loaded.se, bank.se)
        assert loaded.meta == bank.meta

    def test_malformed_table(self, handler, tmp_path, caplog):
        (tmp_path / "bank.txt").write_text("# n_refs = 2\nt avg_loglik se\n1 -0.5\n")
        with pytest.raises(ValidationError):
            handler.read_bank(tmp_path / "bank.txt")
        assert "Malformed bank table" in caplog.text


class TestRidgeFile:
    def test_round_trip(self, handler, tmp_path, rng):
        model = RidgeModel(
            patch_in=3, scale_k=2, weights=rng.standard_normal((10, 4)), ridge_lambda=1e-3, trained_on="feedc0de"
        )
        path = handler.write_ridge(tmp_path / "ridge.bin", model)
        loaded = handler.read_ridge(path)
        assert loaded.patch_in == 3 and loaded.scale_k == 2
        assert loaded.ridge_lambda == 1e-3
        assert loaded.trained_on == "feedc0de"
        assert np.array_equal(loaded.weights, model.weights)

    def test_truncated_weights(self, handler, tmp_path):
        model = RidgeModel(patch_in=1, scale_k=1, weights=np.ones((2, 1)), ridge_lambda=1.0)
        path = handler.write_ridge(tmp_path / "ridge.bin", model)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValidationError) as exc_info:
            handler.read_ridge(path)
        assert exc_info.value.context["shape_b"] == (2, 1)


class TestCsv:
    def test_cells_are_canonical(self, handler, tmp_path):
        path = handler.write_csv(
            tmp_path / "report.csv",
            ["sample", "psnr", "ok", "note", "rve"],
            [[0, 31.25, True, None, float("nan")], [1, np.float64(0.1), np.bool_(False), "x", 2.0]],
        )
        lines = path.read_text().splitlines()
        assert lines == [
            "sample,psnr,ok,note,rve",
            "0,31.25,true,,nan",
            "1,0.1,false,x,2.0",
        ]

    def test_read_back_as_records(self, handler, tmp_path):
        handler.write_csv(tmp_path / "t.csv", ["a", "b"], [[1, "u"], [2, "v"]])
        assert handler.read_csv(tmp_path / "t.csv") == [{"a": "1", "b": "u"}, {"a": "2", "b": "v"}]
