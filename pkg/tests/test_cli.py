"""
End-to-end tests of the command-line pipeline on the small configuration.
"""

import csv
import math
import re

import numpy as np
import pytest

from dynamic_dps.cli import EVALUATION_HEADER, Pipeline, build_parser, load_config, main, make_montage, summarize
from dynamic_dps.constants import ExitCode
from dynamic_dps.exceptions import LineSearchError, MetricError
from dynamic_dps.file_handler import FileHandler

PIPELINE = (
    ("phantom-gen",),
    ("fit-conditional",),
    ("bank-build",),
    ("solve",),
    ("solve", "--mode", "vanilla"),
    ("evaluate",),
)
TIMING_COLUMNS = {"wall_time", "time", "time_mean", "time_std"}


def _read(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def _without_timing(path):
    return [{key: value for key, value in row.items() if key not in TIMING_COLUMNS} for row in _read(path)]


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory, run_config_writer):
    """Runs every command once on a shared workspace."""
    root = tmp_path_factory.mktemp("pipeline")
    config_path = run_config_writer(root)
    codes = [main([command[0], "--config", str(config_path), *command[1:]]) for command in PIPELINE]
    return root, config_path, codes


class TestPipeline:
    def test_every_command_succeeds(self, pipeline_run):
        _, _, codes = pipeline_run
        assert codes == [ExitCode.SUCCESS] * len(PIPELINE)

    def test_dataset_layout(self, pipeline_run):
        root, config_path, _ = pipeline_run
        config = load_config(config_path)
        test_rows = _read(root / "data" / "ind" / "test" / "manifest.csv")
        ref_rows = _read(root / "data" / "ind" / "ref" / "manifest.csv")
        assert [row["seed"] for row in test_rows] == ["0", "1"]
        assert [row["seed"] for row in ref_rows] == ["1000", "1001", "1002"]
        assert {row["fingerprint"] for row in test_rows + ref_rows} == {config.dataset_fingerprint("ind")}
        for k in range(3):
            assert (root / "data" / "templates" / f"template_{k:02d}.raw").exists()
            assert (root / "data" / "templates" / f"labels_{k:02d}.pgm").exists()
        y = FileHandler().read_raw(root / "data" / "ind" / "test" / "sample_0000_y.raw")
        assert y.shape == (12, 12)

    def test_artifacts(self, pipeline_run):
        root, _, _ = pipeline_run
        assert (root / "data" / "models" / "ridge.bin").exists()
        bank = FileHandler().read_bank(root / "data" / "banks" / "bank_ind.txt")
        assert bank.t_grid.tolist() == list(range(1, 40, 4))
        assert bank.meta.n_refs == 3 and bank.meta.n_evaluations == 30

    def test_dynamic_report(self, pipeline_run):
        root, config_path, _ = pipeline_run
        rows = _read(root / "outputs" / "ind" / "dynamic" / "report.csv")
        assert len(rows) == 2
        for row in rows:
            assert row["mode"] == "dynamic"
            assert row["steps"] == row["t_start"]
            assert int(row["t_start"]) in range(1, 40, 4)
            assert row["dataset"] == load_config(config_path).dataset_fingerprint("ind")
            assert 0.0 <= float(row["armijo_rate"]) <= 1.0
        assert (root / "outputs" / "ind" / "dynamic" / "sample_0001_xcond.raw").exists()

    def test_vanilla_report(self, pipeline_run):
        root, _, _ = pipeline_run
        rows = _read(root / "outputs" / "ind" / "vanilla" / "report.csv")
        assert [row["steps"] for row in rows] == ["39", "39"]
        assert {row["evals"] for row in rows} == {"0"}
        assert not (root / "outputs" / "ind" / "vanilla" / "sample_0000_xcond.raw").exists()

    def test_evaluation_tables(self, pipeline_run):
        root, _, _ = pipeline_run
        rows = _read(root / "outputs" / "ind" / "evaluation.csv")
        assert list(rows[0]) == list(EVALUATION_HEADER)
        assert sorted(row["method"] for row in rows) == ["conditional"] * 2 + ["dynamic"] * 2 + ["vanilla"] * 2
        for row in rows:
            assert float(row["psnr"]) > 0
            assert -1.0 <= float(row["ssim"]) <= 1.0
            assert float(row["intrinsic"]) >= 0 and float(row["extrinsic"]) >= 0
            assert [part.split(":")[0] for part in row["rve_per_class"].split(";")] == ["0", "1", "2", "3"]
        conditional = [row for row in rows if row["method"] == "conditional"]
        assert {row["steps"] for row in conditional} == {"0"}

        summary = _read(root / "outputs" / "ind" / "summary.csv")
        assert {row["method"] for row in summary} == {"conditional", "dynamic", "vanilla"}
        assert {row["n"] for row in summary} == {"2"}

    def test_montages(self, pipeline_run):
        root, _, _ = pipeline_run
        montage = FileHandler().read_pgm(root / "outputs" / "ind" / "montages" / "sample_0000_dynamic.pgm")
        assert montage.shape == (24, 4 * 24)

    def test_rerun_is_reproducible(self, pipeline_run):
        root, config_path, _ = pipeline_run
        run_dir = root / "outputs" / "ind" / "dynamic"
        before = (run_dir / "sample_0000_xhat.raw").read_bytes()
        report_before = _read(run_dir / "report.csv")
        assert main(["solve", "--config", str(config_path), "--force"]) == ExitCode.SUCCESS
        assert (run_dir / "sample_0000_xhat.raw").read_bytes() == before
        report_after = _read(run_dir / "report.csv")
        for a, b in zip(report_before, report_after):
            a.pop("wall_time")
            b.pop("wall_time")
            assert a == b

    def test_bank_summary_is_printed(self, pipeline_run, capsys):
        _, config_path, _ = pipeline_run
        assert main(["bank-build", "--config", str(config_path), "--force"]) == ExitCode.SUCCESS
        assert "bank ind: 10 grid times t=1..37" in capsys.readouterr().out

    def test_start_time_spread_is_printed(self, pipeline_run, capsys):
        _, config_path, _ = pipeline_run
        assert main(["solve", "--config", str(config_path), "--force"]) == ExitCode.SUCCESS
        match = re.search(r"start times: (\d+) at t=1, (\d+) inside the grid, (\d+) at t=37", capsys.readouterr().out)
        assert match is not None
        assert sum(int(count) for count in match.groups()) == 2


    def test_shifted_resolution_partition(self, pipeline_run):
        _, config_path, _ = pipeline_run
        for command in ("phantom-gen", "bank-build", "solve"):
            assert main([command, "--config", str(config_path), "--partition", "ood-res"]) == ExitCode.SUCCESS

    def test_second_run_is_identical(self, pipeline_run, tmp_path_factory, run_config_writer):
        first, _, _ = pipeline_run
        second = tmp_path_factory.mktemp("pipeline_again")
        config_path = run_config_writer(second)
        codes = [main([command[0], "--config", str(config_path), *command[1:]]) for command in PIPELINE]
        assert codes == [ExitCode.SUCCESS] * len(PIPELINE)

        produced = sorted(
            path.relative_to(second)
            for path in second.rglob("*")
            if path.is_file() and path.relative_to(second).parts[0] in ("data", "outputs")
        )
        assert any(path.suffix == ".csv" for path in produced)
        for relative in produced:
            if relative.suffix == ".csv":
                assert _without_timing(second / relative) == _without_timing(first / relative), relative
            else:
                assert (second / relative).read_bytes() == (first / relative).read_bytes(), relative


class TestFailures:
    def test_existing_artifacts_need_force(self, pipeline_run):
        _, config_path, _ = pipeline_run
        assert main(["phantom-gen", "--config", str(config_path)]) == ExitCode.CONFIG_ERROR

    def test_changed_degradation_is_detected(self, pipeline_run, run_config_writer):
        root, _, _ = pipeline_run
        changed = run_config_writer(root, name="noisier.cfg", noise_sigma=0.03)
        assert main(["solve", "--config", str(changed), "--force"]) == ExitCode.FINGERPRINT_MISMATCH

    def test_changed_ridge_settings_are_detected(self, pipeline_run, run_config_writer):
        root, _, _ = pipeline_run
        changed = run_config_writer(root, name="ridge.cfg", ridge_lambda=0.5)
        assert main(["solve", "--config", str(changed), "--force"]) == ExitCode.FINGERPRINT_MISMATCH

    def test_changed_bank_settings_are_detected(self, pipeline_run, run_config_writer):
        root, _, _ = pipeline_run
        changed = run_config_writer(root, name="draws.cfg", n_draws=2)
        assert main(["solve", "--config", str(changed), "--force"]) == ExitCode.FINGERPRINT_MISMATCH

    @pytest.mark.parametrize("command", ["solve", "bank-build", "fit-conditional", "evaluate"])
    def test_missing_inputs(self, small_config_file, command):
        assert main([command, "--config", str(small_config_file)]) == ExitCode.MISSING_ARTIFACT

    def test_invalid_configuration(self, tmp_path, run_config_writer):
        bad = run_config_writer(tmp_path, gamma=-1.0)
        assert main(["phantom-gen", "--config", str(bad)]) == ExitCode.CONFIG_ERROR

    def test_missing_configuration_file(self, tmp_path):
        assert main(["phantom-gen", "--config", str(tmp_path / "absent.cfg")]) == ExitCode.CONFIG_ERROR

    def test_unreachable_data_dir(self, tmp_path, small_config_file):
        text = small_config_file.read_text(encoding="utf-8")
        old_line = f"data_dir = {(tmp_path / 'data').as_posix()}"
        moved = text.replace(old_line, f"data_dir = {(tmp_path / 'absent' / 'data').as_posix()}")
        assert moved != text
        small_config_file.write_text(moved, encoding="utf-8")
        assert main(["phantom-gen", "--config", str(small_config_file)]) == ExitCode.CONFIG_ERROR
        assert not (tmp_path / "absent").exists()

    @pytest.mark.parametrize(
        "error",
        [
            MetricError("class region is empty", context={"metric": "rve", "class_id": 3}),
            LineSearchError("not a descent direction", context={"dphi0": 1.0}),
            OSError("disk full"),
        ],
        ids=["metric", "line-search", "io"],
    )
    def test_runtime_failures_have_an_exit_code(self, small_config_file, mocker, error):
        mocker.patch.object(Pipeline, "evaluate", side_effect=error)
        assert main(["evaluate", "--config", str(small_config_file)]) == ExitCode.RUNTIME_ERROR


    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc_info:
            build_parser().parse_args(["train", "--config", "x.cfg"])
        assert exc_info.value.code == 2


class TestHelpers:
    def test_montage_panels(self):
        y = np.full((4, 4), 0.2)
        x_hat = np.full((8, 8), 0.5)
        x_true = np.full((8, 8), 0.9)
        montage = make_montage(y, 2, None, x_hat, x_true)
        assert montage.shape == (8, 32)
        assert np.allclose(montage[:, :8], 0.2)
        assert np.array_equal(montage[:, 8:16], np.zeros((8, 8)))
        assert np.array_equal(montage[:, 24:], x_true)

    def test_montage_blanks_mismatched_measurement(self):
        montage = make_montage(np.zeros((3, 3)), 2, None, np.ones((8, 8)), np.ones((8, 8)))
        assert np.array_equal(montage[:, :8], np.zeros((8, 8)))

    def test_summary_groups_by_method_and_partition(self):
        rows = [
            (0, "dynamic", "ind", 30.0, 0.9, 1.0, 2.0, "", 10, 0.5),
            (1, "dynamic", "ind", 32.0, 0.8, 3.0, 2.0, "", 20, 1.5),
            (0, "vanilla", "ind", 25.0, 0.7, 1.0, 1.0, "", 99, 2.0),
        ]
        header, table = summarize(rows)
        assert header[:5] == ("method", "partition", "n", "psnr_mean", "psnr_std")
        dynamic = dict(zip(header, table[0]))
        assert dynamic["n"] == 2
        assert dynamic["psnr_mean"] == 31.0 and dynamic["psnr_std"] == 1.0
        assert dynamic["steps_mean"] == 15.0
        assert math.isclose(dynamic["time_mean"], 1.0)
        assert len(table) == 2
