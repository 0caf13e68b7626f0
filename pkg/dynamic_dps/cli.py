# dynamic_dps/cli.py

"""
Command-line driver of the reconstruction pipeline.

Commands:
    phantom-gen      templates plus test/reference truths, measurements and label maps
    fit-conditional  fit the ridge conditional on the in-distribution references
    bank-build       build the time-selection memory bank of a partition
    solve            reconstruct every test sample of a partition
    evaluate         metrics CSV, per-method summary and montages

Layout under data_dir:
    templates/template_KK.{raw,pgm}, templates/labels_KK.pgm
    <partition>/{test,ref}/manifest.csv and sample_IIII_{x,y}.{raw,pgm}, sample_IIII_labels.pgm
    models/ridge.bin
    banks/bank_<partition>.txt

Layout under output_dir:
    <partition>/<mode>/report.csv and sample_IIII_{xhat,xcond}.raw, sample_IIII_xhat.pgm
    <partition>/evaluation.csv, <partition>/summary.csv, <partition>/montages/
"""

import argparse
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from dynamic_dps.conditional import (
    ConditionalModel,
    GridAdaptedConditional,
    NaiveConditional,
    bilinear_upsample,
    ridge_fit,
)
from dynamic_dps.config import RunConfig, RunConfigBuilder
from dynamic_dps.constants import ConditionalKind, ExitCode, Partition, SolveMode
from dynamic_dps.dcats import MemoryBank, build_memory_bank
from dynamic_dps.diffusion import GaussianMixturePrior, schedule_from_config
from dynamic_dps.exceptions import (
    ConfigurationError,
    FingerprintMismatchError,
    LineSearchError,
    MetricError,
    MissingArtifactError,
    ValidationError,
)
from dynamic_dps.file_handler import FileHandler
from dynamic_dps.image import Image
from dynamic_dps.logging_setup import configure_logging
from dynamic_dps.metrics import hallucination_decompose, psnr, region_volume_error, ssim_aggregate
from dynamic_dps.phantom import build_prior, make_dataset
from dynamic_dps.seeding import derive_seed
from dynamic_dps.solver import solve

logger = logging.getLogger(__name__)

TEST_SPLIT = "test"
REF_SPLIT = "ref"
CONDITIONAL_METHOD = "conditional"

MANIFEST_HEADER = ("sample", "seed", "partition", "split", "component", "fingerprint")
REPORT_HEADER = (
    "sample",
    "seed",
    "mode",
    "t_start",
    "steps",
    "wall_time",
    "mean_alpha",
    "final_ldc",
    "armijo_rate",
    "evals",
    "dataset",
)
EVALUATION_HEADER = (
    "sample",
    "method",
    "partition",
    "psnr",
    "ssim",
    "intrinsic",
    "extrinsic",
    "rve_per_class",
    "steps",
    "time",
)
SUMMARY_METRICS = ("psnr", "ssim", "intrinsic", "extrinsic", "steps", "time")


@dataclass
class StoredSample:
    """A sample read back from a partition split."""

    index: int
    seed: int
    x_true: Image
    y: Image
    labels: np.ndarray


class Pipeline:
    """
    Runs the pipeline commands against the on-disk artifact layout.

    Args:
        config: Validated run configuration
        force: Allow overwriting existing artifacts
    """

    def __init__(self, config: RunConfig, force: bool = False):
        logger.info(f"Init Pipeline with data_dir='{config.paths.data_dir}', output_dir='{config.paths.output_dir}'")
        self.config = config
        self.files = FileHandler(force=force)
        self.data_dir = Path(config.paths.data_dir)
        self.output_dir = Path(config.paths.output_dir)

    # Layout
    def template_path(self, k: int, kind: str = "template", ext: str = "raw") -> Path:
        return self.data_dir / "templates" / f"{kind}_{k:02d}.{ext}"

    def split_dir(self, partition: Partition, split: str) -> Path:
        return self.data_dir / partition.value / split

    def sample_path(self, partition: Partition, split: str, index: int, kind: str, ext: str = "raw") -> Path:
        return self.split_dir(partition, split) / f"sample_{index:04d}_{kind}.{ext}"

    @property
    def ridge_path(self) -> Path:
        return self.data_dir / "models" / "ridge.bin"

    def bank_path(self, partition: Partition) -> Path:
        if self.config.paths.bank_file is not None:
            return Path(self.config.paths.bank_file)
        return self.data_dir / "banks" / f"bank_{partition.value}.txt"

    def run_dir(self, partition: Partition, mode: str) -> Path:
        return self.output_dir / partition.value / mode

    def evaluation_dir(self, partition: Partition) -> Path:
        return self.output_dir / partition.value

    # Shared loaders
    def load_prior(self) -> GaussianMixturePrior:
        spec = self.config.phantom
        templates = [self.files.read_raw(self.template_path(k)) for k in range(spec.n_templates)]
        return GaussianMixturePrior.uniform(templates, spec.sigma_p)

    def load_split(self, partition: Partition, split: str, command: str = "") -> List[StoredSample]:
        manifest = self.files.require(self.split_dir(partition, split) / "manifest.csv", command)
        rows = self.files.read_csv(manifest)
        if not rows:
            raise ValidationError(
                f"partition '{partition.value}/{split}' is empty",
                context={"parameter_name": "manifest", "parameter_value": str(manifest)},
            )
        expected = self.config.dataset_fingerprint(partition)
        samples = []
        for row in rows:
            if row["fingerprint"] != expected:
                raise FingerprintMismatchError(
                    f"dataset '{partition.value}/{split}' was generated with another configuration",
                    context={"artifact": str(manifest), "expected": expected, "found": row["fingerprint"]},
                )
            index = int(row["sample"])
            samples.append(
                StoredSample(
                    index=index,
                    seed=int(row["seed"]),
                    x_true=self.files.read_raw(self.sample_path(partition, split, index, "x")),
                    y=self.files.read_raw(self.sample_path(partition, split, index, "y")),
                    labels=self.files.read_labels(self.sample_path(partition, split, index, "labels", "pgm")),
                )
            )
        logger.debug(f"Loaded {len(samples)} samples from '{manifest.parent}'")
        return samples

    def load_conditional(self, partition: Partition) -> ConditionalModel:
        """Phase I model fitted on the in-distribution degradation, adapted to the partition grid."""
        cfg_ind = self.config.degradation_for(Partition.IND)
        if self.config.conditional.conditional_model == ConditionalKind.NAIVE:
            model: ConditionalModel = NaiveConditional(cfg_ind)
            model_k = cfg_ind.factor_k
        else:
            ridge = self.files.read_ridge(self.files.require(self.ridge_path, "solve"))
            expected = self.config.conditional_fingerprint()
            if ridge.trained_on != expected:
                raise FingerprintMismatchError(
                    "ridge model was fitted under another configuration",
                    context={"artifact": str(self.ridge_path), "expected": expected, "found": ridge.trained_on},
                )
            model, model_k = ridge, ridge.scale_k
        if self.config.degradation_for(partition).factor_k != model_k:
            size = self.config.phantom.image_size
            return GridAdaptedConditional(model, model_k, (size, size))
        return model

    # Commands
    def phantom_gen(self, partition: Partition) -> Path:
        cfg = self.config
        data = cfg.data
        splits = ((TEST_SPLIT, data.n_test, data.test_seed), (REF_SPLIT, data.n_refs, data.ref_seed))
        for split, _, _ in splits:
            self.files.check_writable(self.split_dir(partition, split) / "manifest.csv")

        prior, label_maps = build_prior(cfg.phantom)
        for k, (template, labels) in enumerate(zip(prior.templates, label_maps)):
            self.files.write_raw(self.template_path(k), template)
            self.files.write_pgm(self.template_path(k, ext="pgm"), template)
            self.files.write_labels(self.template_path(k, kind="labels", ext="pgm"), labels)

        degradation = cfg.degradation_for(partition)
        fingerprint = cfg.dataset_fingerprint(partition)
        for split, n, seed in splits:
            rows = []
            for sample in make_dataset(cfg.phantom, degradation, n, seed):
                self.files.write_raw(self.sample_path(partition, split, sample.index, "x"), sample.x_true)
                self.files.write_raw(self.sample_path(partition, split, sample.index, "y"), sample.y)
                self.files.write_pgm(self.sample_path(partition, split, sample.index, "x", "pgm"), sample.x_true)
                self.files.write_pgm(self.sample_path(partition, split, sample.index, "y", "pgm"), sample.y)
                self.files.write_labels(self.sample_path(partition, split, sample.index, "labels", "pgm"), sample.labels)
                rows.append((sample.index, sample.seed, partition.value, split, sample.component, fingerprint))
            self.files.write_csv(self.split_dir(partition, split) / "manifest.csv", MANIFEST_HEADER, rows)
            logger.info(f"Wrote {n} {split} samples for partition '{partition.value}'")
        return self.data_dir / partition.value

    def fit_conditional(self) -> Optional[Path]:
        cfg = self.config
        if cfg.conditional.conditional_model == ConditionalKind.NAIVE:
            logger.info("Naive conditional selected, nothing to fit")
            return None
        path = self.files.check_writable(self.ridge_path)
        refs = self.load_split(Partition.IND, REF_SPLIT, "fit-conditional")
        model = ridge_fit(
            [(s.x_true, s.y) for s in refs],
            patch_in=cfg.conditional.patch_in,
            k=cfg.degradation_for(Partition.IND).factor_k,
            ridge_lambda=cfg.conditional.ridge_lambda,
            seed=cfg.conditional.ridge_seed,
            trained_on=cfg.conditional_fingerprint(),
        )
        return self.files.write_ridge(path, model)

    def bank_build(self, partition: Partition) -> Path:
        path = self.files.check_writable(self.bank_path(partition))
        refs = self.load_split(partition, REF_SPLIT, "bank-build")
        bank = build_memory_bank(
            [(s.x_true, s.y) for s in refs],
            self.load_prior(),
            schedule_from_config(self.config.schedule),
            self.config.degradation_for(partition),
            self.config.dcats,
        )
        self.files.write_bank(path, bank)
        print(
            f"bank {partition.value}: {len(bank)} grid times t={bank.t_grid[0]}..{bank.t_grid[-1]}, "
            f"avg_loglik {bank.avg_loglik.min():.4g}..{bank.avg_loglik.max():.4g}"
        )
        return path

    def solve(self, partition: Partition) -> Path:
        cfg = self.config
        mode = SolveMode(cfg.solve.mode)
        run_dir = self.run_dir(partition, mode.value)
        report_path = self.files.check_writable(run_dir / "report.csv")

        samples = self.load_split(partition, TEST_SPLIT, "solve")
        prior = self.load_prior()
        sched = schedule_from_config(cfg.schedule)
        degradation = cfg.degradation_for(partition)
        conditional = self.load_conditional(partition) if mode is SolveMode.DYNAMIC else None
        bank: Optional[MemoryBank] = None
        if mode is SolveMode.DYNAMIC and cfg.solve.t_start_override is None:
            bank = self.files.read_bank(self.files.require(self.bank_path(partition), "solve"))

        dataset = cfg.dataset_fingerprint(partition)
        rows = []
        for sample in samples:
            params = replace(cfg.solve, seed=derive_seed(cfg.solve.seed, sample.seed))
            report = solve(sample.y, conditional, prior, sched, degradation, bank, params)
            self.files.write_raw(run_dir / f"sample_{sample.index:04d}_xhat.raw", report.output)
            self.files.write_pgm(run_dir / f"sample_{sample.index:04d}_xhat.pgm", report.output)
            if report.x_cond is not None:
                self.files.write_raw(run_dir / f"sample_{sample.index:04d}_xcond.raw", report.x_cond)
            rows.append(
                (
                    sample.index,
                    sample.seed,
                    mode.value,
                    report.t_start,
                    report.steps_taken,
                    report.wall_time,
                    float(np.mean(report.alpha_trace)) if report.steps_taken else 0.0,
                    float(report.ldc_trace[-1]) if report.steps_taken else float("nan"),
                    float(np.mean(report.armijo_trace)) if report.steps_taken else 0.0,
                    int(np.sum(report.evals_trace)),
                    dataset,
                )
            )
        self.files.write_csv(report_path, REPORT_HEADER, rows)

        steps = np.array([row[4] for row in rows], dtype=np.float64)
        times = np.array([row[5] for row in rows], dtype=np.float64)
        print(
            f"solve {mode.value} on {partition.value}: {len(rows)} samples, "
            f"steps_taken {steps.mean():.1f} +/- {steps.std():.1f}, wall time {times.mean():.3f}s per sample"
        )
        if bank is not None:
            starts = np.array([row[3] for row in rows])
            first, last = int(bank.t_grid[0]), int(bank.t_grid[-1])
            inside = int(np.sum((starts > first) & (starts < last)))
            print(
                f"start times: {int(np.sum(starts == first))} at t={first}, {inside} inside the grid, "
                f"{int(np.sum(starts == last))} at t={last}"
            )

        return run_dir

    def _rve_per_class(self, x_hat: Image, labels: np.ndarray) -> str:
        spec = self.config.phantom
        parts = []
        for class_id in range(spec.n_classes):
            try:
                value = region_volume_error(
                    x_hat,
                    labels,
                    class_id,
                    spec.class_bands[class_id],
                    self.config.metrics.dilation_radius,
                )
            except MetricError as e:
                logger.debug(f"RVE skipped: {e}")
                value = float("nan")
            parts.append(f"{class_id}:{value:.6g}")
        return ";".join(parts)

    def _metric_row(
        self, sample: StoredSample, method: str, partition: Partition, x_hat: Image, steps: int, time: float
    ) -> Tuple:
        cfg = self.config
        report = hallucination_decompose(
            x_hat,
            sample.x_true,
            cfg.degradation_for(partition),
            eps=cfg.metrics.pinv_eps,
            max_iter=cfg.metrics.pinv_max_iter,
            tol=cfg.metrics.pinv_tol,
        )
        return (
            sample.index,
            method,
            partition.value,
            psnr(x_hat, sample.x_true),
            ssim_aggregate(x_hat, sample.x_true, cfg.weights),
            report.intrinsic,
            report.extrinsic,
            self._rve_per_class(x_hat, sample.labels),
            steps,
            time,
        )

    def _read_report(self, partition: Partition, mode: str) -> Dict[int, Dict[str, str]]:
        path = self.run_dir(partition, mode) / "report.csv"
        expected = self.config.dataset_fingerprint(partition)
        report = {}
        for row in self.files.read_csv(path):
            if row["dataset"] != expected:
                raise FingerprintMismatchError(
                    "solve outputs belong to another dataset",
                    context={"artifact": str(path), "expected": expected, "found": row["dataset"]},
                )
            report[int(row["sample"])] = row
        return report

    def evaluate(self, partition: Partition) -> Path:
        out_dir = self.evaluation_dir(partition)
        modes = [m.value for m in SolveMode if (self.run_dir(partition, m.value) / "report.csv").exists()]
        if not modes:
            raise MissingArtifactError(
                f"no solve outputs under '{out_dir}'",
                context={"artifact": str(out_dir), "command": "evaluate"},
            )
        evaluation_path = self.files.check_writable(out_dir / "evaluation.csv")
        summary_path = self.files.check_writable(out_dir / "summary.csv")

        samples = self.load_split(partition, TEST_SPLIT, "evaluate")
        degradation = self.config.degradation_for(partition)
        rows: List[Tuple] = []
        conditional_rows: List[Tuple] = []
        for mode in modes:
            run_dir = self.run_dir(partition, mode)
            report = self._read_report(partition, mode)
            for sample in samples:
                entry = report.get(sample.index)
                if entry is None:
                    raise MissingArtifactError(
                        f"sample {sample.index} missing from the {mode} report",
                        context={"artifact": str(run_dir / "report.csv"), "command": "evaluate"},
                    )
                x_hat = self.files.read_raw(run_dir / f"sample_{sample.index:04d}_xhat.raw")
                rows.append(
                    self._metric_row(sample, mode, partition, x_hat, int(entry["steps"]), float(entry["wall_time"]))
                )
                cond_path = run_dir / f"sample_{sample.index:04d}_xcond.raw"
                x_cond = self.files.read_raw(cond_path) if cond_path.exists() else None
                if x_cond is not None and mode == SolveMode.DYNAMIC.value:
                    conditional_rows.append(
                        self._metric_row(sample, CONDITIONAL_METHOD, partition, x_cond, 0, 0.0)
                    )
                montage = make_montage(sample.y, degradation.factor_k, x_cond, x_hat, sample.x_true)
                self.files.write_pgm(out_dir / "montages" / f"sample_{sample.index:04d}_{mode}.pgm", montage)

        rows = conditional_rows + rows
        self.files.write_csv(evaluation_path, EVALUATION_HEADER, rows)
        summary = summarize(rows)
        self.files.write_csv(summary_path, summary[0], summary[1])
        for row in summary[1]:
            print(
                f"{row[0]} on {row[1]}: PSNR {row[3]:.2f} +/- {row[4]:.2f} dB, SSIM {row[5]:.4f}, "
                f"steps {row[11]:.1f}, time {row[13]:.3f}s"
            )
        return evaluation_path


def make_montage(y: Image, k: int, x_cond: Optional[Image], x_hat: Image, x_true: Image) -> Image:
    """Panels left to right: upsampled measurement, conditional, refined, truth."""
    upsampled = bilinear_upsample(y, k)
    if upsampled.shape != x_true.shape:
        upsampled = np.zeros_like(x_true)
    cond = x_cond if x_cond is not None else np.zeros_like(x_true)
    return np.hstack([upsampled, cond, x_hat, x_true])


def summarize(rows: Sequence[Tuple]) -> Tuple[Tuple[str, ...], List[Tuple]]:
    """Mean and std of each metric per (method, partition)."""
    header = ["method", "partition", "n"]
    for metric in SUMMARY_METRICS:
        header.extend([f"{metric}_mean", f"{metric}_std"])
    columns = {name: EVALUATION_HEADER.index(name) for name in SUMMARY_METRICS}

    groups: Dict[Tuple[str, str], List[Tuple]] = {}
    for row in rows:
        groups.setdefault((row[1], row[2]), []).append(row)
    table = []
    for (method, partition), group in groups.items():
        entry: List = [method, partition, len(group)]
        for metric in SUMMARY_METRICS:
            values = np.array([float(row[columns[metric]]) for row in group])
            entry.extend([float(np.mean(values)), float(np.std(values))])
        table.append(tuple(entry))
    return tuple(header), table


def _run_phantom_gen(pipeline: Pipeline, args: argparse.Namespace) -> None:
    pipeline.phantom_gen(Partition(args.partition))


def _run_fit_conditional(pipeline: Pipeline, args: argparse.Namespace) -> None:
    pipeline.fit_conditional()


def _run_bank_build(pipeline: Pipeline, args: argparse.Namespace) -> None:
    pipeline.bank_build(Partition(args.partition))


def _run_solve(pipeline: Pipeline, args: argparse.Namespace) -> None:
    pipeline.solve(Partition(args.partition))


def _run_evaluate(pipeline: Pipeline, args: argparse.Namespace) -> None:
    pipeline.evaluate(Partition(args.partition))


COMMANDS: Dict[str, Callable[[Pipeline, argparse.Namespace], None]] = {
    "phantom-gen": _run_phantom_gen,
    "fit-conditional": _run_fit_conditional,
    "bank-build": _run_bank_build,
    "solve": _run_solve,
    "evaluate": _run_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynamic-dps",
        description="Conditional warm start plus line-searched diffusion posterior sampling on synthetic phantoms.",
    )
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", required=True, help="Flat key = value configuration file")
    parser.add_argument("--mode", choices=[mode.value for mode in SolveMode], help="Override the solve mode")
    parser.add_argument(
        "--partition",
        choices=[partition.value for partition in Partition],
        default=Partition.IND.value,
        help="Test partition (default: ind)",
    )
    parser.add_argument("--force", action="store_true", help="Overwrite existing artifacts")
    return parser


def load_config(config_path: Union[str, Path], mode: Optional[str] = None) -> RunConfig:
    builder = RunConfigBuilder().from_file(config_path).from_env()
    if mode is not None:
        builder.with_mode(mode)
    return builder.build(check_paths=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.mode)
        configure_logging(config.logging)
        logger.info(f"Running '{args.command}' (config fingerprint {config.fingerprint()})")
        COMMANDS[args.command](Pipeline(config, force=args.force), args)
    except FingerprintMismatchError as e:
        logger.error(f"Fingerprint mismatch: {e}")
        return int(ExitCode.FINGERPRINT_MISMATCH)
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return int(ExitCode.CONFIG_ERROR)
    except MissingArtifactError as e:
        logger.error(f"Missing artifact: {e}")
        return int(ExitCode.MISSING_ARTIFACT)
    except (LineSearchError, MetricError) as e:
        logger.error(f"'{args.command}' failed: {e}")
        return int(ExitCode.RUNTIME_ERROR)
    except OSError as e:
        logger.error(f"I/O error during '{args.command}': {e}")
        return int(ExitCode.RUNTIME_ERROR)
    logger.info(f"Finished '{args.command}'")
    return int(ExitCode.SUCCESS)
