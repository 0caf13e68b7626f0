# dynamic_dps/file_handler.py

"""
Reading and writing every on-disk artifact.

Formats:
    raw     16-byte header (magic, uint32 width, uint32 height, little-endian)
            followed by row-major float64 pixels
    pgm     binary 16-bit graymap (P5, maxval 65535, big-endian samples)
    bank    text table with '#' meta lines and one "t avg_loglik se" row per grid time
    ridge   flat binary (magic, patch_in, k, lambda, fingerprint, weights)
    csv     '.' decimals, header row first

Every write goes to a temporary file in the target directory and is moved
into place with os.replace.
"""

import csv
import io
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

from dynamic_dps.conditional import RidgeModel
from dynamic_dps.constants import FINGERPRINT_LENGTH, PGM_MAXVAL, RAW_MAGIC, RIDGE_MAGIC
from dynamic_dps.dcats import BankMeta, MemoryBank
from dynamic_dps.exceptions import ConfigurationError, MissingArtifactError, ValidationError
from dynamic_dps.image import Image, as_image

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_RAW_HEADER = struct.Struct("<8sII")
_RIDGE_HEADER = struct.Struct(f"<8sIId{FINGERPRINT_LENGTH}s")
_BANK_META_KEYS = ("fingerprint", "n_refs", "n_draws", "noise_sigma", "n_evaluations")


class FileHandler:
    """
    Artifact I/O with collision and presence checks.

    Args:
        force: Allow overwriting existing artifacts
    """

    def __init__(self, force: bool = False):
        logger.debug(f"Init FileHandler with force={force}")
        self.force = force

    # Guards
    def check_writable(self, path: PathLike) -> Path:
        """Raise ConfigurationError if ``path`` exists and overwriting is not forced."""
        path = Path(path)
        if path.exists() and not self.force:
            raise ConfigurationError(
                f"Refusing to overwrite existing artifact '{path}' without --force",
                context={"config_key": "force", "file_path": str(path)},
            )
        return path

    @staticmethod
    def require(path: PathLike, command: str = "") -> Path:
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(
                f"Missing artifact '{path}'",
                context={"artifact": str(path), "command": command},
            )
        return path

    def _atomic_write(self, path: PathLike, data: bytes) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp_name, path)
        except OSError as e:
            logger.error(f"Failed to write '{path}': {e}")
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        logger.debug(f"Wrote {len(data)} bytes to '{path}'")
        return path

    def write_text(self, path: PathLike, text: str) -> Path:
        return self._atomic_write(path, text.encode("utf-8"))

    def read_bytes(self, path: PathLike) -> bytes:
        return self.require(path).read_bytes()

    # Raw float64 images
    def write_raw(self, path: PathLike, image: Image) -> Path:
        image = as_image(image)
        height, width = image.shape
        header = _RAW_HEADER.pack(RAW_MAGIC, width, height)
        return self._atomic_write(path, header + image.astype("<f8").tobytes(order="C"))

    def read_raw(self, path: PathLike) -> Image:
        data = self.read_bytes(path)
        if len(data) < _RAW_HEADER.size:
            raise ValidationError(f"'{path}' is too short for a raw image", context={"parameter_name": str(path)})
        magic, width, height = _RAW_HEADER.unpack_from(data)
        if magic != RAW_MAGIC:
            raise ValidationError(
                f"'{path}' is not a raw image",
                context={"parameter_name": str(path), "parameter_value": magic},
            )
        body = data[_RAW_HEADER.size :]
        if len(body) != 8 * width * height:
            raise ValidationError(
                f"'{path}' holds {len(body)} pixel bytes, expected {8 * width * height}",
                context={"parameter_name": str(path), "shape_a": (height, width)},
            )
        return np.frombuffer(body, dtype="<f8").reshape(height, width).astype(np.float64)

    # 16-bit PGM
    def write_pgm(self, path: PathLike, image: Image, lo: float = 0.0, hi: float = 1.0) -> Path:
        """Quantize [lo, hi] to 0..65535; values outside are clipped."""
        if hi <= lo:
            raise ValidationError(f"empty display range [{lo}, {hi}]", context={"parameter_name": "hi"})
        image = as_image(image)
        scaled = np.clip((image - lo) / (hi - lo), 0.0, 1.0)
        return self._write_pgm_samples(path, np.rint(scaled * PGM_MAXVAL).astype(np.int64))

    def write_labels(self, path: PathLike, labels: np.ndarray) -> Path:
        """Label maps are stored as their integer ids."""
        labels = np.asarray(labels)
        if labels.ndim != 2 or labels.min() < 0 or labels.max() > PGM_MAXVAL:
            raise ValidationError(
                "label map must be 2D with ids in [0, 65535]",
                context={"parameter_name": "labels", "shape_a": labels.shape},
            )
        return self._write_pgm_samples(path, labels.astype(np.int64))

    def _write_pgm_samples(self, path: PathLike, samples: np.ndarray) -> Path:
        height, width = samples.shape
        header = f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii")
        return self._atomic_write(path, header + samples.astype(">u2").tobytes(order="C"))

    def _read_pgm_samples(self, path: PathLike) -> np.ndarray:
        data = self.read_bytes(path)
        tokens: List[bytes] = []
        pos = 0
        while len(tokens) < 4:
            while pos < len(data) and data[pos : pos + 1].isspace():
                pos += 1
            if data[pos : pos + 1] == b"#":
                pos = data.index(b"\n", pos) + 1
                continue
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
        pos += 1  # single whitespace before the raster
        if tokens[0] != b"P5":
            raise ValidationError(f"'{path}' is not a binary PGM", context={"parameter_name": str(path)})
        width, height, maxval = (int(token) for token in tokens[1:])
        dtype = ">u2" if maxval > 255 else "u1"
        return np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(height, width)

    def read_pgm(self, path: PathLike, lo: float = 0.0, hi: float = 1.0) -> Image:
        samples = self._read_pgm_samples(path).astype(np.float64)
        return lo + (hi - lo) * samples / PGM_MAXVAL

    def read_labels(self, path: PathLike) -> np.ndarray:
        return self._read_pgm_samples(path).astype(np.int64)

    # Memory bank
    def write_bank(self, path: PathLike, bank: MemoryBank) -> Path:
        lines = ["# dynamic_dps memory bank"]
        for key in _BANK_META_KEYS:
            value = getattr(bank.meta, key)
            lines.append(f"# {key} = {value!r}" if isinstance(value, float) else f"# {key} = {value}")
        lines.append("t avg_loglik se")
        for t, mean, se in zip(bank.t_grid, bank.avg_loglik, bank.se):
            lines.append(f"{int(t)} {float(mean)!r} {float(se)!r}")
        return self.write_text(path, "\n".join(lines) + "\n")

    def read_bank(self, path: PathLike) -> MemoryBank:
        meta: Dict[str, str] = {}
        rows: List[List[str]] = []
        for line in self.require(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            if line.startswith("t "):
                continue
            rows.append(line.split())
        try:
            t_grid = [int(row[0]) for row in rows]
            means = [float(row[1]) for row in rows]
            errors = [float(row[2]) for row in rows]
            bank_meta = BankMeta(
                n_refs=int(meta["n_refs"]),
                n_draws=int(meta["n_draws"]),
                noise_sigma=float(meta["noise_sigma"]),
                n_evaluations=int(meta.get("n_evaluations", 0)),
                fingerprint=meta.get("fingerprint", ""),
            )
        except (IndexError, KeyError, ValueError) as e:
            logger.error(f"Malformed bank table '{path}': {e}")
            raise ValidationError(f"malformed bank table '{path}'", context={"parameter_name": str(path), "error": str(e)})
        return MemoryBank(t_grid=np.asarray(t_grid), avg_loglik=np.asarray(means), se=np.asarray(errors), meta=bank_meta)

    # Ridge model
    def write_ridge(self, path: PathLike, model: RidgeModel) -> Path:
        fingerprint = model.trained_on.encode("ascii")[:FINGERPRINT_LENGTH]
        header = _RIDGE_HEADER.pack(RIDGE_MAGIC, model.patch_in, model.scale_k, model.ridge_lambda, fingerprint)
        return self._atomic_write(path, header + model.weights.astype("<f8").tobytes(order="C"))

    def read_ridge(self, path: PathLike) -> RidgeModel:
        data = self.read_bytes(path)
        if len(data) < _RIDGE_HEADER.size:
            raise ValidationError(f"'{path}' is too short for a ridge model", context={"parameter_name": str(path)})
        magic, patch_in, k, ridge_lambda, fingerprint = _RIDGE_HEADER.unpack_from(data)
        if magic != RIDGE_MAGIC:
            raise ValidationError(
                f"'{path}' is not a ridge model",
                context={"parameter_name": str(path), "parameter_value": magic},
            )
        weights = np.frombuffer(data[_RIDGE_HEADER.size :], dtype="<f8").astype(np.float64)
        shape = (patch_in * patch_in + 1, k * k)
        if weights.size != shape[0] * shape[1]:
            raise ValidationError(
                f"'{path}' holds {weights.size} weights, expected {shape[0] * shape[1]}",
                context={"parameter_name": str(path), "shape_b": shape},
            )
        return RidgeModel(
            patch_in=patch_in,
            scale_k=k,
            weights=weights.reshape(shape),
            ridge_lambda=ridge_lambda,
            trained_on=fingerprint.rstrip(b"\0").decode("ascii"),
        )

    # CSV tables
    def write_csv(self, path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(value) for value in row])
        return self.write_text(path, buffer.getvalue())

    def read_csv(self, path: PathLike) -> List[Dict[str, str]]:
        with self.require(path).open(newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))


def _csv_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)
