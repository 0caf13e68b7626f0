"""
Exception hierarchy for the DynamicDPS reconstruction system.

Every exception carries a context mapping with the quantities that caused
the failure (image shapes, diffusion times, configuration keys, artifact
fingerprints), so command-line reports and logs can show them.
"""

from typing import Any, ClassVar, Dict, List, Mapping, Optional, Tuple

import numpy as np


def _render(value: Any) -> str:
    """Arrays are shown by shape and numpy scalars as plain numbers."""
    if isinstance(value, np.ndarray):
        return f"array{value.shape}"
    if isinstance(value, np.generic):
        return str(value.item())
    return str(value)


class DynamicDPSError(Exception):
    """
    Base exception for all reconstruction operations.

    Context entries can be given as a mapping, as keyword fields, or both;
    keyword fields win on conflict. Subclasses list the fields they are
    raised with in ``fields``, and those are rendered first.

    Attributes:
        message: The error message describing what went wrong
        context: The failing quantities, keyed by name
    """

    fields: ClassVar[Tuple[str, ...]] = ()

    def __init__(self, message: str, context: Optional[Mapping[str, Any]] = None, **extra: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = {**(context or {}), **extra}

    def ordered_context(self) -> List[Tuple[str, Any]]:
        """Context items, declared fields first, then the rest in insertion order."""
        declared = [(key, self.context[key]) for key in self.fields if key in self.context]
        rest = [(key, value) for key, value in self.context.items() if key not in self.fields]
        return declared + rest

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={_render(value)}" for key, value in self.ordered_context())
        return f"{self.message} [{details}]"

    def __repr__(self) -> str:
        args = [repr(self.message)] + [f"{key}={value!r}" for key, value in self.context.items()]
        return f"{type(self).__name__}({', '.join(args)})"


class ConfigurationError(DynamicDPSError):
    """
    Raised when configuration is invalid or missing.

    Context keys:
        - config_key: The configuration key that caused the error
        - config_value: The invalid configuration value
        - allowed_values: Allowed values if applicable
        - file_path: The configuration file being read
    """

    fields = ("config_key", "config_value", "allowed_values", "file_path")


class ValidationError(DynamicDPSError):
    """
    Raised when an operation precondition fails.

    Covers dimension mismatches between images, invalid numeric
    parameters (gamma <= 0, lo >= hi, non-divisible factors) and
    out-of-range diffusion times.

    Context keys:
        - parameter_name: The parameter that failed validation
        - parameter_value: The invalid value
        - shape_a / shape_b: Image shapes involved in a mismatch
    """

    fields = ("parameter_name", "parameter_value", "shape_a", "shape_b")


class FingerprintMismatchError(ConfigurationError):
    """
    Raised when an artifact was produced under a different configuration.

    Context keys:
        - artifact: Path or name of the artifact
        - expected: Fingerprint required by the current configuration
        - found: Fingerprint recorded in the artifact
    """

    fields = ("artifact", "expected", "found")


class MissingArtifactError(DynamicDPSError):
    """
    Raised when a required artifact (dataset, bank, model, output) is absent.

    Context keys:
        - artifact: Path of the missing artifact
        - command: The command that needed it
    """

    fields = ("artifact", "command")


class LineSearchError(DynamicDPSError):
    """Raised when a line search is started along a non-descent direction (context: dphi0)."""

    fields = ("dphi0",)


class MetricError(DynamicDPSError):
    """
    Raised when a metric is undefined for its inputs.

    Context keys:
        - metric: Metric name
        - class_id: Tissue class involved
    """

    fields = ("metric", "class_id")
