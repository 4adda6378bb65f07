"""Exceptions."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Any


def _preview(value: Any, limit: int = 200) -> str:
    text = str(value)
    return text[:limit] + "..." if len(text) > limit else text


class HybridRLError(Exception):
    """Base exception for hybridrl errors."""


class ConfigError(HybridRLError):
    """Raised when a run configuration is invalid."""

    def __init__(self, message: str, key: str | None = None, value: Any | None = None) -> None:
        """Initialize config error with context.

        Args:
            message: Human-readable error message
            key: Dotted path of the offending key (optional)
            value: Offending value (optional)
        """
        super().__init__(message)
        self.key = key
        self.value = value

    def __str__(self) -> str:
        """Return detailed error representation."""
        parts = [super().__str__()]
        if self.key is not None:
            parts.append(f"Key: {self.key}")
        if self.value is not None:
            parts.append(f"Value: {_preview(self.value)}")
        return "\n".join(parts)


class ActionOutOfBoundsError(HybridRLError, ValueError):
    """Raised when an action lies outside the environment's action set."""

    def __init__(self, action: float, env_name: str, allowed: Sequence[float]) -> None:
        """Initialize action error.

        Args:
            action: The rejected action
            env_name: Name of the environment
            allowed: Bounds or discrete action values of the environment
        """
        super().__init__(f"Action {action!r} is not admissible for {env_name}")
        self.action = action
        self.env_name = env_name
        self.allowed = tuple(allowed)

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"{super().__str__()}\nAllowed: {self.allowed}"


class DimensionMismatchError(HybridRLError, ValueError):
    """Raised when an array does not have the expected trailing dimension."""

    def __init__(self, message: str, expected: int, actual: int) -> None:
        """Initialize dimension error.

        Args:
            message: Human-readable error message
            expected: Expected dimension
            actual: Received dimension
        """
        super().__init__(message)
        self.expected = expected
        self.actual = actual

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"{super().__str__()} (expected {self.expected}, got {self.actual})"


class NoForwardPassError(HybridRLError):
    """Raised when backward is called without a recorded forward pass."""


class DivergenceError(HybridRLError):
    """Raised when an optimizer receives non-finite gradients."""

    def __init__(self, message: str, step: int) -> None:
        """Initialize divergence error.

        Args:
            message: Human-readable error message
            step: Optimizer step counter at the time of the rejected update
        """
        super().__init__(message)
        self.step = step

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"{super().__str__()} (optimizer step {self.step})"


class TrainingFailedError(HybridRLError):
    """Raised when a trained policy misses the evaluation bar."""

    def __init__(
        self,
        message: str,
        success_rate: float,
        threshold: float,
        total_steps: int | None = None,
        seed: int | None = None,
    ) -> None:
        """Initialize training failure.

        Args:
            message: Human-readable error message
            success_rate: Fraction of evaluation episodes that reached the set-point
            threshold: Required success fraction
            total_steps: Training budget that was spent (optional)
            seed: Training seed (optional)
        """
        super().__init__(message)
        self.success_rate = success_rate
        self.threshold = threshold
        self.total_steps = total_steps
        self.seed = seed

    def __str__(self) -> str:
        """Return detailed error representation."""
        parts = [super().__str__()]
        parts.append(f"Success rate: {self.success_rate:.2f} (required {self.threshold:.2f})")
        if self.total_steps is not None:
            parts.append(f"Steps: {self.total_steps}")
        if self.seed is not None:
            parts.append(f"Seed: {self.seed}")
        return "\n".join(parts)


class RetryExhaustedError(HybridRLError):
    """Raised when all seed retries of a stage are exhausted."""

    def __init__(
        self,
        message: str,
        attempts: int,
        last_error: Exception,
    ) -> None:
        """Initialize retry exhausted error.

        Args:
            message: Human-readable error message
            attempts: Number of attempts made
            last_error: The final error that caused failure
        """
        super().__init__(message)
        self.attempts = attempts
        self.last_error = last_error

    def __str__(self) -> str:
        """Return detailed error representation."""
        return (
            f"{super().__str__()} (after {self.attempts} attempts)\nLast error: {self.last_error}"
        )


class NoCriticalPointsError(HybridRLError):
    """Raised when a policy has no critical points on the probed grid."""

    def __init__(self, message: str, n_cells: int) -> None:
        """Initialize empty critical set error.

        Args:
            message: Human-readable error message
            n_cells: Number of grid cells that were probed
        """
        super().__init__(message)
        self.n_cells = n_cells

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"{super().__str__()}\nProbed cells: {self.n_cells}"


class UnsupportedTopologyError(HybridRLError):
    """Raised when the critical set does not split the space into two parts."""

    def __init__(self, message: str, components: Sequence[int]) -> None:
        """Initialize topology error.

        Args:
            message: Human-readable error message
            components: Connected component count found for each side
        """
        super().__init__(message)
        self.components = tuple(components)

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"{super().__str__()}\nComponents per side: {self.components}"


class OutOfRegionError(HybridRLError):
    """Raised when a region-restricted policy is queried outside its region."""

    def __init__(self, state: Any, region: str) -> None:
        """Initialize out-of-region error.

        Args:
            state: The offending state
            region: Name of the region
        """
        super().__init__(f"State lies outside region {region!r}")
        self.state = state
        self.region = region

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"{super().__str__()}\nState: {_preview(self.state)}"


class InsufficientOverlapError(HybridRLError):
    """Raised when extended regions overlap by less than the noise bound."""

    def __init__(self, message: str, width: float, required: float, horizon: float) -> None:
        """Initialize overlap error.

        Args:
            message: Human-readable error message
            width: Measured overlap width
            required: Required minimum width
            horizon: Backward propagation horizon that was used
        """
        super().__init__(message)
        self.width = width
        self.required = required
        self.horizon = horizon

    def __str__(self) -> str:
        """Return detailed error representation."""
        return (
            f"{super().__str__()}\nWidth: {self.width:.4f} (required {self.required:.4f})\n"
            f"Horizon: {self.horizon} s; increase the extension horizon"
        )


class HybridSystemError(HybridRLError):
    """Raised when a hybrid system is assembled or stepped from invalid input."""


class CoverageError(HybridSystemError):
    """Raised when the extended regions do not cover the state space."""

    def __init__(self, message: str, uncovered: int) -> None:
        """Initialize coverage error.

        Args:
            message: Human-readable error message
            uncovered: Number of grid cells in neither region
        """
        super().__init__(message)
        self.uncovered = uncovered

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"{super().__str__()}\nUncovered cells: {self.uncovered}"


class ZenoError(HybridSystemError):
    """Raised when a hybrid solution exceeds the jump bound."""

    def __init__(self, message: str, jumps: int, limit: int, time: float) -> None:
        """Initialize Zeno guard error.

        Args:
            message: Human-readable error message
            jumps: Jumps taken so far
            limit: Configured jump bound
            time: Ordinary time at which the bound was hit
        """
        super().__init__(message)
        self.jumps = jumps
        self.limit = limit
        self.time = time

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"{super().__str__()}\nJumps: {self.jumps} (limit {self.limit}) at t={self.time:.3f}"


class PipelineStageError(HybridRLError):
    """Raised when a pipeline stage fails."""

    def __init__(self, message: str, step: int, stage: str, original_error: Exception) -> None:
        """Initialize stage error.

        Args:
            message: Human-readable error message
            step: Pipeline step number (1-7)
            stage: Stage name
            original_error: Exception raised by the stage
        """
        super().__init__(message)
        self.step = step
        self.stage = stage
        self.original_error = original_error

    def __str__(self) -> str:
        """Return detailed error representation."""
        parts = [super().__str__()]
        parts.append(f"Step {self.step}: {self.stage}")
        parts.append(f"Caused by: {type(self.original_error).__name__}: {self.original_error}")
        return "\n".join(parts)


class ArtifactNotFoundError(HybridRLError, FileNotFoundError):
    """Raised when a persisted artifact is missing."""

    def __init__(self, path: Any, kind: str) -> None:
        """Initialize missing artifact error.

        Args:
            path: Expected file location
            kind: Artifact kind (policy, region, ...)
        """
        super().__init__(f"Missing {kind} artifact")
        self.path = path
        self.kind = kind

    def __str__(self) -> str:
        """Return detailed error representation."""
        return f"Missing {self.kind} artifact\nPath: {self.path}"


class ArtifactFormatError(HybridRLError):
    """Raised when a persisted payload does not have the expected shape."""

    def __init__(
        self,
        message: str,
        path: str,
        payload: Any | None = None,
    ) -> None:
        """Initialize artifact format error.

        Args:
            message: Human-readable error message
            path: The payload path that could not be extracted
            payload: The payload that was being extracted from
        """
        super().__init__(message)
        self.path = path
        self.payload = payload

    def __str__(self) -> str:
        """Return detailed error representation."""
        parts = [super().__str__()]
        parts.append(f"Path: {self.path}")
        if self.payload is not None:
            parts.append(f"Payload: {_preview(self.payload)}")
        return "\n".join(parts)
