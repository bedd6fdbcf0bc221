"""Exception hierarchy.

Every error raised by this package derives from DeepFbsdeError so callers can
catch the library without catching the world. The CLI maps subclasses to exit
codes: ConfigError -> 2, TrainingAbort -> 3, CheckpointError -> 4.
"""

from __future__ import annotations


class DeepFbsdeError(Exception):
    """Base class for all package errors."""


class ConfigError(DeepFbsdeError):
    """Invalid or inconsistent configuration (bad key, bad value, bad shape)."""


class TrainingAbort(DeepFbsdeError):
    """Training was stopped early (non-finite loss or too many diverged samples)."""

    def __init__(self, msg: str, iteration: int | None = None):
        super().__init__(msg)
        self.iteration = iteration


class CheckpointError(DeepFbsdeError):
    """Checkpoint file is missing, corrupt, or does not match the network."""


class UsageError(DeepFbsdeError):
    """Library API misuse (wrong shape, non-scalar backward root, ...)."""


class IntegrationBlowup(DeepFbsdeError):
    """State or value process became non-finite during integration."""

    def __init__(self, msg: str, step: int | None = None):
        super().__init__(msg)
        self.step = step


class NumericalError(DeepFbsdeError):
    """Numerically unusable intermediate (singular or ill-conditioned matrix)."""


class DomainError(DeepFbsdeError, ValueError):
    """Argument outside a function's mathematical domain."""
