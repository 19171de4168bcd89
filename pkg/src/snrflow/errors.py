"""Exception hierarchy shared by all snrflow modules"""

from __future__ import annotations

from typing import Any


class SnrFlowError(Exception):
    """Base class for every error raised deliberately by snrflow"""


class ShapeError(SnrFlowError, ValueError):
    """Operand extents disagree with an operation's contract"""


class NonFiniteError(SnrFlowError, ArithmeticError):
    """A tensor or scalar contains NaN or Inf where finite values are required"""


class DivergenceError(NonFiniteError):
    """Training produced a non-finite loss.

    Carries everything needed to report the event: the iteration at which the loss
    diverged, the metric traces recorded so far (ending with the NaN marker) and the
    last checkpoint written before the divergence, if any.
    """

    def __init__(
        self,
        message: str,
        iteration: int,
        traces: list[Any] | None = None,
        last_good_checkpoint: Any | None = None,
    ):
        super().__init__(message)
        self.iteration = iteration
        self.traces = traces or []
        self.last_good_checkpoint = last_good_checkpoint


class DomainError(SnrFlowError, ValueError):
    """A scalar argument lies outside the domain of a function"""


class KneeDetectionError(SnrFlowError, ValueError):
    """Base class for knee detection failures"""


class TooShortError(KneeDetectionError):
    """Trace has fewer points than the detector needs"""


class AllFlatError(KneeDetectionError):
    """Trace never improves, so no knee exists"""


class NoCheckpointError(SnrFlowError, LookupError):
    """No checkpoint exists at or before the selected iteration"""


class InsufficientDataError(SnrFlowError, ValueError):
    """Not enough benchmark points to fit a scaling law"""


class CheckpointError(SnrFlowError, ValueError):
    """Base class for checkpoint file problems"""


class FormatError(CheckpointError):
    """Bad magic, unsupported version or malformed header"""


class TruncationError(CheckpointError):
    """File ends before the bytes its header declares"""

    def __init__(self, message: str, tensor_name: str | None = None):
        super().__init__(message)
        self.tensor_name = tensor_name


class ConfigError(SnrFlowError, ValueError):
    """Run configuration is unreadable or invalid"""


class TraceFormatError(SnrFlowError, ValueError):
    """Metric trace CSV is malformed"""
