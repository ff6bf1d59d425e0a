"""Process-boundary bindings for the motiontok codec.

Exposes four operations, py_encode, py_decode, py_tokenize, and
py_metrics, plus the BindingHandle checkpoint reference. Everything
round-trips through the installed motiontok CLI and its container
formats, so outputs are identical to direct CLI runs. Versioned against
checkpoint format VQCKPT1.
"""

from .formats import (
    CHECKPOINT_FORMAT,
    MSEQ_FORMAT,
    FormatError,
    read_checkpoint_header,
    read_mseq,
    write_mseq,
)
from .handle import BindingError, BindingHandle, CLIError, HandleClosed, ShapeMismatch
from .ops import cli_command, py_decode, py_encode, py_metrics, py_tokenize

__version__ = "0.1.0"

__all__ = [
    "BindingError",
    "BindingHandle",
    "CHECKPOINT_FORMAT",
    "CLIError",
    "FormatError",
    "HandleClosed",
    "MSEQ_FORMAT",
    "ShapeMismatch",
    "cli_command",
    "py_decode",
    "py_encode",
    "py_metrics",
    "py_tokenize",
    "read_checkpoint_header",
    "read_mseq",
    "write_mseq",
]
