"""Checkpoint handles and the binding error types."""

from __future__ import annotations

import os

from .formats import read_checkpoint_header


class BindingError(Exception):
    """Base class for errors raised by the binding layer."""


class HandleClosed(BindingError):
    """An operation was attempted on a handle after close()."""


class ShapeMismatch(BindingError):
    """An input array disagrees with the shape the handle's config demands.

    Carries ``expected`` and ``actual`` so callers can log both sides.
    """

    def __init__(self, expected, actual, what: str = "array"):
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"{what}: expected shape {self.expected}, got {self.actual}")


class CLIError(BindingError):
    """The codec CLI exited nonzero; stderr rides along for diagnosis."""

    def __init__(self, argv, returncode: int, stderr: str):
        self.argv = list(argv)
        self.returncode = int(returncode)
        self.stderr = stderr
        super().__init__(f"{self.argv[0]} exited {self.returncode}: {stderr.strip()}")


class BindingHandle:
    """Open reference to a VQCKPT1 checkpoint.

    Construction reads the checkpoint preamble once and keeps the path
    plus config; tensors load inside the CLI per call. The config fields
    drive shape validation before anything is serialized. Handles are
    not shareable across threads, open one per worker. close() drops
    the reference and every later operation raises HandleClosed.
    """

    def __init__(self, checkpoint_path):
        path = os.fspath(checkpoint_path)
        meta = read_checkpoint_header(path)
        self._path = path
        self._config = dict(meta["config"])
        self._closed = False

    def close(self) -> None:
        self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed

    def __enter__(self) -> "BindingHandle":
        self._require_open()
        return self

    def __exit__(self, *exc) -> bool:
        self.close()
        return False

    def __repr__(self) -> str:
        state = "closed" if self._closed else "open"
        return f"BindingHandle({self._path!r}, {state})"

    def _require_open(self) -> None:
        if self._closed:
            raise HandleClosed("handle is closed")

    @property
    def checkpoint_path(self) -> str:
        self._require_open()
        return self._path

    @property
    def config(self) -> dict:
        self._require_open()
        return dict(self._config)

    @property
    def d(self) -> int:
        self._require_open()
        return int(self._config["d"])

    @property
    def W(self) -> int:
        self._require_open()
        return int(self._config["W"])

    @property
    def q(self) -> int:
        self._require_open()
        return int(self._config["q"])

    @property
    def K(self) -> int:
        self._require_open()
        return int(self._config["K"])

    @property
    def C(self) -> int:
        self._require_open()
        return int(self._config["C"])

    @property
    def tau(self) -> int:
        """Code steps per window, W // q."""
        self._require_open()
        return self.W // self.q
