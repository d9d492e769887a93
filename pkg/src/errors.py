from __future__ import annotations

from typing import Any, Mapping, Optional


class PhyloAlgError(RuntimeError):
    """Base class for every error raised by the library.

    ``exit_code`` is what the command line returns when the error escapes a
    sub-command; ``code`` is the machine-readable tag written to the error
    payload.
    """

    code = "invalid_input"

    def __init__(self, message: str, exit_code: int = 2, details: Optional[Mapping[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code
        self.details = dict(details) if details else None


class NewickSyntaxError(PhyloAlgError):
    code = "newick_syntax"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}", details={"offset": offset})
        self.offset = offset


class TreeError(PhyloAlgError):
    code = "tree"


class DatasetError(PhyloAlgError):
    code = "dataset"

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        details = {k: v for k, v in (("row", row), ("column", column)) if v is not None}
        if details:
            where = ", ".join(f"{k} {v}" for k, v in details.items())
            message = f"{message} ({where})"
        super().__init__(message, details=details or None)
        self.row = row
        self.column = column


class FlatteningError(PhyloAlgError):
    code = "flattening"


class SpectralError(PhyloAlgError):
    code = "spectral"


class ModelError(PhyloAlgError):
    code = "model"


class RankingError(PhyloAlgError):
    code = "ranking"


class LeafMismatchError(PhyloAlgError):
    """Trees, splits and distributions disagree on the leaf set."""

    code = "leaf_mismatch"

    def __init__(self, message: str, details: Optional[Mapping[str, Any]] = None):
        super().__init__(message, exit_code=3, details=details)
