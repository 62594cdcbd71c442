"""Exception types raised across the package.

Each class carries a short ``error_id`` so the CLI can emit structured
diagnostics on stderr without string matching.
"""

from __future__ import annotations


class GraffError(Exception):
    error_id = "graff_error"


class RankDeficient(GraffError, ValueError):
    error_id = "rank_deficient"

    def __init__(self, message: str = "basis is rank deficient", item_id: str | None = None):
        self.item_id = item_id
        if item_id is not None:
            message = f"{message} (id={item_id!r})"
        super().__init__(message)


class DimensionMismatch(GraffError, ValueError):
    error_id = "dimension_mismatch"


class MixedAmbientDims(DimensionMismatch):
    error_id = "mixed_ambient_dims"


class EmptyInput(GraffError, ValueError):
    error_id = "empty_input"


class EmptyInlierSet(GraffError, ValueError):
    error_id = "empty_inlier_set"


class QueueOverflow(GraffError, RuntimeError):
    error_id = "queue_overflow"


class DegenerateSegment(GraffError, ValueError):
    error_id = "degenerate_segment"


class ZeroVector(GraffError, ValueError):
    error_id = "zero_vector"


class PathThroughZero(GraffError, ValueError):
    error_id = "path_through_zero"


class SchemaError(GraffError, ValueError):
    error_id = "schema_error"
