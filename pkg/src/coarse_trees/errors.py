"""Exception hierarchy.

Every error carries a stable ``code`` so the CLI can print a
machine-readable category line.
"""

from __future__ import annotations


class CoarseTreesError(Exception):
    code = "error"


class GraphError(CoarseTreesError):
    code = "graph"


class EmptyGraph(GraphError):
    code = "EmptyGraph"


class Disconnected(GraphError):
    code = "Disconnected"


class NonPositiveIndex(GraphError):
    code = "NonPositiveIndex"


class SchemaError(GraphError):
    """Malformed input document; message names the line or field."""

    code = "SchemaError"


class NotReduced(CoarseTreesError):
    code = "NotReduced"


class BallTooLarge(CoarseTreesError):
    code = "BallTooLarge"


class Degenerate(CoarseTreesError):
    code = "Degenerate"


class NotATreeType(CoarseTreesError):
    """A local type whose changes are not closed under negation."""

    code = "NotATreeType"


class ValenceOneInterior(CoarseTreesError):
    code = "ValenceOneInterior"


class SlopeTooLarge(CoarseTreesError):
    code = "SlopeTooLarge"


class NotTypeTwoTwo(CoarseTreesError):
    code = "NotTypeTwoTwo"


class MatchFailure(CoarseTreesError):
    code = "MatchFailure"

    def __init__(self, message: str, node_pair=None):
        super().__init__(message)
        self.node_pair = node_pair


class DensityMismatch(MatchFailure):
    code = "DensityMismatch"


class LadderExhausted(CoarseTreesError):
    """A ladder would need vertices beyond the materialization cap."""

    code = "LadderExhausted"


class ZeroSlope(CoarseTreesError):
    code = "ZeroSlope"


class OrientationNotPreserved(CoarseTreesError):
    code = "OrientationNotPreserved"


class OutsideBall(CoarseTreesError):
    code = "OutsideBall"


class NotCoprime(CoarseTreesError):
    code = "NotCoprime"


class SingularMatrix(CoarseTreesError):
    code = "SingularMatrix"


class IllConditioned(CoarseTreesError):
    code = "IllConditioned"


class DimensionMismatch(CoarseTreesError):
    code = "DimensionMismatch"


class BoundedHeightWarning(UserWarning):
    """The distance formula assumes an unbounded height function."""
