"""Quasi-isometry geometry of graphs of Z's.

Classification of graphs of infinite cyclic groups, Bass-Serre tree balls
with exact heights, constant-slope laminations of homogeneous coarsely
oriented trees, line-by-line quasi-isometries between them, the warped
product metric, and commensurability and HNN invariants.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .bass_serre import LocalType, TreeBall, build_ball, homogenize, lift_spanning_tree
from .errors import CoarseTreesError
from .graph_core import (
    ClassLabel,
    GraphOfZs,
    QiBs23,
    SolvableBS,
    VirtuallyFnTimesZ,
    bs_graph,
    classify,
    edge_height_change,
    is_height_bounded,
    make_graph,
    reduce_graph,
    trefoil_graph,
    validate_graph,
)
from .heights import HeightValue
from .invariants import abs_jordan_form, bs_not_commensurable, hnn_qi_equivalent
from .oriented_tree import (
    LazyTree,
    Lamination,
    TreeKind,
    beta_max,
    build_lamination,
    classify_local_type,
    collapse_lamination,
    select_zero_edges,
    verify_slope,
)
from .qi_builder import (
    CollapsedIso,
    QiMap,
    QiReport,
    assemble_qi,
    build_collapsed_iso,
    hall_feasible,
    line_map,
    measure_qi_report,
    rank_match,
)
from .warped_metric import (
    WarpedPoint,
    approx_distance,
    compare_metrics,
    extend_product_map,
    max_height_on_geodesic,
    oracle_distance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
