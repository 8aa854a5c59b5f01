"""Distribution-balancing penalty over per-pattern representation groups.

The penalty is the mean entropic transport cost between every pair of
treatment-pattern groups large enough to define a transport problem.  Group
points are standardized per column (pooled over all groups, differentiably)
before the pairwise costs, so the regularizer's scale does not depend on the
representation's scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .errors import ContractError, NumericError
from .patterns import Pattern

DEFAULT_EPS = 0.1
DEFAULT_ITERS = 50
MIN_GROUP_SIZE = 2
_VAR_FLOOR = 1e-8


@dataclass
class RepGroup:
    """Representation rows of the units observed under one pattern."""

    pattern: Pattern
    points: "T.Node | np.ndarray"

    def n(self) -> int:
        return self.points.shape[0]


def _as_node(tp: T.Tape, points) -> T.Node:
    if isinstance(points, T.Node):
        return points
    return tp.constant(np.asarray(points, dtype=np.float64), name="points")


def sinkhorn_wasserstein(sa, sb, eps: float = DEFAULT_EPS,
                         iters: int = DEFAULT_ITERS):
    """Entropic transport cost between two non-empty point sets.

    Accepts ``RepGroup``s, tape nodes, or plain arrays.  Node inputs give a
    differentiable node; array inputs give a float.  Symmetric in its
    arguments by construction.
    """
    pa = sa.points if isinstance(sa, RepGroup) else sa
    pb = sb.points if isinstance(sb, RepGroup) else sb
    is_node = isinstance(pa, T.Node) or isinstance(pb, T.Node)
    if not is_node:
        pa = np.asarray(pa, dtype=np.float64)
        pb = np.asarray(pb, dtype=np.float64)
        if pa.ndim != 2 or pb.ndim != 2:
            raise ContractError("point sets must be 2-D matrices")
        if pa.shape[0] == 0 or pb.shape[0] == 0:
            raise ContractError("sinkhorn_wasserstein requires non-empty groups")
        if not (np.isfinite(pa).all() and np.isfinite(pb).all()):
            raise NumericError("sinkhorn_wasserstein received non-finite points")
        tp = T.Tape()
        node = T.sinkhorn_pair(tp.constant(pa), tp.constant(pb), eps, iters)
        return float(node.value[0, 0])
    tp = pa.tape if isinstance(pa, T.Node) else pb.tape
    return T.sinkhorn_pair(_as_node(tp, pa), _as_node(tp, pb), eps, iters)


def standardize_pooled(groups: list[T.Node]) -> list[T.Node]:
    """Standardize each column using mean/sd pooled over all groups' rows.

    Fully on-tape, so gradients flow through the pooled statistics as well.
    """
    tp = groups[0].tape
    total = sum(g.shape[0] for g in groups)
    p = groups[0].shape[1]
    # Pooled mean: size-weighted combination of the per-group column means.
    pooled_mean = tp.constant(np.zeros((1, p)), name="std_zero_mean")
    for g in groups:
        pooled_mean = T.add(pooled_mean, T.scale(T.mean(g, axis=0), g.shape[0] / total))
    neg_mean = T.scale(pooled_mean, -1.0)
    centered = [T.bias_add(g, neg_mean) for g in groups]
    pooled_var = tp.constant(np.zeros((1, p)), name="std_zero_var")
    for cg in centered:
        pooled_var = T.add(
            pooled_var, T.scale(T.mean(T.square(cg), axis=0), cg.shape[0] / total))
    inv_sd = T.reciprocal(T.sqrt(T.add_scalar(pooled_var, _VAR_FLOOR)))
    return [T.row_mul(cg, inv_sd) for cg in centered]


def balancing_penalty(groups: list[RepGroup], eps: float = DEFAULT_EPS,
                      iters: int = DEFAULT_ITERS,
                      min_group_size: int = MIN_GROUP_SIZE,
                      standardize: bool = True):
    """Mean pairwise transport cost over eligible pattern groups.

    Groups smaller than ``min_group_size`` are skipped and the mean runs over
    the pairs actually computed; fewer than two eligible groups gives 0.
    Returns a node when the groups carry nodes, else a float.
    """
    is_node = any(isinstance(g.points, T.Node) for g in groups)
    tp = None
    if is_node:
        tp = next(g.points.tape for g in groups if isinstance(g.points, T.Node))
    else:
        tp = T.Tape()
    nodes = [_as_node(tp, g.points) for g in groups]
    eligible = [node for g, node in zip(groups, nodes) if g.n() >= min_group_size]
    if len(eligible) < 2:
        zero = tp.constant(0.0, name="penalty_zero")
        return zero if is_node else 0.0
    if standardize:
        eligible = standardize_pooled(eligible)
    total = tp.constant(0.0, name="penalty_acc")
    n_pairs = 0
    for i in range(len(eligible)):
        for j in range(i + 1, len(eligible)):
            total = T.add(total, T.sinkhorn_pair(eligible[i], eligible[j], eps, iters))
            n_pairs += 1
    out = T.scale(total, 1.0 / n_pairs)
    return out if is_node else float(out.value[0, 0])
