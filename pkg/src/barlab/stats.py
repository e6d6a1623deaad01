"""Empirical sums and averages over cell collections.

Two flavors of node function:

* CellFunction: f of a single cell value, vectorized over numpy arrays;
* TriangleFunction: f of a mother-daughters triple (x, y, z), evaluated only
  on the division classes named in its mask; cells of other classes
  contribute zero (the dead-daughter extension). Within a masked class the
  dead coordinates are passed as NaN and must not be read by the evaluator.

All sums use exact compensated summation (math.fsum), so results do not
depend on summation order. Each function declares a sup-norm bound, checked
against the normalized-average inequality on every evaluation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .bar import PopulationSample
from .offspring import CellKind, expected_sizes
from .tree import GwTree, generations_of, generation_nodes, tree_nodes

__all__ = [
    "SetKind",
    "CellFunction",
    "TriangleFunction",
    "NodeFunction",
    "MASK_BOTH",
    "MASK_NEW",
    "MASK_OLD",
    "MASK_ALL",
    "labels_of_set",
    "m_sum",
    "bar_avg",
    "tilde_avg",
    "w_proxy",
]


class SetKind(enum.Enum):
    """Which cell collection at depth r: one generation or the whole sub-tree."""

    GENERATION = "generation"
    TREE = "tree"


@dataclass(frozen=True)
class CellFunction:
    """Single-cell function with a declared sup-norm bound on the state interval."""

    fn: Callable[[np.ndarray], np.ndarray]
    bound: float

    def __post_init__(self) -> None:
        if not self.bound >= 0:
            raise ValueError("bound must be >= 0")


MASK_BOTH = frozenset({CellKind.BOTH_ALIVE})
MASK_NEW = frozenset({CellKind.NEW_ONLY})
MASK_OLD = frozenset({CellKind.OLD_ONLY})
MASK_ALL = frozenset({CellKind.BOTH_ALIVE, CellKind.NEW_ONLY,
                      CellKind.OLD_ONLY, CellKind.NONE_ALIVE})


@dataclass(frozen=True)
class TriangleFunction:
    """Mother-daughters function supported on the division classes in ``mask``."""

    fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    bound: float
    mask: frozenset = MASK_BOTH

    def __post_init__(self) -> None:
        if not self.bound >= 0:
            raise ValueError("bound must be >= 0")
        if not self.mask or not self.mask <= MASK_ALL:
            raise ValueError("mask must be a non-empty subset of the four cell kinds")


NodeFunction = Union[CellFunction, TriangleFunction]


def labels_of_set(tree: GwTree, set_kind: SetKind, r: int) -> np.ndarray:
    return generation_nodes(tree, r) if set_kind is SetKind.GENERATION else tree_nodes(tree, r)


def _triangle_contributions(sample: PopulationSample, labels: np.ndarray,
                            f: TriangleFunction) -> list[float]:
    tree = sample.tree
    labels = np.asarray(labels, dtype=np.int64)
    gens = generations_of(labels)
    if labels.size and int(gens.max()) >= tree.max_depth:
        raise KeyError("triangle sums need daughters: a label lies at the sampled depth")
    parts: list[float] = []
    for r in np.unique(gens):
        r = int(r)
        sel = labels[gens == r]
        gl = tree.labels_at(r)
        idx = np.searchsorted(gl, sel)
        if np.any(idx >= gl.size) or np.any(gl[np.minimum(idx, gl.size - 1)] != sel):
            raise KeyError("label is not an alive cell")
        kinds = tree.kinds_at(r)[idx]
        x_all = sample.values_at(r)[idx]
        for kind in f.mask:
            m = kinds == kind
            if not m.any():
                continue
            sub = sel[m]
            x = x_all[m]
            nan = np.full(sub.size, np.nan)
            y = sample.lookup(2 * sub) if kind in (CellKind.BOTH_ALIVE, CellKind.NEW_ONLY) else nan
            z = sample.lookup(2 * sub + 1) if kind in (CellKind.BOTH_ALIVE, CellKind.OLD_ONLY) else nan
            vals = np.asarray(f.fn(x, y, z), dtype=np.float64)
            if vals.shape != x.shape:
                raise ValueError("triangle evaluator must return one value per cell")
            parts.extend(vals.tolist())
    return parts


def m_sum(sample: PopulationSample, labels: np.ndarray, f: NodeFunction) -> float:
    """Sum of f over the labeled cells; the empty collection sums to 0."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return 0.0
    if isinstance(f, CellFunction):
        vals = np.asarray(f.fn(sample.lookup(labels)), dtype=np.float64)
        if vals.shape != labels.shape:
            raise ValueError("cell evaluator must return one value per cell")
        return math.fsum(vals.tolist())
    return math.fsum(_triangle_contributions(sample, labels, f))


def bar_avg(sample: PopulationSample, labels: np.ndarray, f: NodeFunction) -> float:
    """m_sum / |J|; rejects the empty collection."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("bar average of an empty cell collection is undefined")
    out = m_sum(sample, labels, f) / labels.size
    if abs(out) > f.bound * (1.0 + 1e-12) + 1e-300:
        raise RuntimeError("bar average exceeded the declared sup-norm bound")
    return out


def _sum_over_set(sample: PopulationSample, f: NodeFunction,
                  set_kind: SetKind, r: int) -> tuple[float, int]:
    """(sum, count) of f over G_r or T_r, using the aligned fast path."""
    tree = sample.tree
    if isinstance(f, CellFunction):
        rs = [r] if set_kind is SetKind.GENERATION else range(r + 1)
        parts: list[float] = []
        count = 0
        for k in rs:
            v = sample.values_at(k)
            count += v.size
            if v.size:
                vals = np.asarray(f.fn(v), dtype=np.float64)
                if vals.shape != v.shape:
                    raise ValueError("cell evaluator must return one value per cell")
                parts.extend(vals.tolist())
        return math.fsum(parts), count
    labels = labels_of_set(tree, set_kind, r)
    return m_sum(sample, labels, f), labels.size


def tilde_avg(sample: PopulationSample, f: NodeFunction,
              set_kind: SetKind, r: int) -> float:
    """Sum of f over G_r (or T_r) divided by its expected size m^r (or t_r).

    Expected sizes use the mean of the tree's own offspring law. The result
    always satisfies |value| <= bound * |J| / E|J| (checked).
    """
    m = sample.tree.law.mean
    eg, et = expected_sizes(m, r)
    denom = eg if set_kind is SetKind.GENERATION else et
    total, count = _sum_over_set(sample, f, set_kind, r)
    out = total / denom
    if abs(out) > f.bound * count / denom * (1.0 + 1e-12) + 1e-300:
        raise RuntimeError("normalized average exceeded the declared sup-norm bound")
    return out


def w_proxy(tree: GwTree, r: int) -> float:
    """m^-r |G_r|: finite-depth proxy of the population growth limit."""
    if not (0 <= r <= tree.max_depth):
        raise ValueError(f"proxy depth {r} outside the sampled range")
    size = tree.labels_at(r).size
    if size == 0:
        return 0.0  # extinct generation: the proxy is 0 even when m <= 1
    return size / tree.law.mean**r
