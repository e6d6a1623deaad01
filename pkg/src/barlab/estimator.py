"""Least-squares estimation of the eight autoregression coefficients.

Estimation at depth n regresses daughter values on mother values over the
cells of generations 0..n, split by division outcome:

* both-alive cells give (alpha0, beta0) from the new-pole daughters and
  (alpha1, beta1) from the old-pole daughters (shared design);
* new-only cells give (alpha0p, beta0p); old-only cells give (alpha1p, beta1p).

Each regression is slope = cov(X_mother, X_daughter) / var(X_mother),
intercept = mean(daughter) - slope * mean(mother). Only the sub-tree of
generations 0..n+1 is read; deeper observations are ignored. A class that is
empty, a singleton, or has zero empirical mother variance yields a typed
DegenerateClass marker instead of numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .bar import BarParams, PopulationSample
from .chain import stationary_moments
from .offspring import OffspringLaw
from .stats import MASK_BOTH, TriangleFunction, bar_avg
from .tree import classify_cells, tree_nodes

__all__ = [
    "ClassFit",
    "DegenerateClass",
    "ThetaEstimate",
    "EstimateUnavailableError",
    "RegressionFunctionals",
    "lse",
    "estimation_error",
    "regression_functionals",
    "b_n_target",
]

CLASS_IDS = ("both_alive", "new_only", "old_only")


@dataclass(frozen=True)
class ClassFit:
    """One daughter-on-mother regression."""

    slope: float
    intercept: float
    count: int
    denominator: float  # empirical variance of the mother values


@dataclass(frozen=True)
class DegenerateClass:
    """Marker: the regression for this class cannot be formed."""

    class_id: str
    count: int
    denominator: float
    reason: str


class EstimateUnavailableError(ValueError):
    def __init__(self, degenerate: list[DegenerateClass]):
        ids = ", ".join(d.class_id for d in degenerate)
        super().__init__(f"estimate unavailable, degenerate class(es): {ids}")
        self.degenerate = degenerate


FitOrDegenerate = Union[ClassFit, DegenerateClass]

COMPONENT_NAMES = ("alpha0", "beta0", "alpha1", "beta1",
                   "alpha0p", "beta0p", "alpha1p", "beta1p")


@dataclass(frozen=True)
class ThetaEstimate:
    """The four regressions behind the eight coefficients, at depth n."""

    n: int
    both_new: FitOrDegenerate   # (alpha0, beta0)
    both_old: FitOrDegenerate   # (alpha1, beta1)
    new_only: FitOrDegenerate   # (alpha0p, beta0p)
    old_only: FitOrDegenerate   # (alpha1p, beta1p)

    @property
    def fits(self) -> tuple[FitOrDegenerate, ...]:
        return (self.both_new, self.both_old, self.new_only, self.old_only)

    @property
    def degenerate(self) -> list[DegenerateClass]:
        out, seen = [], set()
        for f in self.fits:
            if isinstance(f, DegenerateClass) and f.class_id not in seen:
                seen.add(f.class_id)
                out.append(f)
        return out

    @property
    def available(self) -> bool:
        return not self.degenerate

    def as_vector(self) -> np.ndarray:
        """(alpha0, beta0, alpha1, beta1, alpha0p, beta0p, alpha1p, beta1p)."""
        if not self.available:
            raise EstimateUnavailableError(self.degenerate)
        out = []
        for f in self.fits:
            out.extend((f.slope, f.intercept))
        return np.asarray(out)

    def as_dict(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        for name_s, name_i, f in zip(COMPONENT_NAMES[::2], COMPONENT_NAMES[1::2], self.fits):
            if isinstance(f, ClassFit):
                out[name_s], out[name_i] = f.slope, f.intercept
            else:
                out[name_s] = out[name_i] = None
        return out

    def class_counts(self) -> dict[str, int]:
        return {
            "both_alive": self.both_new.count,
            "new_only": self.new_only.count,
            "old_only": self.old_only.count,
        }


def _regress(x: np.ndarray, y: np.ndarray, class_id: str) -> FitOrDegenerate:
    n = x.size
    if n < 2:
        reason = "empty class" if n == 0 else "singleton class"
        return DegenerateClass(class_id, n, 0.0, reason)
    xm = x.mean()
    xc = x - xm
    var = float(xc @ xc) / n
    if var <= 0.0:
        return DegenerateClass(class_id, n, var, "zero mother variance")
    ym = y.mean()
    slope = float(xc @ (y - ym)) / n / var
    return ClassFit(slope, float(ym - slope * xm), n, var)


def lse(sample: PopulationSample, n: int) -> ThetaEstimate:
    """Least-squares coefficient estimate from generations 0..n+1.

    Requires n < tree depth so every generation-n cell has stored daughters.
    """
    tree = sample.tree
    if n < 0 or n >= tree.max_depth:
        raise ValueError("estimation depth n must satisfy 0 <= n < tree depth")
    both, new, old = classify_cells(tree, n)
    xb = sample.lookup(both)
    fit_bn = _regress(xb, sample.lookup(2 * both), "both_alive")
    fit_bo = _regress(xb, sample.lookup(2 * both + 1), "both_alive")
    fit_n = _regress(sample.lookup(new), sample.lookup(2 * new), "new_only")
    fit_o = _regress(sample.lookup(old), sample.lookup(2 * old + 1), "old_only")
    return ThetaEstimate(n, fit_bn, fit_bo, fit_n, fit_o)


def estimation_error(estimate: ThetaEstimate, params: BarParams) -> float:
    """Euclidean distance between the eight estimates and the true vector."""
    diff = estimate.as_vector() - params.as_vector()
    return float(math.sqrt(float(diff @ diff)))


@dataclass(frozen=True)
class RegressionFunctionals:
    """Diagnostic averages over generations 0..n (both-alive support).

    g1/g2 are the normal-equation residual functionals of the (alpha0, beta0)
    regression (exactly zero mean under the true parameters); h1/h2 are the
    design moments; b_n is the scaled design variance
    (|T_n^{both}| / |T_n|) * bar(h2) - bar(h1)^2, whose population target is
    p10^2 (mu2 - mu1^2).
    """

    n: int
    g1_bar: float
    g2_bar: float
    h1_bar: float
    h2_bar: float
    b_n: float
    n_cells: int
    n_both: int


def regression_functionals(sample: PopulationSample, n: int,
                           params: BarParams) -> RegressionFunctionals:
    tree = sample.tree
    if n < 0 or n >= tree.max_depth:
        raise ValueError("functional depth n must satisfy 0 <= n < tree depth")
    a0, b0 = params.alpha0, params.beta0
    # generous sup bounds from the observed values; only finiteness matters here
    vmax = max(1.0, max(float(np.max(np.abs(sample.values_at(r))))
                        for r in range(tree.max_depth + 1)
                        if sample.values_at(r).size))
    gbound = vmax * vmax + vmax * (abs(a0) * vmax + abs(b0))
    g1 = TriangleFunction(lambda x, y, z: x * y - x * (a0 * x + b0), gbound, MASK_BOTH)
    g2 = TriangleFunction(lambda x, y, z: y - a0 * x - b0,
                          vmax * (1 + abs(a0)) + abs(b0), MASK_BOTH)
    h1 = TriangleFunction(lambda x, y, z: x, vmax, MASK_BOTH)
    h2 = TriangleFunction(lambda x, y, z: x * x, vmax * vmax, MASK_BOTH)
    labels = tree_nodes(tree, n)
    both, _, _ = classify_cells(tree, n)
    g1b = bar_avg(sample, labels, g1)
    g2b = bar_avg(sample, labels, g2)
    h1b = bar_avg(sample, labels, h1)
    h2b = bar_avg(sample, labels, h2)
    b_n = (both.size / labels.size) * h2b - h1b * h1b
    return RegressionFunctionals(n, g1b, g2b, h1b, h2b, b_n, labels.size, both.size)


def b_n_target(law: OffspringLaw, params: BarParams, noise) -> float:
    """Population limit p10^2 (mu2 - mu1^2) of the design variance b_n."""
    mu1, mu2 = stationary_moments(law, params, noise)
    return law.p10**2 * (mu2 - mu1 * mu1)
