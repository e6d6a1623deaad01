"""Monte Carlo deviation experiments over the tree process.

Every experiment runs n_rep independent replicates per grid depth; replicate
i at grid slot g uses the random stream (seed, DOMAIN_REPLICATE, g, i), so
exceedance counts are bit-for-bit reproducible for a fixed (plan, seed) and
independent of how replicates are partitioned across worker processes.
Within one grid depth the replicates (and their statistics) are shared by the
whole delta grid.

Modes:

* tilde:        P(normalized average of f over G_r/T_r > delta); the
                centered variant subtracts mu_f * w_proxy first;
* conditional:  P(plain average of f - mu_f > delta | W proxy >= a);
* theta:        P(||coefficient estimate - truth|| > delta | W proxy >= a),
                degenerate estimates counted as exceedances;
* gw_lln:       P(| |G_r|/m^r - W proxy | > delta).

Long-run means mu_f are estimated once per experiment from the lineage chain
(stream (seed, DOMAIN_MU)), frozen into the plan and echoed in reports.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import beta as _beta

from .bar import BarParams, InitialLaw, NoiseSpec, simulate_population, state_bound
from .chain import estimate_mu_f
from .estimator import ClassFit, lse
from .offspring import OffspringLaw
from .rng import DOMAIN_MU, derive_rng, replicate_rng
from .stats import CellFunction, SetKind, bar_avg, labels_of_set, tilde_avg, w_proxy
from .tree import sample_tree

__all__ = [
    "StatFunction",
    "ExperimentPlan",
    "DeviationEstimate",
    "NoMass",
    "FitResult",
    "ExcludedPoint",
    "clopper_pearson",
    "resolve_mu",
    "mc_deviation",
    "mc_conditional_deviation",
    "mc_theta_deviation",
    "mc_gw_lln",
    "decay_fit",
]

MODES = ("tilde", "conditional", "theta", "gw_lln")
W_DEPTH_MARGIN = 6  # default proxy depth r + 6


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for k successes out of n."""
    if not (0 <= k <= n) or n <= 0:
        raise ValueError("need 0 <= k <= n with n >= 1")
    tail = (1.0 - level) / 2.0
    lo = 0.0 if k == 0 else float(_beta.ppf(tail, k, n - k + 1))
    hi = 1.0 if k == n else float(_beta.ppf(1.0 - tail, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class StatFunction:
    """Declarative single-cell function, picklable and echoed in reports.

    base(x) is identity, square, or scale*x + shift; subtract_mu recenters by
    the frozen long-run mean mu_value (filled in by resolve_mu).
    """

    kind: str = "identity"
    scale: float = 1.0
    shift: float = 0.0
    subtract_mu: bool = False
    mu_value: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "square", "affine"):
            raise ValueError("f kind must be identity, square or affine")

    def base_callable(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.kind == "identity":
            return lambda x: x
        if self.kind == "square":
            return lambda x: x * x
        return lambda x: self.scale * x + self.shift

    def base_bound(self, value_bound: float) -> float:
        if self.kind == "identity":
            return value_bound
        if self.kind == "square":
            return value_bound * value_bound
        return abs(self.scale) * value_bound + abs(self.shift)

    def build(self, value_bound: float) -> CellFunction:
        base = self.base_callable()
        if not self.subtract_mu:
            return CellFunction(base, self.base_bound(value_bound))
        if self.mu_value is None:
            raise ValueError("subtract_mu requires a resolved mu_value (see resolve_mu)")
        mu = self.mu_value
        return CellFunction(lambda x: base(x) - mu, self.base_bound(value_bound) + abs(mu))


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything a deviation experiment needs; safe to ship to workers."""

    law: OffspringLaw
    params: BarParams
    noise: NoiseSpec
    init: InitialLaw
    mode: str
    deltas: tuple[float, ...]
    grid: tuple[int, ...]          # depths r (estimation depths n for theta)
    n_rep: int
    seed: int
    set_kind: SetKind = SetKind.GENERATION
    f: StatFunction | None = None
    centered: bool = False
    a: float = 1.0
    w_depth: int | None = None
    mu_burn_in: int = 1000
    mu_length: int = 1_000_000
    mu_chains: int = 100

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.deltas or any(d <= 0 for d in self.deltas):
            raise ValueError("deltas must be a non-empty tuple of positive reals")
        if not self.grid or any(g < 0 for g in self.grid):
            raise ValueError("grid must be a non-empty tuple of depths >= 0")
        if self.n_rep < 1:
            raise ValueError("n_rep must be >= 1")
        if self.mode in ("tilde", "conditional") and self.f is None:
            raise ValueError(f"mode {self.mode} needs a statistic function f")
        if self.mode in ("conditional", "theta"):
            if not self.law.is_h3:
                raise ValueError("conditioning on the growth limit requires (H3)")
            if self.a <= 0:
                raise ValueError("conditioning level a must be > 0")
        if self.law.mean <= 1.0:
            raise ValueError("experiments require a supercritical law (m > 1)")
        if self.w_depth is not None:
            need = max(self.grid) + (1 if self.mode == "theta" else 0)
            if self.w_depth < need:
                raise ValueError("w_depth must reach the deepest statistic depth")

    def proxy_depth(self, g: int) -> int:
        return self.w_depth if self.w_depth is not None else g + W_DEPTH_MARGIN

    def needs_mu(self) -> bool:
        if self.mode == "conditional":
            return True
        if self.f is not None and self.f.subtract_mu:
            return True
        return self.mode == "tilde" and self.centered

    def mu_of_f(self) -> float:
        """Long-run mean of the effective f (0 once recentring is folded in)."""
        if self.f is None:
            return 0.0
        if self.f.subtract_mu:
            return 0.0
        if self.f.mu_value is None:
            raise ValueError("mu_value unresolved; call resolve_mu first")
        return self.f.mu_value


@dataclass(frozen=True)
class DeviationEstimate:
    """One Monte Carlo deviation probability with its exact binomial interval."""

    delta: float
    r: int
    n_rep: int
    n_kept: int
    k_exceed: int
    p_hat: float
    ci_low: float
    ci_high: float
    seed: int


@dataclass(frozen=True)
class NoMass:
    """The conditioning event was never hit at this depth."""

    r: int
    n_rep: int
    seed: int


def resolve_mu(plan: ExperimentPlan) -> tuple[ExperimentPlan, dict]:
    """Freeze the long-run mean of f into the plan (no-op when not needed)."""
    if not plan.needs_mu() or plan.f is None or plan.f.mu_value is not None:
        return plan, {}
    rng = derive_rng(plan.seed, DOMAIN_MU)
    mu, se = estimate_mu_f(plan.f.base_callable(), plan.law, plan.params, plan.noise,
                           plan.init, rng, burn_in=plan.mu_burn_in,
                           length=plan.mu_length, n_chains=plan.mu_chains)
    new_plan = replace(plan, f=replace(plan.f, mu_value=mu))
    return new_plan, {"mu_hat": mu, "mu_se": se,
                      "mu_length": plan.mu_length, "mu_burn_in": plan.mu_burn_in,
                      "mu_chains": plan.mu_chains}


# -- replicate workers ----------------------------------------------------------


def _supported_error(est, params: BarParams, law) -> float:
    """Estimation error over the classes the law can actually produce.

    A class with offspring probability 0 never appears in any sample, so its
    two components are unidentifiable and are left out of the error. A
    supported class that came back degenerate makes the replicate an
    exceedance (error +inf).
    """
    pairs = []
    if law.p10 > 0.0:
        pairs.append((est.both_new, params.alpha0, params.beta0))
        pairs.append((est.both_old, params.alpha1, params.beta1))
    if law.p0 > 0.0:
        pairs.append((est.new_only, params.alpha0p, params.beta0p))
    if law.p1 > 0.0:
        pairs.append((est.old_only, params.alpha1p, params.beta1p))
    sq = 0.0
    for fit, slope, intercept in pairs:
        if not isinstance(fit, ClassFit):
            return float("inf")
        sq += (fit.slope - slope) ** 2 + (fit.intercept - intercept) ** 2
    return math.sqrt(sq)


def _replicate_arrays(plan: ExperimentPlan, gi: int, lo: int, hi: int
                      ) -> tuple[np.ndarray, np.ndarray]:
    """(kept, stat) for replicates lo..hi-1 at grid slot gi."""
    g = plan.grid[gi]
    w = plan.proxy_depth(g)
    n = hi - lo
    kept = np.ones(n, dtype=bool)
    stat = np.empty(n, dtype=np.float64)
    cellf = None
    if plan.f is not None:
        cellf = plan.f.build(state_bound(plan.params, plan.noise, plan.init))
    mu = plan.mu_of_f() if plan.needs_mu() else 0.0
    for j in range(n):
        rng = replicate_rng(plan.seed, gi, lo + j)
        if plan.mode == "tilde":
            depth = max(g, w) if plan.centered else g
            tree = sample_tree(plan.law, depth, rng)
            sample = simulate_population(tree, plan.params, plan.noise, plan.init, rng)
            s = tilde_avg(sample, cellf, plan.set_kind, g)
            if plan.centered:
                s -= mu * w_proxy(tree, w)
            stat[j] = s
        elif plan.mode == "conditional":
            tree = sample_tree(plan.law, max(g, w), rng)
            if w_proxy(tree, w) < plan.a:
                kept[j] = False
                stat[j] = np.nan
                continue
            sample = simulate_population(tree, plan.params, plan.noise, plan.init, rng)
            labels = labels_of_set(tree, plan.set_kind, g)
            stat[j] = bar_avg(sample, labels, cellf) - mu
        elif plan.mode == "theta":
            tree = sample_tree(plan.law, max(g + 1, w), rng)
            if w_proxy(tree, w) < plan.a:
                kept[j] = False
                stat[j] = np.nan
                continue
            sample = simulate_population(tree, plan.params, plan.noise, plan.init, rng)
            stat[j] = _supported_error(lse(sample, g), plan.params, plan.law)
        else:  # gw_lln
            tree = sample_tree(plan.law, w, rng)
            stat[j] = abs(w_proxy(tree, g) - w_proxy(tree, w))
    return kept, stat


def _run_task(args) -> tuple[int, int, np.ndarray, np.ndarray]:
    plan, gi, lo, hi = args
    kept, stat = _replicate_arrays(plan, gi, lo, hi)
    return gi, lo, kept, stat


def _tasks(plan: ExperimentPlan, jobs: int):
    chunk = plan.n_rep if jobs <= 1 else max(256, -(-plan.n_rep // (jobs * 4)))
    for gi in range(len(plan.grid)):
        for lo in range(0, plan.n_rep, chunk):
            yield plan, gi, lo, min(lo + chunk, plan.n_rep)


def _run_experiment(plan: ExperimentPlan, jobs: int = 1
                    ) -> list[DeviationEstimate | NoMass]:
    tasks = list(_tasks(plan, jobs))
    if jobs <= 1:
        parts = [_run_task(t) for t in tasks]
    else:
        with multiprocessing.get_context("fork").Pool(jobs) as pool:
            parts = pool.map(_run_task, tasks)
    # deterministic merge order, independent of pool scheduling
    parts.sort(key=lambda p: (p[0], p[1]))
    results: list[DeviationEstimate | NoMass] = []
    for gi, g in enumerate(plan.grid):
        kept = np.concatenate([p[2] for p in parts if p[0] == gi])
        stat = np.concatenate([p[3] for p in parts if p[0] == gi])
        n_kept = int(kept.sum())
        if plan.mode in ("conditional", "theta") and n_kept == 0:
            results.append(NoMass(g, plan.n_rep, plan.seed))
            continue
        ks = stat[kept]
        for d in plan.deltas:
            k = int(np.count_nonzero(ks > d))
            lo_ci, hi_ci = clopper_pearson(k, n_kept)
            results.append(DeviationEstimate(
                delta=d, r=g, n_rep=plan.n_rep, n_kept=n_kept, k_exceed=k,
                p_hat=k / n_kept, ci_low=lo_ci, ci_high=hi_ci, seed=plan.seed))
    return results


def _require_mode(plan: ExperimentPlan, mode: str) -> None:
    if plan.mode != mode:
        raise ValueError(f"plan mode is {plan.mode!r}, expected {mode!r}")


def mc_deviation(plan: ExperimentPlan, jobs: int = 1) -> list[DeviationEstimate]:
    """Normalized-average deviation probabilities over the depth grid."""
    _require_mode(plan, "tilde")
    return _run_experiment(plan, jobs)  # type: ignore[return-value]


def mc_conditional_deviation(plan: ExperimentPlan, jobs: int = 1
                             ) -> list[DeviationEstimate | NoMass]:
    """Plain-average deviations conditioned on the growth-limit proxy event."""
    _require_mode(plan, "conditional")
    return _run_experiment(plan, jobs)


def mc_theta_deviation(plan: ExperimentPlan, jobs: int = 1
                       ) -> list[DeviationEstimate | NoMass]:
    """Coefficient-estimator deviations conditioned on the growth proxy event."""
    _require_mode(plan, "theta")
    return _run_experiment(plan, jobs)


def mc_gw_lln(plan: ExperimentPlan, jobs: int = 1) -> list[DeviationEstimate]:
    """Deviations of the normalized generation size from the growth proxy."""
    _require_mode(plan, "gw_lln")
    return _run_experiment(plan, jobs)


# -- decay fitting ---------------------------------------------------------------


@dataclass(frozen=True)
class ExcludedPoint:
    """Zero-exceedance cell: the point estimate is 0, only an upper bound stands."""

    r: int
    n_kept: int
    upper95: float  # one-sided 95% Clopper-Pearson upper bound 1 - 0.05^(1/n)


@dataclass(frozen=True)
class FitResult:
    transform: str
    slope: float
    intercept: float
    residual: float
    n_used: int
    used_r: tuple[int, ...]
    excluded: tuple[ExcludedPoint, ...]


def decay_fit(estimates: Sequence[DeviationEstimate], transform: str = "vs_r",
              m: float | None = None, set_kind: SetKind | None = None,
              min_points: int = 3) -> FitResult:
    """Least-squares slope of -log p_hat against r (or against h_r).

    All estimates must share one delta. Zero-exceedance points cannot enter
    the log fit; they are excluded and reported with their one-sided 95%
    upper bounds. At least ``min_points`` usable points are required.
    """
    if transform not in ("vs_r", "vs_h_r"):
        raise ValueError("transform must be 'vs_r' or 'vs_h_r'")
    if not estimates:
        raise ValueError("no estimates to fit")
    if any(isinstance(e, NoMass) for e in estimates):
        raise ValueError("no-mass results cannot be fitted; filter them out")
    deltas = {e.delta for e in estimates}
    if len(deltas) != 1:
        raise ValueError("decay_fit needs estimates sharing a single delta")
    if transform == "vs_h_r" and (m is None or set_kind is None):
        raise ValueError("transform vs_h_r needs m and set_kind")
    used, excluded = [], []
    for e in sorted(estimates, key=lambda e: e.r):
        if e.k_exceed > 0 and e.n_kept > 0:
            used.append(e)
        else:
            excluded.append(ExcludedPoint(e.r, e.n_kept,
                                          1.0 - 0.05 ** (1.0 / max(e.n_kept, 1))))
    if len(used) < min_points:
        raise ValueError(f"only {len(used)} points with positive exceedance "
                         f"counts; need {min_points}")
    from .bounds import h_r as _h_r  # local import: bounds depends on stats only
    if transform == "vs_r":
        x = np.asarray([e.r for e in used], dtype=np.float64)
    else:
        x = np.asarray([_h_r(m, e.r, set_kind) for e in used])
    y = np.asarray([-math.log(e.p_hat) for e in used])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sum((y - (slope * x + intercept)) ** 2))
    return FitResult(transform, float(slope), float(intercept), resid,
                     len(used), tuple(e.r for e in used), tuple(excluded))
