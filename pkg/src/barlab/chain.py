"""The embedded single-lineage chain of the bifurcating autoregression.

Following one daughter chosen uniformly among the alive ones turns the tree
process into a random-coefficient autoregression Y_k = a Y_{k-1} + b' + s e:
the coefficient triple (a, b', s) is drawn from four atoms,

    (alpha0,  beta0,  sigma)   with weight p10 / m,
    (alpha1,  beta1,  sigma)   with weight p10 / m,
    (alpha0p, beta0p, sigma0)  with weight p0  / m,
    (alpha1p, beta1p, sigma1)  with weight p1  / m,

and e is a standard noise unit (truncated normal, or +-1 in two_point mode,
or 0 when noiseless). The weights always sum to one since m = 2 p10 + p0 + p1.

The chain contracts at rate at most alpha = max |slope| < 1 (uniform
geometric ergodicity, assumption (H1)); its stationary first and second
moments have closed forms in the mixed coefficients, see stationary_moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .bar import BarParams, InitialLaw, NoiseSpec
from .offspring import OffspringLaw

__all__ = [
    "CoefficientLaw",
    "MomentBars",
    "GapCurve",
    "RateFit",
    "truncated_second_moment",
    "draw_coefficients",
    "chain_step",
    "simulate_chain",
    "stationary_moments",
    "ergodicity_alpha",
    "estimate_mu_f",
    "empirical_Qk_gap",
    "fit_geometric_rate",
]


def truncated_second_moment(k: float) -> float:
    """E[Z^2] for a standard normal conditioned on |Z| <= k (closed form)."""
    if k <= 0:
        raise ValueError("truncation width must be > 0")
    phi = math.exp(-0.5 * k * k) / math.sqrt(2.0 * math.pi)
    mass = 2.0 * float(ndtr(k)) - 1.0
    return 1.0 - 2.0 * k * phi / mass


@dataclass(frozen=True)
class CoefficientLaw:
    """Atoms and weights of the random coefficient triple (a, b', s)."""

    a: tuple[float, float, float, float]
    b: tuple[float, float, float, float]
    s: tuple[float, float, float, float]
    weights: tuple[float, float, float, float]

    @classmethod
    def from_model(cls, law: OffspringLaw, params: BarParams, noise: NoiseSpec) -> "CoefficientLaw":
        m = law.mean
        if m <= 0:
            raise ValueError("offspring law has mean 0: no alive lineage to follow")
        w = (law.p10 / m, law.p10 / m, law.p0 / m, law.p1 / m)
        return cls(
            a=(params.alpha0, params.alpha1, params.alpha0p, params.alpha1p),
            b=(params.beta0, params.beta1, params.beta0p, params.beta1p),
            s=(noise.sigma, noise.sigma, noise.sigma0, noise.sigma1),
            weights=w,
        )

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def draw_coefficients(claw: CoefficientLaw, rng: np.random.Generator) -> tuple[float, float, float]:
    """One coefficient triple (a, b', s); consumes a single uniform."""
    u = rng.random()
    cum = 0.0
    for i, w in enumerate(claw.weights):
        cum += w
        if u < cum:
            return claw.a[i], claw.b[i], claw.s[i]
    return claw.a[3], claw.b[3], claw.s[3]


def chain_step(y: float, coeffs: tuple[float, float, float], e: float) -> float:
    """One lineage step: a*y + b' + s*e."""
    a, b, s = coeffs
    return a * y + b + s * e


class _NoiseUnit:
    """Standard noise units matching the NoiseSpec channel shape."""

    def __init__(self, noise: NoiseSpec) -> None:
        self.noise = noise
        if noise.kind == "gaussian":
            self.lo = float(ndtr(-noise.trunc_k))
            self.hi = float(ndtr(noise.trunc_k))

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.noise.noiseless:
            return np.zeros(n)
        u = rng.random(n)
        if self.noise.kind == "two_point":
            return np.where(u < 0.5, -1.0, 1.0)
        # inverse-CDF truncation: exact, one uniform per draw
        return ndtri(self.lo + u * (self.hi - self.lo))

    @property
    def second_moment(self) -> float:
        if self.noise.noiseless:
            return 0.0
        if self.noise.kind == "two_point":
            return 1.0
        return truncated_second_moment(self.noise.trunc_k)


def simulate_chain(law: OffspringLaw, params: BarParams, noise: NoiseSpec,
                   n_steps: int, n_chains: int, init: InitialLaw,
                   rng: np.random.Generator) -> np.ndarray:
    """(n_chains, n_steps+1) array of lineage paths, vectorized across chains.

    Per step the draw order is: one uniform per chain for the atom, then one
    noise unit per chain.
    """
    claw = CoefficientLaw.from_model(law, params, noise)
    a = np.asarray(claw.a)
    b = np.asarray(claw.b)
    s = np.asarray(claw.s)
    cum = np.cumsum(claw.weights)
    cum[-1] = max(cum[-1], 1.0)
    unit = _NoiseUnit(noise)
    out = np.empty((n_chains, n_steps + 1))
    if init.kind == "point":
        y = np.full(n_chains, init.value)
    else:
        y = init.low + (init.high - init.low) * rng.random(n_chains)
    out[:, 0] = y
    for k in range(1, n_steps + 1):
        idx = np.searchsorted(cum, rng.random(n_chains), side="right")
        e = unit.draw(n_chains, rng)
        y = a[idx] * y + b[idx] + s[idx] * e
        out[:, k] = y
    return out


@dataclass(frozen=True)
class MomentBars:
    """Mixed moments of the coefficient pair (a, b), b = b' + s*e.

    abar2 is E[a^2], bbar2 is E[b^2] = E[b'^2] + sbar2, and sbar2 is E[s^2]
    times the exact second moment of the standard noise unit (truncation
    shrinks it below 1), so the closed-form moments match simulation.
    """

    abar: float
    abar2: float
    bbar: float
    bbar2: float
    abbar: float
    sbar2: float

    @classmethod
    def from_model(cls, law: OffspringLaw, params: BarParams, noise: NoiseSpec) -> "MomentBars":
        claw = CoefficientLaw.from_model(law, params, noise)
        w = np.asarray(claw.weights)
        a = np.asarray(claw.a)
        b = np.asarray(claw.b)
        s = np.asarray(claw.s)
        m2 = _NoiseUnit(noise).second_moment
        sbar2 = float(w @ (s * s)) * m2
        return cls(
            abar=float(w @ a),
            abar2=float(w @ (a * a)),
            bbar=float(w @ b),
            bbar2=float(w @ (b * b)) + sbar2,
            abbar=float(w @ (a * b)),
            sbar2=sbar2,
        )


def stationary_moments(law: OffspringLaw, params: BarParams, noise: NoiseSpec) -> tuple[float, float]:
    """Stationary (mu1, mu2) of the lineage chain.

    mu1 = bbar / (1 - abar). mu2 solves the fixed point of Z = a Z' + b with
    Z' independent of (a, b): mu2 = (2 abbar mu1 + bbar2) / (1 - abar2).
    (A variant with an extra E[a^2] term in the numerator fails that
    fixed-point identity; the long-run chain average is the arbiter, see
    the tests.)
    """
    bars = MomentBars.from_model(law, params, noise)
    if bars.abar2 >= 1.0:
        raise ValueError("second-moment contraction requires E[a^2] < 1")
    mu1 = bars.bbar / (1.0 - bars.abar)
    mu2 = (2.0 * bars.abbar * mu1 + bars.bbar2) / (1.0 - bars.abar2)
    return mu1, mu2


def ergodicity_alpha(params: BarParams) -> float:
    """Contraction rate alpha = max |slope| of the four channels."""
    return max(abs(a) for a in params.slopes)


def estimate_mu_f(f_base, law: OffspringLaw, params: BarParams, noise: NoiseSpec,
                  init: InitialLaw, rng: np.random.Generator,
                  burn_in: int = 1000, length: int = 1_000_000,
                  n_chains: int = 100) -> tuple[float, float]:
    """Long-run estimate of the stationary mean of f_base along the lineage.

    Runs ``n_chains`` parallel chains for burn_in + ceil(length/n_chains)
    steps and averages f over the post-burn-in draws. Returns (mu_hat, se)
    with the standard error computed across per-chain means (chains are
    independent).
    """
    if burn_in < 0 or length <= 0 or n_chains <= 0:
        raise ValueError("burn_in >= 0, length >= 1, n_chains >= 1 required")
    per_chain = max(1, -(-length // n_chains))
    claw = CoefficientLaw.from_model(law, params, noise)
    a = np.asarray(claw.a)
    b = np.asarray(claw.b)
    s = np.asarray(claw.s)
    cum = np.cumsum(claw.weights)
    cum[-1] = max(cum[-1], 1.0)
    unit = _NoiseUnit(noise)
    if init.kind == "point":
        y = np.full(n_chains, init.value)
    else:
        y = init.low + (init.high - init.low) * rng.random(n_chains)
    sums = np.zeros(n_chains)
    for k in range(burn_in + per_chain):
        idx = np.searchsorted(cum, rng.random(n_chains), side="right")
        e = unit.draw(n_chains, rng)
        y = a[idx] * y + b[idx] + s[idx] * e
        if k >= burn_in:
            sums += np.asarray(f_base(y), dtype=np.float64)
    means = sums / per_chain
    mu = float(np.mean(means))
    se = float(np.std(means, ddof=1) / math.sqrt(n_chains)) if n_chains > 1 else math.inf
    return mu, se


@dataclass(frozen=True)
class GapCurve:
    """max-over-starts distance of the k-step mean of f from its long-run mean."""

    ks: tuple[int, ...]
    gaps: tuple[float, ...]
    ses: tuple[float, ...]   # per-k worst-case standard error of the mean
    floor: float             # fit threshold: points at or below it sit in MC noise
    mu_hat: float

    def as_rows(self):
        return list(zip(self.ks, self.gaps, self.ses))


def empirical_Qk_gap(f, x_grid, k_max: int, n_rep: int,
                     law: OffspringLaw, params: BarParams, noise: NoiseSpec,
                     rng: np.random.Generator, mu_hat: float | None = None,
                     mu_se: float = 0.0, init: InitialLaw | None = None,
                     burn_in: int = 1000, length: int = 1_000_000,
                     n_chains: int = 100) -> GapCurve:
    """Empirical k-step mixing gap max_x |mean f(Y_k^x) - mu_f| for k <= k_max.

    n_rep independent chains per grid start. When mu_hat is not supplied it
    is first estimated by estimate_mu_f (same rng stream, drawn before the
    grid chains). The floor is 4x the worst per-k standard error plus the mu
    estimate's error; gap points at or below the floor are indistinguishable
    from Monte Carlo noise and are skipped by fit_geometric_rate.
    """
    x_grid = np.asarray(x_grid, dtype=np.float64)
    if x_grid.size == 0 or k_max < 1 or n_rep < 2:
        raise ValueError("need a non-empty grid, k_max >= 1 and n_rep >= 2")
    if init is None:
        init = InitialLaw()
    if mu_hat is None:
        mu_hat, mu_se = estimate_mu_f(f, law, params, noise, init, rng,
                                      burn_in=burn_in, length=length, n_chains=n_chains)
    claw = CoefficientLaw.from_model(law, params, noise)
    a = np.asarray(claw.a)
    b = np.asarray(claw.b)
    s = np.asarray(claw.s)
    cum = np.cumsum(claw.weights)
    cum[-1] = max(cum[-1], 1.0)
    unit = _NoiseUnit(noise)
    n = x_grid.size * n_rep
    y = np.repeat(x_grid, n_rep)
    ks, gaps, ses = [], [], []

    def record(k: int, y: np.ndarray) -> None:
        fv = np.asarray(f(y), dtype=np.float64).reshape(x_grid.size, n_rep)
        means = fv.mean(axis=1)
        se = float((fv.std(axis=1, ddof=1) / math.sqrt(n_rep)).max())
        ks.append(k)
        gaps.append(float(np.max(np.abs(means - mu_hat))))
        ses.append(se)

    record(0, y)
    for k in range(1, k_max + 1):
        idx = np.searchsorted(cum, rng.random(n), side="right")
        e = unit.draw(n, rng)
        y = a[idx] * y + b[idx] + s[idx] * e
        record(k, y)
    floor = 4.0 * (max(ses) + mu_se)
    return GapCurve(tuple(ks), tuple(gaps), tuple(ses), floor, mu_hat)


@dataclass(frozen=True)
class RateFit:
    rate: float            # per-step geometric rate exp(slope)
    slope: float           # least-squares slope of log gap vs k
    intercept: float
    residual: float        # sum of squared residuals
    n_used: int
    floor: float


def fit_geometric_rate(curve: GapCurve, min_points: int = 3) -> RateFit:
    """Least-squares geometric decay rate of the gap curve above its floor."""
    ks = np.asarray(curve.ks, dtype=np.float64)
    gaps = np.asarray(curve.gaps, dtype=np.float64)
    keep = gaps > max(curve.floor, 0.0)
    if int(keep.sum()) < min_points:
        raise ValueError(
            f"only {int(keep.sum())} gap points above the noise floor; need {min_points}")
    x, y = ks[keep], np.log(gaps[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sum((y - (slope * x + intercept)) ** 2))
    return RateFit(float(math.exp(slope)), float(slope), float(intercept),
                   resid, int(keep.sum()), curve.floor)
