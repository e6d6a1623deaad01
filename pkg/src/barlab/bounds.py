"""Closed-form deviation bounds for tree averages and the coefficient estimator.

The bound shape is decided by where m * alpha sits relative to 1 and sqrt(2)
(m: mean alive offspring, alpha: lineage contraction rate). All bounds assume
(H2): m > sqrt(2). The generic decay scale is h_r = (m^2/2)^r over one
generation and (m^2/2)^{r+1} over the whole sub-tree.

Constants are existential in the underlying inequalities; here they are
explicit inputs (BoundConstants, all defaulting to 1) plus a calibration
helper that pins the leading constant to empirical data at a pivot depth.
Bounds in the three regimes with m*alpha > 1 only hold beyond the threshold
r0 = log(delta/c0)/log(alpha) - k0; below it they return None (inapplicable).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .offspring import SQRT2, expected_sizes
from .stats import SetKind

__all__ = [
    "Regime",
    "BoundConstants",
    "classify_regime",
    "h_r",
    "r0_threshold",
    "bound_centered",
    "a_r_term",
    "bound_uncentered",
    "bound_conditional",
    "bound_theta",
    "calibrate_cprime",
]

REGIME_REL_TOL = 1e-9


class Regime(enum.Enum):
    """Position of m * alpha against the 1 and sqrt(2) boundaries."""

    SUB_UNIT = "sub_unit"
    UNIT_BOUNDARY = "unit_boundary"
    INTERMEDIATE = "intermediate"
    SQRT2_BOUNDARY = "sqrt2_boundary"
    SUPER_SQRT2 = "super_sqrt2"


@dataclass(frozen=True)
class BoundConstants:
    """Explicit constants of the deviation bounds; every default is 1.

    c is the geometric-ergodicity prefactor of (H1); c_prime multiplies the
    quadratic decay exponents, c_double_prime the linear prefactor exponents;
    c0 and k0 shape the applicability threshold r0; c1 constrains gamma, c2
    and c3 are the estimator-bound prefactors. p and q are the exponents of
    the estimator-bound argument gamma^q * delta^p * b; a, b, gamma are the
    conditioning parameters.
    """

    c: float = 1.0
    c_prime: float = 1.0
    c_double_prime: float = 1.0
    c0: float = 1.0
    k0: int = 0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    p: float = 1.0
    q: float = 1.0
    a: float = 1.0
    b: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        for name in ("c", "c_prime", "c_double_prime", "c0", "c1", "c2", "c3",
                     "a", "b", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"constant {name} must be > 0")
        if self.k0 not in (0, 1):
            raise ValueError("k0 must be 0 or 1")
        if self.p not in (0.5, 1.0):
            raise ValueError("exponent p must be 1/2 or 1")
        if self.q not in (0.0, 0.5, 1.0):
            raise ValueError("exponent q must be 0, 1/2 or 1")


def classify_regime(m: float, alpha: float) -> Regime:
    """Five-way split of m * alpha; boundaries at relative tolerance 1e-9."""
    if not m > SQRT2:
        raise ValueError(f"(H2) violated: bounds require m > sqrt(2), got m = {m}")
    if not (0.0 <= alpha < 1.0):
        raise ValueError("contraction rate alpha must lie in [0, 1)")
    ma = m * alpha
    if math.isclose(ma, 1.0, rel_tol=REGIME_REL_TOL):
        return Regime.UNIT_BOUNDARY
    if math.isclose(ma, SQRT2, rel_tol=REGIME_REL_TOL):
        return Regime.SQRT2_BOUNDARY
    if ma < 1.0:
        return Regime.SUB_UNIT
    if ma < SQRT2:
        return Regime.INTERMEDIATE
    return Regime.SUPER_SQRT2


def h_r(m: float, r: int, set_kind: SetKind) -> float:
    """Decay scale (m^2/2)^r for one generation, (m^2/2)^{r+1} for the sub-tree."""
    if r < 0:
        raise ValueError("depth r must be >= 0")
    e = r if set_kind is SetKind.GENERATION else r + 1
    return (m * m / 2.0) ** e


def r0_threshold(delta: float, alpha: float, constants: BoundConstants) -> float:
    """Applicability threshold log(delta/c0)/log(alpha) - k0 (regimes beyond 1)."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if not (0.0 < alpha < 1.0):
        raise ValueError("threshold needs 0 < alpha < 1")
    return math.log(delta / constants.c0) / math.log(alpha) - constants.k0


def bound_centered(delta: float, r: int, m: float, alpha: float,
                   set_kind: SetKind, constants: BoundConstants) -> float | None:
    """Deviation bound for the normalized average of a centered function.

    Returns None where the regime's bound does not apply (r <= r0, or r = 0
    on the sqrt(2) boundary and above, where the forms need r >= 1).
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if r < 0:
        raise ValueError("depth r must be >= 0")
    regime = classify_regime(m, alpha)
    cq = constants.c_prime          # quadratic decay
    cl = constants.c_double_prime   # linear prefactor
    h = h_r(m, r, set_kind)
    if regime is Regime.SUB_UNIT:
        return math.exp(cl * delta - cq * delta * delta * h)
    if regime is Regime.UNIT_BOUNDARY:
        lin = delta if set_kind is SetKind.GENERATION else delta * (r + 1)
        return math.exp(cl * lin - cq * delta * delta * h)
    if r <= r0_threshold(delta, alpha, constants):
        return None
    if regime is Regime.INTERMEDIATE:
        return math.exp(-cq * delta * delta * h)
    if r < 1:
        return None
    if regime is Regime.SQRT2_BOUNDARY:
        return math.exp(-cq * delta * delta * h / r)
    return math.exp(-cq * delta * delta / alpha ** (2 * r))


def a_r_term(delta: float, r: int, m: float, set_kind: SetKind,
             constants: BoundConstants) -> float:
    """Non-extinction correction term (standing assumption (H3) on the law).

    Generation form: c' exp(-c'' delta^{2/3} m^{r/3}); sub-tree form:
    exp(c' delta^{2/3}) exp(-c'' delta^{2/3} (t_r/(r+1)^2)^{1/3}) with t_r the
    expected sub-tree size. The sub-tree prefactor grows with delta, so that
    form need not shrink as delta grows when the decay factor is weak.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if r < 0:
        raise ValueError("depth r must be >= 0")
    if m <= 1:
        raise ValueError("mean offspring m must exceed 1")
    d23 = delta ** (2.0 / 3.0)
    if set_kind is SetKind.GENERATION:
        return constants.c_prime * math.exp(-constants.c_double_prime * d23 * m ** (r / 3.0))
    _, t_r = expected_sizes(m, r)
    scale = (t_r / (r + 1) ** 2) ** (1.0 / 3.0)
    return math.exp(constants.c_prime * d23) * math.exp(-constants.c_double_prime * d23 * scale)


def bound_uncentered(delta: float, r: int, m: float, alpha: float,
                     set_kind: SetKind, constants: BoundConstants) -> float | None:
    """Centered bound plus the non-extinction term (general, uncentered f)."""
    core = bound_centered(delta, r, m, alpha, set_kind, constants)
    if core is None:
        return None
    return core + a_r_term(delta, r, m, set_kind, constants)


def bound_conditional(delta: float, r: int, m: float, alpha: float,
                      set_kind: SetKind, constants: BoundConstants) -> float | None:
    """Bound for the plain average conditioned on the growth limit event W >= a.

    Valid for b < a / (delta + 1); the deviation argument is rescaled to
    delta * b throughout (threshold included).
    """
    a, b = constants.a, constants.b
    if not b < a / (delta + 1.0):
        raise ValueError(
            f"conditional bound requires b < a/(delta+1): b={b}, a/(delta+1)={a / (delta + 1.0)}")
    eff = delta * b
    core = bound_centered(eff, r, m, alpha, set_kind, constants)
    if core is None:
        return None
    return core + a_r_term(eff, r, m, set_kind, constants)


def bound_theta(delta: float, n: int, m: float, alpha: float,
                constants: BoundConstants) -> float | None:
    """Deviation bound for the coefficient estimator at depth n, given W >= a.

    The argument is u = gamma^q * delta^p * b; requires b < a/(delta+1) and
    gamma < c1 / (1 + max(delta, sqrt(delta))). Five regime cases over the
    sub-tree scale (m^2/2)^{n+1}, the three fastest-mixing ones gated by
    n > n0 = log(u/c0)/log(alpha) - 1, plus a sub-tree non-extinction term.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if n < 0:
        raise ValueError("depth n must be >= 0")
    a, b, gamma = constants.a, constants.b, constants.gamma
    if not b < a / (delta + 1.0):
        raise ValueError(
            f"estimator bound requires b < a/(delta+1): b={b}, a/(delta+1)={a / (delta + 1.0)}")
    gamma_cap = constants.c1 / (1.0 + max(delta, math.sqrt(delta)))
    if not gamma < gamma_cap:
        raise ValueError(
            "estimator bound requires gamma < c1/(1+delta) and gamma < c1/(1+sqrt(delta)): "
            f"gamma={gamma}, cap={gamma_cap}")
    u = gamma**constants.q * delta**constants.p * b
    regime = classify_regime(m, alpha)
    cq = constants.c_prime
    cl = constants.c_double_prime
    scale = (m * m / 2.0) ** (n + 1)
    _, t_n = expected_sizes(m, n)
    a_n = constants.c3 * math.exp(cq * u ** (2.0 / 3.0)) * math.exp(
        -cl * u ** (2.0 / 3.0) * (t_n / (n + 1) ** 2) ** (1.0 / 3.0))
    if regime is Regime.SUB_UNIT:
        return constants.c2 * math.exp(cl * u - cq * u * u * scale) + a_n
    if regime is Regime.UNIT_BOUNDARY:
        return constants.c2 * math.exp(cl * u * (n + 1) - cq * u * u * scale) + a_n
    n0 = math.log(u / constants.c0) / math.log(alpha) - 1.0
    if n <= n0:
        return None
    if regime is Regime.INTERMEDIATE:
        return constants.c2 * math.exp(-cq * u * u * scale) + a_n
    if n < 1:
        return None
    if regime is Regime.SQRT2_BOUNDARY:
        return constants.c2 * math.exp(-cq * u * u * scale / n) + a_n
    return constants.c2 * math.exp(-cq * u * u / alpha ** (2 * n)) + a_n


def calibrate_cprime(delta: float, r: int, m: float, alpha: float,
                     set_kind: SetKind, constants: BoundConstants,
                     target_p: float) -> BoundConstants:
    """Pin the quadratic-decay constant so the centered bound equals target_p.

    Solves bound_centered(delta, r, ...) = target_p for c_prime at the pivot
    depth, keeping every other constant; with the bound anchored there, its
    decay in r can be compared against empirical decay at other depths.
    """
    if not 0.0 < target_p < 1.0:
        raise ValueError("target probability must lie in (0, 1)")
    regime = classify_regime(m, alpha)
    cl = constants.c_double_prime
    h = h_r(m, r, set_kind)
    d2 = delta * delta
    if regime is Regime.SUB_UNIT:
        cp = (cl * delta - math.log(target_p)) / (d2 * h)
    elif regime is Regime.UNIT_BOUNDARY:
        lin = delta if set_kind is SetKind.GENERATION else delta * (r + 1)
        cp = (cl * lin - math.log(target_p)) / (d2 * h)
    else:
        if r <= r0_threshold(delta, alpha, constants) or r < 1:
            raise ValueError("pivot depth lies below the bound's applicability threshold")
        if regime is Regime.INTERMEDIATE:
            cp = -math.log(target_p) / (d2 * h)
        elif regime is Regime.SQRT2_BOUNDARY:
            cp = -math.log(target_p) / (d2 * h / r)
        else:
            cp = -math.log(target_p) / (d2 / alpha ** (2 * r))
    if cp <= 0:
        raise ValueError("target probability is too large to calibrate at this pivot")
    return replace(constants, c_prime=cp)
