"""Independent oracles used to freeze expected values.

Everything here is computed from the model definition alone: exhaustive
enumeration over small trees, numerical integration of densities, and a
from-scratch chain simulator. Nothing imports the package's sampling or
statistics code, so agreement between the two paths is evidence, not
tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import multivariate_normal

# kind codes used by the enumeration, matching the model definition:
# both daughters alive / only the even (new-pole) child / only the odd
# (old-pole) child / none.
BOTH, NEW, OLD, NONE = 0, 1, 2, 3


def depth2_size_distribution(p10: float, p0: float, p1: float) -> dict[int, float]:
    """Exact law of the number of alive depth-2 cells, by kind enumeration."""
    q = 1.0 - p10 - p0 - p1
    kind_probs = {BOTH: p10, NEW: p0, OLD: p1, NONE: q}
    children = {BOTH: 2, NEW: 1, OLD: 1, NONE: 0}
    out: dict[int, float] = {}
    for root_kind, rp in kind_probs.items():
        n1 = children[root_kind]
        # each generation-1 cell branches independently
        stack = [(0, rp, 0)]  # (cells assigned, prob, alive grandchildren)
        while stack:
            done, prob, total = stack.pop()
            if done == n1:
                out[total] = out.get(total, 0.0) + prob
                continue
            for kind, kp in kind_probs.items():
                stack.append((done + 1, prob * kp, total + children[kind]))
    return out


@dataclass(frozen=True)
class Atom:
    """One exhaustive outcome of the depth-2 population."""

    prob: float
    gen1: tuple[float, ...]
    gen2: tuple[float, ...]


def depth2_population_atoms(theta: tuple[float, ...], x1: float,
                            sigma: float, sigma0: float, sigma1: float,
                            p10: float, p0: float, p1: float) -> list[Atom]:
    """All (kind, sign) outcomes of the two-point-noise model to depth 2.

    theta is (a0, b0, a1, b1, a0p, b0p, a1p, b1p). Every alive child gets an
    independent +-sigma noise with probability 1/2 each; the even child of a
    BOTH or NEW mother uses the (a0,b0)/(a0p,b0p) map, the odd child of a
    BOTH or OLD mother the (a1,b1)/(a1p,b1p) map.
    """
    a0, b0, a1, b1, a0p, b0p, a1p, b1p = theta
    q = 1.0 - p10 - p0 - p1
    kind_probs = {BOTH: p10, NEW: p0, OLD: p1, NONE: q}

    def offspring(x: float, kind: int) -> list[tuple[float, tuple[float, ...]]]:
        """(prob, child values) for one mother of the given kind."""
        if kind == NONE:
            return [(1.0, ())]
        if kind == BOTH:
            out = []
            for s_even in (+1.0, -1.0):
                for s_odd in (+1.0, -1.0):
                    out.append((0.25, (a0 * x + b0 + s_even * sigma,
                                       a1 * x + b1 + s_odd * sigma)))
            return out
        if kind == NEW:
            return [(0.5, (a0p * x + b0p + s * sigma0,)) for s in (+1.0, -1.0)]
        return [(0.5, (a1p * x + b1p + s * sigma1,)) for s in (+1.0, -1.0)]

    def expand(values: tuple[float, ...]) -> list[tuple[float, tuple[float, ...]]]:
        """Joint law of the next generation given one generation's values."""
        layouts = [(1.0, ())]
        for x in values:
            grown = []
            for kind, kp in kind_probs.items():
                if kp == 0.0:
                    continue
                for cp, children in offspring(x, kind):
                    for lp, acc in layouts:
                        grown.append((lp * kp * cp, acc + children))
            layouts = grown
        return layouts

    atoms = []
    for p_g1, gen1 in expand((x1,)):
        for p_g2, gen2 in expand(gen1):
            atoms.append(Atom(p_g1 * p_g2, gen1, gen2))
    return atoms


def exact_exceedance(atoms: list[Atom], delta: float, m: float, r: int,
                     f=lambda x: x, tree_sum: bool = False,
                     x1: float | None = None) -> float:
    """Exact P(sum of f over generation r / m^r > delta) from the atom list.

    With tree_sum=True the statistic sums f over generations 0..r and divides
    by (m^{r+1}-1)/(m-1); x1 must then be given.
    """
    total = 0.0
    for atom in atoms:
        gens = {0: (x1,) if x1 is not None else (), 1: atom.gen1, 2: atom.gen2}
        if tree_sum:
            num = sum(f(v) for g in range(r + 1) for v in gens[g])
            den = (m ** (r + 1) - 1.0) / (m - 1.0)
        else:
            num = sum(f(v) for v in gens[r])
            den = m ** r
        if num / den > delta:
            total += atom.prob
    return total


def truncated_square_correlation(rho: float, k: float) -> float:
    """Correlation of a standard bivariate normal truncated to [-k, k]^2."""
    rv = multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]])

    def dens(y, x):
        return rv.pdf([x, y])

    def xy_dens(y, x):
        return x * y * rv.pdf([x, y])

    def xx_dens(y, x):
        return x * x * rv.pdf([x, y])

    lim = (-k, k)
    z, _ = integrate.dblquad(dens, *lim, *lim, epsabs=1e-12, epsrel=1e-12)
    cross, _ = integrate.dblquad(xy_dens, *lim, *lim, epsabs=1e-12, epsrel=1e-12)
    second, _ = integrate.dblquad(xx_dens, *lim, *lim, epsabs=1e-12, epsrel=1e-12)
    return (cross / z) / (second / z)


def chain_oracle_moments(theta: tuple[float, ...], sigmas: tuple[float, float, float],
                         weights: tuple[float, float, float, float],
                         trunc_k: float, n_chains: int, n_steps: int, burn_in: int,
                         seed: int) -> tuple[float, float, float, float]:
    """(mean, second moment, se_mean, se_second) of the lineage chain.

    From-scratch simulator: atom choice by rng.choice, truncated normal noise
    by rejection (the package uses inverse-CDF sampling, so the two paths
    share no code). Atoms are ((a0,b0,s), (a1,b1,s), (a0p,b0p,s0),
    (a1p,b1p,s1)) with the given weights.
    """
    a0, b0, a1, b1, a0p, b0p, a1p, b1p = theta
    s, s0, s1 = sigmas
    slopes = np.array([a0, a1, a0p, a1p])
    intercepts = np.array([b0, b1, b0p, b1p])
    scales = np.array([s, s, s0, s1])
    rng = np.random.default_rng(seed)
    y = np.zeros(n_chains)
    sum1 = np.zeros(n_chains)
    sum2 = np.zeros(n_chains)
    for step in range(burn_in + n_steps):
        idx = rng.choice(4, size=n_chains, p=weights)
        e = rng.standard_normal(n_chains)
        bad = np.abs(e) > trunc_k
        while bad.any():
            e[bad] = rng.standard_normal(int(bad.sum()))
            bad = np.abs(e) > trunc_k
        y = slopes[idx] * y + intercepts[idx] + scales[idx] * e
        if step >= burn_in:
            sum1 += y
            sum2 += y * y
    m1 = sum1 / n_steps
    m2 = sum2 / n_steps
    return (float(m1.mean()), float(m2.mean()),
            float(m1.std(ddof=1) / math.sqrt(n_chains)),
            float(m2.std(ddof=1) / math.sqrt(n_chains)))
