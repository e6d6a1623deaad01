"""Bifurcating autoregression on a sampled genealogy.

Given a tree, values propagate mother to daughters:

* both daughters alive:  X_{2n} = alpha0 X_n + beta0 + e_{2n},
  X_{2n+1} = alpha1 X_n + beta1 + e_{2n+1}, with (e_{2n}, e_{2n+1}) centered
  bivariate normal, common variance sigma^2, correlation rho;
* new pole only:   X_{2n} = alpha0p X_n + beta0p + e', Var e' = sigma0^2;
* old pole only:   X_{2n+1} = alpha1p X_n + beta1p + e', Var e' = sigma1^2.

All noises are truncated to [-trunc_k * sd, trunc_k * sd] (rejection
resampling), so the process lives on a compact interval; see state_bound.

Draw discipline (reproducibility contract): values are computed generation by
generation; within a generation the sampler consumes one standard pair draw
and one standard single draw per alive mother in ascending label order
(pair block first, then single block), regardless of the mother's kind.
Unused draws are discarded, so a cell's noise does not depend on any other
cell's kind. The noiseless switch bypasses noise draws entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .offspring import CellKind
from .tree import GwTree, generations_of

__all__ = [
    "BarParams",
    "NoiseSpec",
    "InitialLaw",
    "PopulationSample",
    "DEAD",
    "sample_pair_noise",
    "simulate_population",
    "triangle",
    "state_bound",
    "write_sample_fixture",
    "read_sample_fixture",
]

# marker for an absent (dead) coordinate in a mother-daughters triangle
DEAD = None

REJECTION_CAP = 10**6
HARD_DEPTH_CAP = 48


@dataclass(frozen=True)
class BarParams:
    """Eight autoregression coefficients; every slope must satisfy |a| < 1."""

    alpha0: float
    beta0: float
    alpha1: float
    beta1: float
    alpha0p: float
    beta0p: float
    alpha1p: float
    beta1p: float

    def __post_init__(self) -> None:
        for name in ("alpha0", "alpha1", "alpha0p", "alpha1p"):
            if abs(getattr(self, name)) >= 1.0:
                raise ValueError(f"|{name}| must be < 1")

    @property
    def slopes(self) -> tuple[float, float, float, float]:
        return (self.alpha0, self.alpha1, self.alpha0p, self.alpha1p)

    @property
    def intercepts(self) -> tuple[float, float, float, float]:
        return (self.beta0, self.beta1, self.beta0p, self.beta1p)

    def as_vector(self) -> np.ndarray:
        """(alpha0, beta0, alpha1, beta1, alpha0p, beta0p, alpha1p, beta1p)."""
        return np.asarray([self.alpha0, self.beta0, self.alpha1, self.beta1,
                           self.alpha0p, self.beta0p, self.alpha1p, self.beta1p])


@dataclass(frozen=True)
class NoiseSpec:
    """Noise law of the three division channels.

    kind "gaussian" is the truncated-normal model above; "two_point" replaces
    every noise by +-sd with equal probability (pair coordinates independent,
    rho must be 0) so that small systems can be enumerated exactly. noiseless
    bypasses sampling altogether while keeping the positive-sd invariants.
    """

    sigma: float
    rho: float
    sigma0: float
    sigma1: float
    trunc_k: float = 4.0
    kind: str = "gaussian"
    noiseless: bool = False

    def __post_init__(self) -> None:
        if self.sigma <= 0 or self.sigma0 <= 0 or self.sigma1 <= 0:
            raise ValueError("sigma, sigma0, sigma1 must be > 0")
        if not (-1.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (-1, 1): the pair covariance "
                             "sigma^2 [[1, rho], [rho, 1]] must be positive definite")
        if self.trunc_k <= 0:
            raise ValueError("trunc_k must be > 0")
        if self.kind not in ("gaussian", "two_point"):
            raise ValueError("noise kind must be 'gaussian' or 'two_point'")
        if self.kind == "two_point" and self.rho != 0.0:
            raise ValueError("two_point noise requires rho = 0")

    @property
    def amplitude(self) -> float:
        """Largest possible noise magnitude."""
        if self.noiseless:
            return 0.0
        s = max(self.sigma, self.sigma0, self.sigma1)
        return s if self.kind == "two_point" else self.trunc_k * s


@dataclass(frozen=True)
class InitialLaw:
    """Law of the root value: point mass or uniform on an interval."""

    kind: str = "point"
    value: float = 0.0
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("point", "uniform"):
            raise ValueError("initial law kind must be 'point' or 'uniform'")
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError("uniform initial law requires low < high")

    @property
    def abs_max(self) -> float:
        if self.kind == "point":
            return abs(self.value)
        return max(abs(self.low), abs(self.high))

    def draw(self, rng: np.random.Generator) -> float:
        """Point mass consumes no draws; uniform consumes one."""
        if self.kind == "point":
            return self.value
        return float(self.low + (self.high - self.low) * rng.random())


def state_bound(params: BarParams, noise: NoiseSpec, init: InitialLaw) -> float:
    """Every simulated value lies in [-B, B] with this B."""
    beta_max = max(abs(b) for b in params.intercepts)
    alpha_max = max(abs(a) for a in params.slopes)
    return (beta_max + noise.amplitude + init.abs_max) / (1.0 - alpha_max)


# -- noise draws ---------------------------------------------------------------


def _pair_z(n: int, rho: float, k: float, rng: np.random.Generator) -> np.ndarray:
    """n standard-unit pairs with correlation rho, both coords in [-k, k].

    Rejection resampling, redrawing only rejected rows; the loop trips a hard
    failure after REJECTION_CAP rounds.
    """
    s = math.sqrt(1.0 - rho * rho)
    z = rng.standard_normal((n, 2))
    out = np.empty((n, 2))
    out[:, 0] = z[:, 0]
    out[:, 1] = rho * z[:, 0] + s * z[:, 1]
    bad = (np.abs(out[:, 0]) > k) | (np.abs(out[:, 1]) > k)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > REJECTION_CAP:
            raise RuntimeError("pair noise rejection exceeded the iteration cap")
        m = int(bad.sum())
        z = rng.standard_normal((m, 2))
        out[bad, 0] = z[:, 0]
        out[bad, 1] = rho * z[:, 0] + s * z[:, 1]
        bad2 = (np.abs(out[:, 0]) > k) | (np.abs(out[:, 1]) > k)
        bad = bad & bad2
    return out


def _single_z(n: int, k: float, rng: np.random.Generator) -> np.ndarray:
    """n standard-unit draws in [-k, k] by rejection."""
    z = rng.standard_normal(n)
    bad = np.abs(z) > k
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > REJECTION_CAP:
            raise RuntimeError("single noise rejection exceeded the iteration cap")
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = bad & (np.abs(z) > k)
    return z


def _sign_z(shape, rng: np.random.Generator) -> np.ndarray:
    return np.where(rng.random(shape) < 0.5, -1.0, 1.0)


def sample_pair_noise(noise: NoiseSpec, rng: np.random.Generator) -> tuple[float, float]:
    """One correlated daughter-pair noise draw (e_new, e_old)."""
    if noise.noiseless:
        return 0.0, 0.0
    if noise.kind == "two_point":
        z = _sign_z((1, 2), rng)
    else:
        z = _pair_z(1, noise.rho, noise.trunc_k, rng)
    return float(noise.sigma * z[0, 0]), float(noise.sigma * z[0, 1])


# -- population simulation -----------------------------------------------------


class PopulationSample:
    """Values on the alive cells of a tree, aligned with its label arrays."""

    def __init__(self, tree: GwTree, gen_values: list[np.ndarray]) -> None:
        if len(gen_values) != tree.max_depth + 1:
            raise ValueError("one value array per generation required")
        for r, v in enumerate(gen_values):
            if v.size != tree.labels_at(r).size:
                raise ValueError(f"generation {r}: values do not align with labels")
        self.tree = tree
        self._values = [np.asarray(v, dtype=np.float64) for v in gen_values]

    def values_at(self, r: int) -> np.ndarray:
        self.tree._check_gen(r)
        return self._values[r]

    def lookup(self, labels: np.ndarray) -> np.ndarray:
        """Values of the given alive labels (vectorized)."""
        labels = np.asarray(labels, dtype=np.int64)
        out = np.empty(labels.size, dtype=np.float64)
        gens = generations_of(labels)
        for r in np.unique(gens):
            if r > self.tree.max_depth:
                raise KeyError("label beyond the sampled depth")
            sel = gens == r
            gl = self.tree.labels_at(int(r))
            idx = np.searchsorted(gl, labels[sel])
            if np.any(idx >= gl.size) or np.any(gl[np.minimum(idx, gl.size - 1)] != labels[sel]):
                raise KeyError("label is not an alive cell")
            out[sel] = self._values[int(r)][idx]
        return out

    def items(self) -> Iterator[tuple[int, int, float]]:
        for r in range(self.tree.max_depth + 1):
            for lab, v in zip(self.tree.labels_at(r).tolist(), self._values[r].tolist()):
                yield lab, r, v


def simulate_population(tree: GwTree, params: BarParams, noise: NoiseSpec,
                        init: InitialLaw, rng: np.random.Generator,
                        depth_cap: int = HARD_DEPTH_CAP) -> PopulationSample:
    """Run the autoregression over every alive cell of ``tree``.

    Generation-major; see the module docstring for the draw discipline. The
    returned values are guaranteed to lie within +-state_bound(...).
    """
    if tree.max_depth > depth_cap:
        raise ValueError(f"tree depth {tree.max_depth} exceeds the hard cap {depth_cap}")
    x1 = init.draw(rng)
    values: list[np.ndarray] = [np.asarray([x1])]
    two_point = noise.kind == "two_point"
    a0, b0, a1, b1 = params.alpha0, params.beta0, params.alpha1, params.beta1
    a0p, b0p, a1p, b1p = params.alpha0p, params.beta0p, params.alpha1p, params.beta1p
    sg, sg0, sg1 = noise.sigma, noise.sigma0, noise.sigma1
    for r in range(tree.max_depth):
        labels = tree.labels_at(r)
        vals = values[r]
        n = labels.size
        if n == 0:
            values.append(np.empty(0))
            continue
        if noise.noiseless:
            zp = np.zeros((n, 2))
            zs = np.zeros(n)
        elif two_point:
            zp = _sign_z((n, 2), rng)
            zs = _sign_z(n, rng)
        else:
            zp = _pair_z(n, noise.rho, noise.trunc_k, rng)
            zs = _single_z(n, noise.trunc_k, rng)
        both, new, old, perm = tree.child_assembly(r)
        vb = vals[both]
        child = np.concatenate([
            a0 * vb + b0 + sg * zp[both, 0],
            a1 * vb + b1 + sg * zp[both, 1],
            a0p * vals[new] + b0p + sg0 * zs[new],
            a1p * vals[old] + b1p + sg1 * zs[old],
        ])
        values.append(child[perm])
    sample = PopulationSample(tree, values)
    bound = state_bound(params, noise, init)
    for v in values:
        if v.size and np.max(np.abs(v)) > bound + 1e-9:
            raise AssertionError("simulated value escaped the compact state interval")
    return sample


def triangle(sample: PopulationSample, label: int):
    """(X_i, X_{2i} or DEAD, X_{2i+1} or DEAD) for an alive cell i.

    The cell's daughters must be within the sampled depth (the mother's
    generation must be < max_depth).
    """
    tree = sample.tree
    r = int(generations_of(np.asarray([label]))[0])
    if not tree.is_alive(label):
        raise KeyError(f"label {label} is not an alive cell")
    if r >= tree.max_depth:
        raise KeyError(f"daughters of {label} lie beyond the sampled depth")
    kind = tree.kind_of(label)
    x = float(sample.lookup(np.asarray([label]))[0])
    y = z = DEAD
    if kind in (CellKind.BOTH_ALIVE, CellKind.NEW_ONLY):
        y = float(sample.lookup(np.asarray([2 * label]))[0])
    if kind in (CellKind.BOTH_ALIVE, CellKind.OLD_ONLY):
        z = float(sample.lookup(np.asarray([2 * label + 1]))[0])
    return x, y, z


# -- fixture serialization ----------------------------------------------------


def write_sample_fixture(sample: PopulationSample) -> str:
    """One record per alive node: ``label,generation,value`` (repr floats)."""
    lines = [f"{lab},{r},{v!r}" for lab, r, v in sample.items()]
    return "\n".join(lines) + "\n"


def read_sample_fixture(text: str, tree: GwTree) -> PopulationSample:
    by_label: dict[int, float] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {ln}: expected label,generation,value")
        by_label[int(parts[0])] = float(parts[2])
    values = []
    for r in range(tree.max_depth + 1):
        labels = tree.labels_at(r)
        try:
            values.append(np.asarray([by_label[int(x)] for x in labels]))
        except KeyError as exc:
            raise ValueError(f"fixture is missing a value for alive cell {exc}") from exc
    return PopulationSample(tree, values)
