"""Offspring law of the cell division process.

Each alive cell leaves one of four configurations: both daughters alive, only
the new-pole daughter, only the old-pole daughter, or none. The law is the
probability triple (p10, p0, p1) of the first three; the none-alive
probability is the remainder.

Standing assumptions used across the package:

* (H2) supercritical enough: m > sqrt(2), where m = 2*p10 + p0 + p1 is the
  mean number of alive daughters;
* (H3) no death: p10 + p0 + p1 = 1 (the none-alive configuration has
  probability zero and the alive population never goes extinct).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

H3_TOL = 1e-12
SQRT2 = math.sqrt(2.0)


class CellKind(enum.IntEnum):
    """Division outcome of an alive cell."""

    BOTH_ALIVE = 0
    NEW_ONLY = 1
    OLD_ONLY = 2
    NONE_ALIVE = 3


# compact tokens used in tree fixture files
KIND_TOKEN = {
    CellKind.BOTH_ALIVE: "both",
    CellKind.NEW_ONLY: "new",
    CellKind.OLD_ONLY: "old",
    CellKind.NONE_ALIVE: "none",
}
TOKEN_KIND = {v: k for k, v in KIND_TOKEN.items()}


@dataclass(frozen=True)
class OffspringLaw:
    """Division law (p10, p0, p1); none-alive gets the remaining mass."""

    p10: float
    p0: float
    p1: float

    def __post_init__(self) -> None:
        for name in ("p10", "p0", "p1"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        # allow float dust above 1 (e.g. 0.9+0.05+0.05); reject real excess
        if self.p10 + self.p0 + self.p1 > 1.0 + H3_TOL:
            raise ValueError("p10 + p0 + p1 must not exceed 1")

    @property
    def p_none(self) -> float:
        return max(0.0, 1.0 - (self.p10 + self.p0 + self.p1))

    @property
    def mean(self) -> float:
        """Mean number of alive daughters m = 2*p10 + p0 + p1."""
        return 2.0 * self.p10 + self.p0 + self.p1

    @property
    def is_supercritical(self) -> bool:
        return self.mean > 1.0

    @property
    def is_strong(self) -> bool:
        """(H2): m > sqrt(2)."""
        return self.mean > SQRT2

    @property
    def is_h3(self) -> bool:
        """(H3): p10 + p0 + p1 = 1 within 1e-12."""
        return abs(self.p10 + self.p0 + self.p1 - 1.0) <= H3_TOL


def mean_offspring(law: OffspringLaw) -> float:
    return law.mean


def generating_function(law: OffspringLaw, z: float) -> float:
    """Offspring generating function psi(z) evaluated pointwise.

    psi(z) = p_none + (p0 + p1) z + p10 z^2. Under (H3) the smallest fixed
    point on [0, 1] is 0 (no extinction).
    """
    p_none = law.p_none if not law.is_h3 else 0.0
    return p_none + (law.p0 + law.p1) * z + law.p10 * z * z


def expected_sizes(m: float, r: int) -> tuple[float, float]:
    """(E|G_r|, E|T_r|) = (m^r, (m^{r+1}-1)/(m-1)) for mean m > 1."""
    if m <= 1.0:
        raise ValueError("mean offspring m must exceed 1 (m = 1 has no closed geometric sum)")
    if r < 0:
        raise ValueError("generation index r must be non-negative")
    return m**r, (m ** (r + 1) - 1.0) / (m - 1.0)
