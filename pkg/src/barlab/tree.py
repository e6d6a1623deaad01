"""Random binary genealogies with missing cells.

Cells are labeled by positive integers: the daughters of cell n are 2n
(new pole) and 2n+1 (old pole), and generation(n) = floor(log2 n). A tree is
sampled generation by generation: each alive cell draws one division outcome
(CellKind) from the OffspringLaw, which decides which daughters exist. Dead
cells are never stored; a node at the deepest sampled generation has its kind
recorded but no daughters stored.

Sampling consumes exactly one uniform per alive node, in generation-major,
ascending-label order. That count is the reproducibility contract: for the
law (1, 0, 0) (full binary tree) the sampler is deterministic and consumes
2^(max_depth+1) - 1 uniforms.
"""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from .offspring import KIND_TOKEN, TOKEN_KIND, CellKind, OffspringLaw

# plain ints for hot loops; the kind codes are ordered so that the index of
# the first cumulative probability above a uniform IS the kind code
_BOTH = int(CellKind.BOTH_ALIVE)
_NEW = int(CellKind.NEW_ONLY)
_OLD = int(CellKind.OLD_ONLY)

__all__ = [
    "GwTree",
    "sample_tree",
    "sample_generation_sizes",
    "generation_nodes",
    "tree_nodes",
    "classify_cells",
    "write_tree_fixture",
    "read_tree_fixture",
]


def generations_of(labels: np.ndarray) -> np.ndarray:
    """floor(log2(label)) for positive int64 labels, exact."""
    _, exp = np.frexp(labels.astype(np.float64))
    return exp.astype(np.int64) - 1


class GwTree:
    """Sampled genealogy: per-generation sorted labels and kinds.

    ``labels_at(r)`` / ``kinds_at(r)`` are aligned arrays for generation r,
    r = 0..max_depth. Only alive cells appear. Kinds at generation max_depth
    are recorded but their daughters are not stored.
    """

    def __init__(self, law: OffspringLaw, max_depth: int,
                 gen_labels: list[np.ndarray], gen_kinds: list[np.ndarray],
                 validate: bool = True) -> None:
        self.law = law
        self.max_depth = int(max_depth)
        self._labels = [np.asarray(a, dtype=np.int64) for a in gen_labels]
        self._kinds = [np.asarray(a, dtype=np.int8) for a in gen_kinds]
        self._perm_cache: dict[int, tuple[np.ndarray, ...]] = {}
        if validate:
            self.validate()

    # -- structure access ---------------------------------------------------

    def labels_at(self, r: int) -> np.ndarray:
        self._check_gen(r)
        return self._labels[r]

    def kinds_at(self, r: int) -> np.ndarray:
        self._check_gen(r)
        return self._kinds[r]

    def _check_gen(self, r: int) -> None:
        if not (0 <= r <= self.max_depth):
            raise IndexError(f"generation {r} outside [0, {self.max_depth}]")

    @property
    def generation_sizes(self) -> list[int]:
        return [a.size for a in self._labels]

    @property
    def n_alive(self) -> int:
        return int(sum(self.generation_sizes))

    def kind_of(self, label: int) -> CellKind:
        r = int(generations_of(np.asarray([label]))[0])
        self._check_gen(r)
        i = np.searchsorted(self._labels[r], label)
        if i >= self._labels[r].size or self._labels[r][i] != label:
            raise KeyError(f"label {label} is not an alive cell")
        return CellKind(int(self._kinds[r][i]))

    def is_alive(self, label: int) -> bool:
        if label < 1:
            return False
        r = int(generations_of(np.asarray([label]))[0])
        if r > self.max_depth:
            return False
        i = np.searchsorted(self._labels[r], label)
        return bool(i < self._labels[r].size and self._labels[r][i] == label)

    def items(self) -> Iterator[tuple[int, int, CellKind]]:
        """(label, generation, kind) in generation-major label order."""
        for r in range(self.max_depth + 1):
            for lab, k in zip(self._labels[r].tolist(), self._kinds[r].tolist()):
                yield lab, r, CellKind(k)

    def child_assembly(self, r: int):
        """Masks and permutation reproducing generation r+1 from r.

        Returns (both, new, old, perm): boolean masks into generation r and
        the permutation taking the concatenated candidate daughters
        [2*both, 2*both+1, 2*new, 2*old+1] to ascending label order. Cached;
        used by the value simulation so it never re-sorts.
        """
        if r >= self.max_depth:
            raise IndexError("no stored daughters beyond max_depth")
        if r not in self._perm_cache:
            kinds = self._kinds[r]
            both = kinds == _BOTH
            new = kinds == _NEW
            old = kinds == _OLD
            labels = self._labels[r]
            lb = labels[both]
            cand = np.concatenate([2 * lb, 2 * lb + 1, 2 * labels[new], 2 * labels[old] + 1])
            perm = np.argsort(cand, kind="stable")
            self._perm_cache[r] = (both, new, old, perm)
        return self._perm_cache[r]

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        """Check structural invariants; raises ValueError on the first failure."""
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if len(self._labels) != self.max_depth + 1 or len(self._kinds) != self.max_depth + 1:
            raise ValueError("per-generation arrays must cover 0..max_depth")
        if self._labels[0].size != 1 or self._labels[0][0] != 1:
            raise ValueError("the root (label 1) must be alive and alone in generation 0")
        for r in range(self.max_depth + 1):
            labels, kinds = self._labels[r], self._kinds[r]
            if labels.size != kinds.size:
                raise ValueError(f"generation {r}: labels and kinds lengths differ")
            if labels.size == 0:
                continue
            if labels.size > 2**r:
                raise ValueError(f"generation {r} holds more than 2^{r} cells")
            if np.any(labels < 2**r) or np.any(labels >= 2 ** (r + 1)):
                raise ValueError(f"generation {r}: labels outside [2^{r}, 2^{r + 1})")
            if np.any(np.diff(labels) <= 0):
                raise ValueError(f"generation {r}: labels must be strictly increasing")
            if np.any((kinds < 0) | (kinds > 3)):
                raise ValueError(f"generation {r}: invalid kind codes")
            if r == 0:
                continue
            parents = labels // 2
            prev = self._labels[r - 1]
            idx = np.searchsorted(prev, parents)
            ok = (idx < prev.size) & (prev[np.minimum(idx, prev.size - 1)] == parents)
            if not np.all(ok):
                raise ValueError(f"generation {r}: cell without an alive parent")
            pk = self._kinds[r - 1][idx]
            even = labels % 2 == 0
            allowed = np.where(
                even,
                (pk == CellKind.BOTH_ALIVE) | (pk == CellKind.NEW_ONLY),
                (pk == CellKind.BOTH_ALIVE) | (pk == CellKind.OLD_ONLY),
            )
            if not np.all(allowed):
                raise ValueError(f"generation {r}: parent kind forbids a stored daughter")
        # conversely: every permitted daughter above must be stored
        for r in range(self.max_depth):
            _, _, _, perm = self.child_assembly(r)
            if perm.size != self._labels[r + 1].size:
                raise ValueError(f"generation {r + 1}: stored cells do not match parent kinds")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_cells(cls, law: OffspringLaw, max_depth: int,
                   cells: dict[int, CellKind]) -> "GwTree":
        """Build a tree from an explicit {label: kind} map (tests, fixtures)."""
        labels = np.sort(np.asarray(list(cells.keys()), dtype=np.int64))
        if labels.size == 0:
            raise ValueError("a tree holds at least the root")
        gens = generations_of(labels)
        gen_labels, gen_kinds = [], []
        for r in range(max_depth + 1):
            sel = labels[gens == r]
            gen_labels.append(sel)
            gen_kinds.append(np.asarray([int(cells[int(x)]) for x in sel], dtype=np.int8))
        if int(gens.max(initial=0)) > max_depth:
            raise ValueError("cell deeper than max_depth")
        return cls(law, max_depth, gen_labels, gen_kinds)


def sample_tree(law: OffspringLaw, max_depth: int, rng: np.random.Generator) -> GwTree:
    """Sample a genealogy to depth ``max_depth``.

    One uniform per alive node, generation-major, ascending labels. The
    categorical map is u < p10 -> both, < p10+p0 -> new, < p10+p0+p1 -> old,
    else none; under (H3) the none branch is exactly unreachable. Extinction
    (an empty generation) is a valid outcome, never an error.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    c1 = law.p10
    c2 = law.p10 + law.p0
    c3 = law.p10 + law.p0 + law.p1
    if law.is_h3:
        c3 = max(c3, 1.0)  # snap: none-alive impossible under (H3)
    breaks = np.asarray([c1, c2, c3])
    gen_labels = [np.ones(1, dtype=np.int64)]
    gen_kinds: list[np.ndarray] = []
    perms: dict[int, tuple[np.ndarray, ...]] = {}
    for r in range(max_depth + 1):
        labels = gen_labels[r]
        u = rng.random(labels.size)
        kinds = np.searchsorted(breaks, u, side="right").astype(np.int8)
        gen_kinds.append(kinds)
        if r < max_depth:
            both = kinds == _BOTH
            new = kinds == _NEW
            old = kinds == _OLD
            lb = labels[both]
            cand = np.concatenate([2 * lb, 2 * lb + 1,
                                   2 * labels[new], 2 * labels[old] + 1])
            perm = np.argsort(cand, kind="stable")
            gen_labels.append(cand[perm])
            # the sort just done is exactly the child assembly; keep it
            perms[r] = (both, new, old, perm)
    tree = GwTree(law, max_depth, gen_labels, gen_kinds, validate=False)
    tree._perm_cache.update(perms)
    return tree


def sample_generation_sizes(law: OffspringLaw, max_depth: int, n_rep: int,
                            rng: np.random.Generator) -> np.ndarray:
    """|G_r| for r = 0..max_depth across ``n_rep`` independent genealogies.

    Size-only fast path (no labels), for depths where materializing trees is
    not an option. Sequential clamped binomials per category keep the
    none-alive count exactly zero under (H3). Returns an (n_rep, max_depth+1)
    int64 array.
    """
    if max_depth < 0 or n_rep <= 0:
        raise ValueError("max_depth >= 0 and n_rep >= 1 required")
    sizes = np.empty((n_rep, max_depth + 1), dtype=np.int64)
    pop = np.ones(n_rep, dtype=np.int64)
    sizes[:, 0] = pop
    for r in range(max_depth):
        n10 = rng.binomial(pop, min(1.0, law.p10))
        rest = pop - n10
        q0 = min(1.0, law.p0 / (1.0 - law.p10)) if law.p10 < 1.0 else 0.0
        n0 = rng.binomial(rest, q0)
        rest = rest - n0
        denom = 1.0 - law.p10 - law.p0
        q1 = min(1.0, law.p1 / denom) if denom > 0.0 else 0.0
        if law.is_h3:
            q1 = 1.0  # all remaining cells keep the old-pole daughter
        n1 = rng.binomial(rest, q1)
        pop = 2 * n10 + n0 + n1
        sizes[:, r + 1] = pop
    return sizes


def generation_nodes(tree: GwTree, r: int) -> np.ndarray:
    """Alive labels of generation r (sorted)."""
    return tree.labels_at(r)


def tree_nodes(tree: GwTree, r: int) -> np.ndarray:
    """Alive labels of generations 0..r (sorted)."""
    tree._check_gen(r)
    return np.concatenate([tree.labels_at(k) for k in range(r + 1)])


def classify_cells(tree: GwTree, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partition the alive cells of generations 0..n by division outcome.

    Returns label arrays (both_alive, new_only, old_only). Requires
    n < max_depth so every returned cell has its stored daughters resolvable.
    """
    if n >= tree.max_depth:
        raise ValueError("classification needs daughters: n must be < max_depth")
    groups: dict[CellKind, list[np.ndarray]] = {
        CellKind.BOTH_ALIVE: [], CellKind.NEW_ONLY: [], CellKind.OLD_ONLY: []
    }
    for r in range(n + 1):
        labels, kinds = tree.labels_at(r), tree.kinds_at(r)
        for kind in groups:
            groups[kind].append(labels[kinds == kind])
    return tuple(np.concatenate(groups[k]) for k in
                 (CellKind.BOTH_ALIVE, CellKind.NEW_ONLY, CellKind.OLD_ONLY))


# -- fixture serialization ----------------------------------------------------


def write_tree_fixture(tree: GwTree) -> str:
    """One record per alive node: ``label,generation,kind`` (no header)."""
    lines = [f"{lab},{r},{KIND_TOKEN[kind]}" for lab, r, kind in tree.items()]
    return "\n".join(lines) + "\n"


def read_tree_fixture(text: str, law: OffspringLaw) -> GwTree:
    cells: dict[int, CellKind] = {}
    max_gen = 0
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {ln}: expected label,generation,kind")
        label, gen = int(parts[0]), int(parts[1])
        kind = TOKEN_KIND.get(parts[2].strip())
        if kind is None:
            raise ValueError(f"line {ln}: unknown kind token {parts[2]!r}")
        stated = int(generations_of(np.asarray([label]))[0])
        if stated != gen:
            raise ValueError(f"line {ln}: label {label} lies in generation {stated}, not {gen}")
        if label in cells:
            raise ValueError(f"line {ln}: duplicate label {label}")
        cells[label] = kind
        max_gen = max(max_gen, gen)
    return GwTree.from_cells(law, max_gen, cells)
