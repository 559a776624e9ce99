"""Finite dyadic grids over the unit cube, measures on them, and Lp norms.

A grid of dimension ``d`` and depth ``D`` holds every dyadic cube of the unit
cube down to side length ``2**-D``. Cubes are addressed by a canonical linear
index: levels are enumerated root first, and within level ``l`` the cube with
coordinates ``(i_0, ..., i_{d-1})`` (each in ``range(2**l)``) sits at offset
``sum(i_k * 2**(l*k))``. Leaves are the cubes at the final level.

Ancestors above the root are "virtual": they carry no mass and no weight, and
by the zero-outside-root convention they always intersect the complement of
any subset of the root. They exist so that boundary cases of the decomposition
machinery (parents of the root) have a well-defined handle.

Grids and measures are immutable after construction; their arrays are marked
read-only so they can be shared freely across worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels

DEFAULT_MAX_LEAVES = 1 << 20


class GridSizeError(ValueError):
    """Requested grid exceeds the configured leaf budget."""


class UndefinedAverageError(ValueError):
    """Average against a measure with zero mass on the cube."""


GridFunction = np.ndarray
"""A function on the grid: one float per leaf, in canonical leaf order."""


@dataclass(frozen=True)
class CubeRef:
    """Reference to a dyadic cube.

    Real cubes have ``level >= 0`` and one coordinate per dimension. Virtual
    ancestors of the root have ``level < 0`` and empty coordinates; they carry
    only their height above the root.
    """

    level: int
    coords: tuple = ()

    def __post_init__(self):
        if self.level < 0 and self.coords:
            raise ValueError("virtual cubes carry no coordinates")

    @property
    def is_virtual(self) -> bool:
        return self.level < 0

    @property
    def height(self) -> int:
        """Height above the root for virtual cubes (0 for the root itself)."""
        return max(-self.level, 0)


class DyadicGrid:
    """All dyadic subcubes of [0,1)^d down to depth ``depth``.

    Precomputes the index structures the tree kernels need: per-cube level and
    volume, the parent index of every non-root cube, and for every level the
    cube indices grouped by parent (``child_order``), which pins down the
    deterministic bottom-up summation order.
    """

    def __init__(self, d: int, depth: int, max_leaves: int = DEFAULT_MAX_LEAVES):
        if d < 1:
            raise ValueError(f"dimension must be >= 1, got {d}")
        if depth < 0:
            raise ValueError(f"depth must be >= 0, got {depth}")
        if d * depth >= 63 or (1 << (d * depth)) > max_leaves:
            raise GridSizeError(
                f"grid (d={d}, depth={depth}) would have 2**{d * depth} leaves; "
                f"budget is {max_leaves}"
            )
        self.d = d
        self.depth = depth
        self.arity = 1 << d

        offsets = np.empty(depth + 2, dtype=np.int64)
        offsets[0] = 0
        for lev in range(depth + 1):
            offsets[lev + 1] = offsets[lev] + (1 << (d * lev))
        self.level_offsets = offsets
        self.n_cubes = int(offsets[-1])
        self.n_leaves = 1 << (d * depth)
        self.leaf_start = int(offsets[depth])

        levels = np.empty(self.n_cubes, dtype=np.int64)
        parent = np.empty(self.n_cubes, dtype=np.int64)
        child_order = np.zeros(self.n_cubes, dtype=np.int64)
        parent[0] = -1
        levels[0] = 0
        for lev in range(1, depth + 1):
            lo, hi = int(offsets[lev]), int(offsets[lev + 1])
            plo = int(offsets[lev - 1])
            levels[lo:hi] = lev
            side = 1 << lev
            pside = side >> 1
            pw = np.zeros(hi - lo, dtype=np.int64)
            tmp = np.arange(hi - lo, dtype=np.int64)
            stride = 1
            for _ in range(d):
                digit = tmp % side
                tmp //= side
                pw += (digit >> 1) * stride
                stride *= pside
            parent[lo:hi] = plo + pw
            # stable sort groups each parent's children together, children in
            # canonical order within the group
            child_order[lo:hi] = lo + np.argsort(parent[lo:hi], kind="stable")

        self.levels = levels
        self.parent = parent
        self.child_order = child_order
        self.volumes = np.power(2.0, -float(d) * levels.astype(np.float64))
        self.leaf_volume = 2.0 ** (-d * depth)
        self._anc_matrix = None
        for arr in (self.level_offsets, levels, parent, child_order, self.volumes):
            arr.flags.writeable = False

    # -- index arithmetic ---------------------------------------------------

    def index_of(self, cube) -> int:
        """Canonical linear index of a real cube (CubeRef or already an int)."""
        if isinstance(cube, (int, np.integer)):
            i = int(cube)
            if not 0 <= i < self.n_cubes:
                raise ValueError(f"cube index {i} out of range")
            return i
        if cube.is_virtual:
            raise ValueError("virtual cubes have no linear index")
        if cube.level > self.depth:
            raise ValueError(f"level {cube.level} exceeds grid depth {self.depth}")
        if len(cube.coords) != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {len(cube.coords)}")
        side = 1 << cube.level
        within = 0
        stride = 1
        for c in cube.coords:
            if not 0 <= c < side:
                raise ValueError(f"coordinate {c} out of range for level {cube.level}")
            within += c * stride
            stride *= side
        return int(self.level_offsets[cube.level]) + within

    def cube(self, index: int) -> CubeRef:
        index = self.index_of(index)
        lev = int(self.levels[index])
        within = index - int(self.level_offsets[lev])
        side = 1 << lev
        coords = []
        for _ in range(self.d):
            coords.append(within % side)
            within //= side
        return CubeRef(lev, tuple(coords))

    @property
    def root(self) -> CubeRef:
        return CubeRef(0, (0,) * self.d)

    def parent_index(self, index: int) -> int:
        return int(self.parent[index])

    def children_indices(self, index: int) -> np.ndarray:
        lev = int(self.levels[index])
        if lev >= self.depth:
            return np.empty(0, dtype=np.int64)
        lo = int(self.level_offsets[lev + 1])
        within = index - int(self.level_offsets[lev])
        return self.child_order[lo + within * self.arity : lo + (within + 1) * self.arity]

    def ancestor_indices(self, index: int, include_self: bool = True) -> list:
        """Chain from the cube up to the root, deepest first."""
        chain = []
        i = self.index_of(index)
        if include_self:
            chain.append(i)
        i = int(self.parent[i])
        while i >= 0:
            chain.append(i)
            i = int(self.parent[i])
        return chain

    def subtree_cube_mask(self, index: int) -> np.ndarray:
        """Boolean mask over cubes: descendants of ``index``, inclusive."""
        onehot = np.zeros(self.n_cubes)
        onehot[self.index_of(index)] = 1.0
        marked = _kernels.down_sum(onehot, self.parent, self.level_offsets)
        return marked == 1.0

    def subtree_leaf_mask(self, index: int) -> np.ndarray:
        return self.subtree_cube_mask(index)[self.leaf_start :]

    def leaf_ancestor_matrix(self) -> np.ndarray:
        """Array of shape (depth+1, n_leaves): row l holds each leaf's level-l ancestor."""
        if self._anc_matrix is None:
            anc = np.empty((self.depth + 1, self.n_leaves), dtype=np.int64)
            anc[self.depth] = np.arange(self.leaf_start, self.n_cubes, dtype=np.int64)
            for lev in range(self.depth, 0, -1):
                anc[lev - 1] = self.parent[anc[lev]]
            anc.flags.writeable = False
            self._anc_matrix = anc
        return self._anc_matrix

    def embed_leaf_values(self, leaf_values: np.ndarray) -> np.ndarray:
        """Place per-leaf values into a full per-cube array (zeros elsewhere)."""
        full = np.zeros(self.n_cubes)
        full[self.leaf_start :] = leaf_values
        return full

    def __repr__(self):
        return f"DyadicGrid(d={self.d}, depth={self.depth}, cubes={self.n_cubes})"


@lru_cache(maxsize=64)
def _cached_grid(d: int, depth: int, max_leaves: int) -> DyadicGrid:
    return DyadicGrid(d, depth, max_leaves)


def build_grid(d: int, depth: int, max_leaves: int = DEFAULT_MAX_LEAVES) -> DyadicGrid:
    """Build (or fetch from cache) the grid of dimension ``d`` and depth ``depth``."""
    return _cached_grid(d, depth, max_leaves)


def parent(grid: DyadicGrid, cube: CubeRef, j: int = 1) -> CubeRef:
    """The j-fold dyadic parent; virtual once the level drops below 0."""
    if j < 0:
        raise ValueError("parent order must be >= 0")
    if j == 0:
        return cube
    new_level = cube.level - j
    if new_level < 0:
        return CubeRef(new_level)
    if cube.is_virtual:  # j > 0 but level stays >= 0: impossible from virtual
        raise ValueError("cannot descend from a virtual cube")
    return CubeRef(new_level, tuple(c >> j for c in cube.coords))


class Measure:
    """Nonnegative (or, via :meth:`product`, signed) measure given by leaf masses.

    Per-cube masses are accumulated bottom-up with a fixed pairwise child-sum
    order, so ``mass(Q) == sum(mass(child) for child in Q)`` holds exactly in
    floating point.
    """

    def __init__(self, grid: DyadicGrid, leaf_mass, *, is_weight: bool = True):
        leaf_mass = np.array(leaf_mass, dtype=np.float64, copy=True)
        if leaf_mass.shape != (grid.n_leaves,):
            raise ValueError(
                f"expected {grid.n_leaves} leaf masses, got shape {leaf_mass.shape}"
            )
        if not np.all(np.isfinite(leaf_mass)):
            raise ValueError("leaf masses must be finite")
        if is_weight and np.any(leaf_mass < 0):
            raise ValueError("weights require nonnegative leaf masses")
        self.grid = grid
        self.leaf_mass = leaf_mass
        self.is_weight = is_weight
        self.cube_mass = _kernels.up_sum(
            grid.embed_leaf_values(leaf_mass), grid.child_order, grid.level_offsets
        )
        self.leaf_mass.flags.writeable = False
        self.cube_mass.flags.writeable = False

    @classmethod
    def lebesgue(cls, grid: DyadicGrid) -> "Measure":
        return cls(grid, np.full(grid.n_leaves, grid.leaf_volume))

    @staticmethod
    def product(f: GridFunction, weight: "Measure") -> "Measure":
        """The signed measure f*mu (the only route to signed masses)."""
        f = np.asarray(f, dtype=np.float64)
        return Measure(weight.grid, f * weight.leaf_mass, is_weight=False)

    def mass(self, cube) -> float:
        if isinstance(cube, CubeRef) and cube.is_virtual:
            raise ValueError("virtual cubes carry no mass")
        return float(self.cube_mass[self.grid.index_of(cube)])

    @property
    def total(self) -> float:
        return float(self.cube_mass[0])

    def scaled(self, c: float) -> "Measure":
        if self.is_weight and c < 0:
            return Measure(self.grid, c * self.leaf_mass, is_weight=False)
        return Measure(self.grid, c * self.leaf_mass, is_weight=self.is_weight)

    def with_leaf_mask(self, mask) -> "Measure":
        """Restriction: masses kept where ``mask`` is true, zero elsewhere."""
        mask = np.asarray(mask, dtype=bool)
        return Measure(self.grid, np.where(mask, self.leaf_mass, 0.0), is_weight=self.is_weight)

    def __repr__(self):
        kind = "weight" if self.is_weight else "signed"
        return f"Measure({kind}, total={self.total:.6g})"


def measure_avg(nu: Measure, cube) -> float:
    """E_Q nu = nu(Q)/|Q|; virtual cubes give 0 by the zero-outside-root convention."""
    if isinstance(cube, CubeRef) and cube.is_virtual:
        return 0.0
    i = nu.grid.index_of(cube)
    return float(nu.cube_mass[i] / nu.grid.volumes[i])


def weighted_avg(f: GridFunction, mu: Measure, cube) -> float:
    """Average of f over the cube against mu. Raises when mu(Q) == 0."""
    grid = mu.grid
    i = grid.index_of(cube)
    denom = float(mu.cube_mass[i])
    if denom == 0.0:
        raise UndefinedAverageError(f"cube {grid.cube(i)} has zero mass")
    num = cube_integrals(f, mu)[i]
    return float(num / denom)


def lp_norm(f: GridFunction, mu: Measure, p: float) -> float:
    """L^p(mu) norm of a leaf function, 1 <= p < inf."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (mu.grid.n_leaves,):
        raise ValueError("function length must equal the leaf count")
    return float(np.sum(np.abs(f) ** p * mu.leaf_mass) ** (1.0 / p))


def cube_averages(nu: Measure) -> np.ndarray:
    """E_Q nu for every cube at once."""
    return nu.cube_mass / nu.grid.volumes


def cube_integrals(f: GridFunction, mu: Measure) -> np.ndarray:
    """integral_Q f dmu for every cube at once."""
    grid = mu.grid
    f = np.asarray(f, dtype=np.float64)
    return _kernels.up_sum(
        grid.embed_leaf_values(f * mu.leaf_mass), grid.child_order, grid.level_offsets
    )


@dataclass(frozen=True)
class Exponents:
    """A valid exponent pair 1 < p <= q < inf with its conjugates."""

    p: float
    q: float

    def __post_init__(self):
        if not (1.0 < self.p <= self.q) or not math.isfinite(self.q):
            raise ValueError(f"need 1 < p <= q < inf, got p={self.p}, q={self.q}")
        # conjugate identities must hold to within 1e-12
        for a, a_conj in ((self.p, self.p_conj), (self.q, self.q_conj)):
            if abs(1.0 / a + 1.0 / a_conj - 1.0) > 1e-12:
                raise ValueError(f"conjugate identity failed for exponent {a}")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    def dual(self) -> "Exponents":
        """The swapped-conjugate pair (q', p'), again a valid pair."""
        return Exponents(self.q_conj, self.p_conj)

    @property
    def is_l2(self) -> bool:
        return self.p == 2.0 and self.q == 2.0
