"""Executable decomposition machinery, each construction paired with its audit.

Everything here operates on superlevel sets of v = T(f sigma): Whitney-style
cube layers, corridor sets, the three-way cube classification, neighbor and
occurrence counting, halving chains, principal-cube coronas, and the maximum
principle. Constructions return their audit findings as plain strings instead
of raising, so a suite can aggregate violations across instances; an empty
violation list is the expected outcome on every input.

Conventions, fixed once and used consistently:

* Superlevel sets are strict: Omega_k = {v > base**k}; a tie v(x) == base**k
  leaves x outside.
* The layer window is finite: k runs from the largest k with Omega_k equal to
  the full positive support of v up to the largest k with Omega_k nonempty.
  Below the window every Omega_k coincides with the bottom layer.
* When Omega_k is the whole space the layer is the single root cube, flagged
  ``saturated`` (a boundary effect of the bounded ambient; such layers are
  exempt from the escape half of the Whitney audit).
* A Whitney cube whose ideal level would exceed the leaf level is clamped to
  the leaf and flagged; clamped cubes are likewise exempt from that audit.
* Virtual ancestors (levels below the root) contain every real cube and count
  as meeting the complement of every superlevel set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import (
    CubeRef,
    DyadicGrid,
    Measure,
    lp_norm,
    parent as cube_parent,
    weighted_avg,
)
from .operators import CubeWeights, apply_T, apply_T_restricted, maximal

DEFAULT_M = 5
DEFAULT_ETA = 0.25
DEFAULT_RHO = 1


def _power(base: float, k: int) -> float:
    try:
        return float(base) ** k
    except OverflowError:
        return math.inf


def _largest_k_below(base: float, x: float) -> int:
    """Largest integer k with base**k < x, for x > 0."""
    k = int(math.floor(math.log(x, base)))
    while _power(base, k) >= x:
        k -= 1
    while _power(base, k + 1) < x:
        k += 1
    return k


def _full_cube_mask(grid: DyadicGrid, leaf_mask: np.ndarray) -> np.ndarray:
    """Boolean per cube: every leaf of the cube lies in ``leaf_mask``."""
    counts = _kernels.up_sum(
        grid.embed_leaf_values(leaf_mask.astype(np.float64)),
        grid.child_order,
        grid.level_offsets,
    )
    totals = grid.volumes * grid.n_leaves
    return counts == totals


def superlevel_maximal_cubes(
    grid: DyadicGrid, v, lam: float, *, require_double: bool = False
) -> np.ndarray:
    """Maximal dyadic cubes entirely inside {v > lam}, as sorted cube indices.

    With ``require_double=True`` the list is filtered to cubes that also meet
    {v > 2*lam}.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (grid.n_leaves,):
        raise ValueError(f"expected {grid.n_leaves} leaf values, got shape {v.shape}")
    full = _full_cube_mask(grid, v > lam)
    keep = full.copy()
    keep[1:] &= ~full[grid.parent[1:]]
    if require_double:
        hits = _kernels.up_sum(
            grid.embed_leaf_values((v > 2 * lam).astype(np.float64)),
            grid.child_order,
            grid.level_offsets,
        )
        keep &= hits > 0
    return np.flatnonzero(keep).astype(np.int64)


@dataclass
class WhitneyLayer:
    k: int
    threshold: float
    cubes: np.ndarray  # sorted cube indices
    clamped: np.ndarray  # bool per cube, aligned with `cubes`
    saturated: bool


@dataclass
class WhitneyDecomposition:
    grid: DyadicGrid
    v: np.ndarray
    rho: int
    base: float
    layers: list[WhitneyLayer]
    violations: list[str] = field(default_factory=list)
    fo_max: int = 0
    crowd_max: int = 0

    def layer(self, k: int) -> WhitneyLayer | None:
        for lay in self.layers:
            if lay.k == k:
                return lay
        return None

    def omega_mask(self, k: int) -> np.ndarray:
        """Leaf mask of Omega_k = {v > base**k}, for any integer k."""
        return self.v > _power(self.base, k)

    def to_json_dict(self) -> dict:
        return {
            "rho": self.rho,
            "base": self.base,
            "layers": [
                {
                    "k": lay.k,
                    "threshold": lay.threshold,
                    "saturated": lay.saturated,
                    "cubes": [
                        {
                            "index": int(c),
                            "level": int(self.grid.levels[c]),
                            "coords": list(self.grid.cube(int(c)).coords),
                            "clamped": bool(fl),
                        }
                        for c, fl in zip(lay.cubes, lay.clamped)
                    ],
                }
                for lay in self.layers
            ],
            "violations": list(self.violations),
        }


def whitney_layers(
    grid: DyadicGrid, v, rho: int = DEFAULT_RHO, base: float = 2.0
) -> WhitneyDecomposition:
    """Whitney cube layers of every superlevel set of v, audited at build time.

    For each leaf x in Omega_k, take its topmost ancestor contained in Omega_k
    and descend ``rho`` levels (clamping at the leaf level); the layer is the
    set of cubes so produced. The five structural audits (disjoint cover,
    margin condition, nestedness across layers, finite overlap of the
    rho-fold parents, and neighbor crowding) run on the result and append to
    ``violations``.
    """
    if rho < 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    if base <= 1:
        raise ValueError(f"base must be > 1, got {base}")
    v = np.asarray(v, dtype=np.float64).copy()
    if v.shape != (grid.n_leaves,):
        raise ValueError(f"expected {grid.n_leaves} leaf values, got shape {v.shape}")
    v.flags.writeable = False

    deco = WhitneyDecomposition(grid, v, rho, float(base), [])
    positive = v[v > 0]
    if positive.size == 0:
        return deco
    k_lo = _largest_k_below(base, float(positive.min()))
    k_hi = _largest_k_below(base, float(positive.max()))

    anc = grid.leaf_ancestor_matrix()
    cols = np.arange(grid.n_leaves)
    for k in range(k_lo, k_hi + 1):
        thr = _power(base, k)
        in_mask = v > thr
        if not in_mask.any():
            continue
        if in_mask.all():
            deco.layers.append(
                WhitneyLayer(k, thr, np.array([0], dtype=np.int64), np.array([False]), True)
            )
            continue
        full = _full_cube_mask(grid, in_mask)
        full_anc = full[anc]  # (depth+1, n_leaves), monotone down each column
        j = np.argmax(full_anc, axis=0)  # topmost contained level per leaf
        w_level = np.minimum(j + rho, grid.depth)
        w_idx = anc[w_level, cols]
        sel = np.flatnonzero(in_mask)
        cubes, first = np.unique(w_idx[sel], return_index=True)
        clamped = (j[sel][first] + rho) > grid.depth
        deco.layers.append(WhitneyLayer(k, thr, cubes.astype(np.int64), clamped, False))

    _audit_whitney(deco)
    return deco


def _audit_whitney(deco: WhitneyDecomposition) -> None:
    grid = deco.grid
    rho = deco.rho
    d = grid.d
    fo_cap = 8 * 2 ** ((rho + 1) * d)
    crowd_cap = 2 ** (rho + 2) * 2 ** (rho * d)

    for lay in deco.layers:
        in_mask = deco.omega_mask(lay.k)
        full = _full_cube_mask(grid, in_mask)

        # disjoint cover
        cover = np.zeros(grid.n_leaves, dtype=np.int64)
        masks = []
        for c in lay.cubes:
            m = grid.subtree_leaf_mask(int(c))
            masks.append(m)
            cover += m
        if not (np.all(cover[in_mask] == 1) and np.all(cover[~in_mask] == 0)):
            deco.violations.append(f"disjoint-cover k={lay.k}: cubes do not disjointly cover the set")

        # margin condition: rho-fold parent inside, (rho+1)-fold escapes
        if not lay.saturated:
            for c, fl in zip(lay.cubes, lay.clamped):
                if fl:
                    continue
                lev = int(grid.levels[c])
                up = cube_parent(grid, grid.cube(int(c)), rho)
                if up.is_virtual or not full[grid.index_of(up)]:
                    deco.violations.append(
                        f"margin k={lay.k} cube {int(c)}: {rho}-fold parent not inside"
                    )
                up2 = cube_parent(grid, grid.cube(int(c)), rho + 1)
                if not up2.is_virtual and full[grid.index_of(up2)]:
                    deco.violations.append(
                        f"margin k={lay.k} cube {int(c)}: {rho + 1}-fold parent fails to escape"
                    )

        # finite overlap of rho-fold parents on the set
        overlap = np.zeros(grid.n_leaves, dtype=np.int64)
        parent_masks = []
        for c in lay.cubes:
            up = cube_parent(grid, grid.cube(int(c)), rho)
            pm = (
                np.ones(grid.n_leaves, dtype=bool)
                if up.is_virtual
                else grid.subtree_leaf_mask(grid.index_of(up))
            )
            parent_masks.append(pm)
            overlap += pm
        if in_mask.any():
            fo = int(overlap[in_mask].max())
            deco.fo_max = max(deco.fo_max, fo)
            if fo > fo_cap:
                deco.violations.append(f"finite-overlap k={lay.k}: overlap {fo} exceeds cap {fo_cap}")

        # crowding: same-layer cubes meeting each rho-fold parent
        for pm in parent_masks:
            crowd = sum(1 for m in masks if np.any(m & pm))
            deco.crowd_max = max(deco.crowd_max, crowd)
            if crowd > crowd_cap:
                deco.violations.append(
                    f"crowding k={lay.k}: {crowd} neighbors exceed cap {crowd_cap}"
                )

    # nestedness: strict containment only ever points from deeper layers down
    for a in deco.layers:
        for b in deco.layers:
            if a.k > b.k:
                continue  # violation requires k <= l
            for q in a.cubes:
                lev_q = int(grid.levels[q])
                for qp in b.cubes:
                    lev_p = int(grid.levels[qp])
                    if lev_q <= lev_p:
                        continue
                    anc_q = grid.ancestor_indices(int(q))
                    if anc_q[lev_q - lev_p] == int(qp):
                        deco.violations.append(
                            f"nestedness cube {int(q)} in k={a.k} strictly inside "
                            f"cube {int(qp)} of k={b.k}"
                        )


@dataclass
class CorridorSets:
    whitney: WhitneyDecomposition
    m: int
    sets: dict  # (k, cube index) -> sorted np.ndarray of leaf indices
    violations: list[str] = field(default_factory=list)


def corridor_sets(deco: WhitneyDecomposition, m: int = DEFAULT_M) -> CorridorSets:
    """E_k(Q) = Q intersected with the band between levels k+m-1 and k+m.

    Audited: every corridor sits inside its cube, corridors of one layer are
    pairwise disjoint, and their union is exactly the band clipped to Omega_k.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    grid = deco.grid
    out = CorridorSets(deco, m, {})
    for lay in deco.layers:
        band = deco.omega_mask(lay.k + m - 1) & ~deco.omega_mask(lay.k + m)
        seen = np.zeros(grid.n_leaves, dtype=np.int64)
        for c in lay.cubes:
            mask = grid.subtree_leaf_mask(int(c)) & band
            seen += mask
            out.sets[(lay.k, int(c))] = np.flatnonzero(mask).astype(np.int64)
        target = band & deco.omega_mask(lay.k)
        if not (np.all(seen[target] == 1) and np.all(seen[~target] == 0)):
            out.violations.append(
                f"corridor k={lay.k}: union of E_k(Q) differs from the clipped band"
            )
    return out


@dataclass
class ClassifiedCube:
    k: int
    cube: int
    cls: int  # 1, 2, or 3
    corridor: np.ndarray  # leaf indices
    alpha: float
    beta: float
    omega_corridor: float
    omega_cube: float


@dataclass
class ClassifiedDecomposition:
    whitney: WhitneyDecomposition
    eta: float
    m: int
    entries: list[ClassifiedCube]
    violations: list[str] = field(default_factory=list)
    key_margin_min: float = math.inf  # min (alpha+beta)/(thr * omega(E)) observed

    def entry(self, k: int, cube: int) -> ClassifiedCube | None:
        for e in self.entries:
            if e.k == k and e.cube == cube:
                return e
        return None

    def to_json_dict(self) -> dict:
        grid = self.whitney.grid
        per_layer: dict[int, list] = {lay.k: [] for lay in self.whitney.layers}
        for e in self.entries:
            per_layer[e.k].append(
                {
                    "index": e.cube,
                    "level": int(grid.levels[e.cube]),
                    "coords": list(grid.cube(e.cube).coords),
                    "class": e.cls,
                    "corridor_leaves": e.corridor.tolist(),
                    "alpha": e.alpha,
                    "beta": e.beta,
                }
            )
        return {
            "eta": self.eta,
            "m": self.m,
            "rho": self.whitney.rho,
            "base": self.whitney.base,
            "layers": [
                {"k": k, "cubes": cubes} for k, cubes in sorted(per_layer.items())
            ],
            "violations": list(self.whitney.violations) + list(self.violations),
        }


def classify_cubes(
    deco: WhitneyDecomposition,
    f,
    sigma: Measure,
    omega: Measure,
    tau: CubeWeights,
    eta: float = DEFAULT_ETA,
    m: int = DEFAULT_M,
) -> ClassifiedDecomposition:
    """Three-way classification of the layer cubes, with the key inequality audit.

    Class 1: the corridor carries at most an eta fraction of the cube's omega
    mass. Otherwise the pairing of f against the inward localization of the
    corridor's omega mass over the cube's parent is split into the part
    outside Omega_{k+m} (alpha) and the part inside (beta): class 2 when
    alpha > beta, class 3 when not. Audited: threshold * omega(E_k(Q)) never
    exceeds alpha + beta, corridors for a fixed cube are disjoint across
    layers, and a fixed cube is non-class-1 in at most ceil(1/eta) layers.
    """
    if not (0.0 < eta < 1.0):
        raise ValueError(f"eta must be in (0,1), got {eta}")
    grid = deco.grid
    f = np.asarray(f, dtype=np.float64)
    corridors = corridor_sets(deco, m)
    out = ClassifiedDecomposition(deco, eta, m, [])
    out.violations.extend(corridors.violations)

    for lay in deco.layers:
        above = deco.omega_mask(lay.k + m)
        for c in lay.cubes:
            c = int(c)
            leaves = corridors.sets[(lay.k, c)]
            e_mask = np.zeros(grid.n_leaves, dtype=bool)
            e_mask[leaves] = True
            w_e = float(omega.leaf_mass[leaves].sum())
            w_q = float(omega.cube_mass[c])

            up = cube_parent(grid, grid.cube(c), 1)
            dom = (
                np.ones(grid.n_leaves, dtype=bool)
                if up.is_virtual
                else grid.subtree_leaf_mask(grid.index_of(up))
            )
            t_in = apply_T_restricted(tau, omega.with_leaf_mask(e_mask), up, "in")
            integrand = f * t_in * sigma.leaf_mass
            alpha = float(integrand[dom & ~above].sum())
            beta = float(integrand[dom & above].sum())

            if w_e <= eta * w_q:
                cls = 1
            elif alpha > beta:
                cls = 2
            else:
                cls = 3
            out.entries.append(
                ClassifiedCube(lay.k, c, cls, leaves, alpha, beta, w_e, w_q)
            )

            lhs = lay.threshold * w_e
            rhs = alpha + beta
            if lhs > rhs * (1 + 1e-9):
                out.violations.append(
                    f"key inequality k={lay.k} cube {c}: {lhs!r} > alpha+beta={rhs!r}"
                )
            if lhs > 0:
                out.key_margin_min = min(out.key_margin_min, rhs / lhs)

    # corridor disjointness in k for a fixed cube, and the occurrence bound
    by_cube: dict[int, list[ClassifiedCube]] = {}
    for e in out.entries:
        by_cube.setdefault(e.cube, []).append(e)
    many_cap = math.ceil(1.0 / eta)
    for c, entries in by_cube.items():
        seen = np.zeros(grid.n_leaves, dtype=np.int64)
        for e in entries:
            seen[e.corridor] += 1
        if seen.max(initial=0) > 1:
            out.violations.append(f"corridors of cube {c} overlap across layers")
        hot = sum(1 for e in entries if e.cls != 1)
        if hot > many_cap:
            out.violations.append(
                f"layer-count cube {c}: non-class-1 in {hot} layers, cap {many_cap}"
            )
    return out


@dataclass
class NeighborSets:
    k: int
    cube: int
    neighbors: np.ndarray  # same-layer cubes meeting the parent
    refined: np.ndarray  # layer k+m cubes meeting the parent
    violations: list[str] = field(default_factory=list)


def neighbor_sets(
    deco: WhitneyDecomposition,
    cube,
    k: int,
    m: int = DEFAULT_M,
    tau: CubeWeights | None = None,
    omega: Measure | None = None,
) -> NeighborSets:
    """Same-layer neighbors and layer-(k+m) refinements meeting the cube's parent.

    Audited: every refinement cube sits inside the parent; the neighbor count
    respects the crowding cap; and, when ``tau`` and ``omega`` are supplied,
    the inward localization of the corridor's omega mass is exactly constant
    on every refinement cube.
    """
    grid = deco.grid
    lay = deco.layer(k)
    q = grid.index_of(cube)
    if lay is None or q not in set(int(c) for c in lay.cubes):
        raise ValueError(f"cube {q} is not in layer k={k}")
    up = cube_parent(grid, grid.cube(q), 1)
    up_mask = (
        np.ones(grid.n_leaves, dtype=bool)
        if up.is_virtual
        else grid.subtree_leaf_mask(grid.index_of(up))
    )
    out = NeighborSets(k, q, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))

    crowd_cap = 2 ** (deco.rho + 2) * 2 ** (deco.rho * grid.d)
    nbr = [int(c) for c in lay.cubes if np.any(grid.subtree_leaf_mask(int(c)) & up_mask)]
    out.neighbors = np.array(sorted(nbr), dtype=np.int64)
    if out.neighbors.size > crowd_cap:
        out.violations.append(
            f"neighbor count {out.neighbors.size} exceeds cap {crowd_cap} at k={k}"
        )

    lay_hi = deco.layer(k + m)
    if lay_hi is not None:
        ref = [
            int(c)
            for c in lay_hi.cubes
            if np.any(grid.subtree_leaf_mask(int(c)) & up_mask)
        ]
        out.refined = np.array(sorted(ref), dtype=np.int64)
        for r in out.refined:
            if not np.all(up_mask[grid.subtree_leaf_mask(int(r))]):
                out.violations.append(
                    f"refinement cube {int(r)} at k+m={k + m} is not inside the parent of {q}"
                )

    if tau is not None and omega is not None and out.refined.size:
        band = deco.omega_mask(k + m - 1) & ~deco.omega_mask(k + m)
        e_mask = grid.subtree_leaf_mask(q) & band
        t_in = apply_T_restricted(tau, omega.with_leaf_mask(e_mask), up, "in")
        for r in out.refined:
            vals = t_in[grid.subtree_leaf_mask(int(r))]
            if vals.size and not np.all(vals == vals[0]):
                out.violations.append(
                    f"refinement-constant localization not constant on refinement cube {int(r)}"
                )
    return out


@dataclass
class OccurrenceAudit:
    counts: dict  # refinement cube index -> number of (Q, k) class-3 pairs
    cap: float
    max_count: int
    violations: list[str] = field(default_factory=list)


def occurrence_audit(
    classified: ClassifiedDecomposition, cap_constant: float | None = None
) -> OccurrenceAudit:
    """How often each refinement cube is hit by class-3 pairs, against the cap.

    The cap is cap_constant / eta with cap_constant defaulting to
    64 * 2**(rho*d) * (m+2).
    """
    deco = classified.whitney
    grid = deco.grid
    m = classified.m
    if cap_constant is None:
        cap_constant = 64.0 * 2 ** (deco.rho * grid.d) * (m + 2)
    cap = cap_constant / classified.eta
    counts: dict[int, int] = {}
    for e in classified.entries:
        if e.cls != 3:
            continue
        ns = neighbor_sets(deco, e.cube, e.k, m)
        for r in ns.refined:
            counts[int(r)] = counts.get(int(r), 0) + 1
    out = OccurrenceAudit(counts, cap, max(counts.values(), default=0))
    if out.max_count > cap:
        out.violations.append(f"occurrence count {out.max_count} exceeds cap {cap}")
    return out


@dataclass
class PrincipalForest:
    grid: DyadicGrid
    f: np.ndarray
    sigma: Measure
    cubes: np.ndarray  # sorted principal cube indices
    gamma: dict  # seed index -> governing principal index
    averages: dict  # principal index -> sigma-average of f
    skipped: list[int] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "principal": [
                {
                    "index": int(c),
                    "level": int(self.grid.levels[c]),
                    "coords": list(self.grid.cube(int(c)).coords),
                    "average": self.averages[int(c)],
                }
                for c in self.cubes
            ],
            "gamma": {str(k): int(v) for k, v in sorted(self.gamma.items())},
            "skipped": [int(s) for s in self.skipped],
            "violations": list(self.violations),
        }


def principal_cubes(f, sigma: Measure, seeds) -> PrincipalForest:
    """Stopping-time corona over the seed cubes: averages double down each chain.

    Maximal seeds enter the family; below a member G, the maximal seeds whose
    sigma-average of f exceeds twice that of G enter in turn. Gamma maps every
    usable seed to its minimal containing member. Seeds with zero sigma mass
    are skipped and recorded. Audited: the governing average dominates half
    the seed's average, and averages strictly double down every chain.
    """
    grid = sigma.grid
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("principal cubes require f >= 0")
    seed_idx = sorted({grid.index_of(s) for s in seeds})
    skipped = [i for i in seed_idx if sigma.cube_mass[i] == 0]
    usable = [i for i in seed_idx if sigma.cube_mass[i] > 0]
    forest = PrincipalForest(grid, f.copy(), sigma, np.empty(0, dtype=np.int64), {}, {})
    forest.skipped = skipped
    if not usable:
        return forest

    seed_set = set(usable)
    avg = {i: weighted_avg(f, sigma, i) for i in usable}

    def strict_seed_ancestors(i: int):
        return [a for a in grid.ancestor_indices(i, include_self=False) if a in seed_set]

    maximal_seeds = [i for i in usable if not strict_seed_ancestors(i)]
    family: list[int] = []
    queue = list(maximal_seeds)
    while queue:
        g = queue.pop()
        family.append(g)
        bar = 2.0 * avg[g]
        inside = [
            i
            for i in usable
            if i != g
            and int(grid.levels[i]) > int(grid.levels[g])
            and grid.ancestor_indices(i)[int(grid.levels[i]) - int(grid.levels[g])] == g
            and avg[i] > bar
        ]
        chosen = [
            i
            for i in inside
            if not any(a in inside for a in grid.ancestor_indices(i, include_self=False))
        ]
        queue.extend(chosen)

    fam_set = set(family)
    forest.cubes = np.array(sorted(family), dtype=np.int64)
    forest.averages = {i: avg[i] for i in family}
    for i in usable:
        for a in grid.ancestor_indices(i):
            if a in fam_set:
                forest.gamma[i] = a
                break

    for i in usable:
        g = forest.gamma.get(i)
        if g is None:
            forest.violations.append(f"seed {i} has no governing principal cube")
            continue
        if avg[i] > 2.0 * avg[g] * (1 + 1e-12):
            forest.violations.append(
                f"principal-domination seed {i}: average {avg[i]!r} exceeds twice that of {g}"
            )
    fam_sorted = sorted(family, key=lambda i: int(grid.levels[i]))
    for gi in fam_sorted:
        for gj in fam_sorted:
            li, lj = int(grid.levels[gi]), int(grid.levels[gj])
            if lj <= li:
                continue
            if grid.ancestor_indices(gj)[lj - li] != gi:
                continue
            if not (2.0 * avg[gi] < avg[gj]):
                forest.violations.append(
                    f"principal-doubling chain {gj} inside {gi}: averages fail to double"
                )
    return forest


def geometric_sum_audit(forest: PrincipalForest) -> float:
    """Sup over leaves of (sum of principal averages at the leaf) / maximal function.

    The doubling property makes each leaf's sum a geometric series dominated
    by twice its largest term, so the returned ratio should never exceed 2.
    """
    grid = forest.grid
    if forest.cubes.size == 0:
        return 0.0
    numer = np.zeros(grid.n_leaves)
    for c in forest.cubes:
        numer[grid.subtree_leaf_mask(int(c))] += forest.averages[int(c)]
    mx = maximal(forest.f, forest.sigma)
    bad = (numer > 0) & (mx == 0)
    if np.any(bad):
        raise RuntimeError("positive principal sum where the maximal function vanishes")
    ok = mx > 0
    if not np.any(ok):
        return 0.0
    return float((numer[ok] / mx[ok]).max())


def carleson_of_principal(forest: PrincipalForest, p: float) -> float:
    """Ratio of the principal-cube Carleson sum to the p-th power of ||f||."""
    if p <= 1:
        raise ValueError(f"need p > 1, got {p}")
    denom = lp_norm(forest.f, forest.sigma, p) ** p
    if denom == 0:
        return 0.0
    numer = sum(
        float(forest.sigma.cube_mass[int(c)]) * forest.averages[int(c)] ** p
        for c in forest.cubes
    )
    return numer / denom


def halving_chain(omega: Measure, x, q0) -> list[int]:
    """Descending cube chain along x where the omega mass at least halves per step.

    Each successor is the largest cube on x's ancestor line, strictly inside
    the current cube, whose mass is at most half the current mass; the chain
    stops at the leaf or when no such cube exists.
    """
    grid = omega.grid
    xi = grid.index_of(x)
    if int(grid.levels[xi]) != grid.depth:
        raise ValueError("x must be a leaf cube")
    q0i = grid.index_of(q0)
    line = grid.ancestor_indices(xi)  # deepest first
    if q0i not in line:
        raise ValueError("x does not lie in the starting cube")
    if omega.cube_mass[q0i] == 0:
        raise ValueError("starting cube has zero mass")
    start = line.index(q0i)
    line = line[: start + 1][::-1]  # q0 first, leaf last
    chain = [q0i]
    pos = 0
    while pos < len(line) - 1:
        cur_mass = float(omega.cube_mass[line[pos]])
        nxt = None
        for t in range(pos + 1, len(line)):
            if float(omega.cube_mass[line[t]]) <= 0.5 * cur_mass:
                nxt = t
                break
        if nxt is None:
            break
        chain.append(line[nxt])
        pos = nxt
    return chain


@dataclass
class MaxPrincipleViolation:
    k: int
    cube: int
    leaf: int
    kind: str  # "out-local", "out-far", or "in-lower"
    lhs: float
    rhs: float


def max_principle_audit(
    deco: WhitneyDecomposition,
    f,
    sigma: Measure,
    tau: CubeWeights,
    m: int = DEFAULT_M,
    rtol: float = 1e-9,
) -> list[MaxPrincipleViolation]:
    """On each layer cube: both outward contributions stay below the threshold,
    and the inward localization clears it on the corridor. Empty list expected.
    """
    grid = deco.grid
    f = np.asarray(f, dtype=np.float64)
    fs = Measure.product(f, sigma)
    corridors = corridor_sets(deco, m)
    violations: list[MaxPrincipleViolation] = []
    for lay in deco.layers:
        thr = lay.threshold
        for c in lay.cubes:
            c = int(c)
            q_leaves = np.flatnonzero(grid.subtree_leaf_mask(c))
            up1 = cube_parent(grid, grid.cube(c), 1)
            up2 = cube_parent(grid, grid.cube(c), 2)
            up2_mask = (
                np.ones(grid.n_leaves, dtype=bool)
                if up2.is_virtual
                else grid.subtree_leaf_mask(grid.index_of(up2))
            )
            out_local = apply_T_restricted(tau, fs.with_leaf_mask(up2_mask), up2, "out")
            out_far = apply_T(tau, fs.with_leaf_mask(~up2_mask))
            for leaf in q_leaves:
                if out_local[leaf] > thr * (1 + rtol):
                    violations.append(
                        MaxPrincipleViolation(
                            lay.k, c, int(leaf), "out-local", float(out_local[leaf]), thr
                        )
                    )
                if out_far[leaf] > thr * (1 + rtol):
                    violations.append(
                        MaxPrincipleViolation(
                            lay.k, c, int(leaf), "out-far", float(out_far[leaf]), thr
                        )
                    )
            corridor = corridors.sets[(lay.k, c)]
            if corridor.size:
                t_in = apply_T_restricted(tau, fs, up1, "in")
                for leaf in corridor:
                    if t_in[leaf] < thr * (1 - rtol):
                        violations.append(
                            MaxPrincipleViolation(
                                lay.k, c, int(leaf), "in-lower", float(t_in[leaf]), thr
                            )
                        )
    return violations


@dataclass
class ProofLabReport:
    n_layers: int
    k_lo: int | None
    k_hi: int | None
    saturated_layers: list[int]
    clamped_cubes: int
    fo_max: int
    crowd_max: int
    class_counts: dict
    key_margin_min: float
    occurrence_max: int
    occurrence_cap: float
    max_principle_violations: int
    principal_count: int
    geometric_ratio: float
    carleson_ratio: float
    carleson_cap: float
    violations: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "k_lo": self.k_lo,
            "k_hi": self.k_hi,
            "saturated_layers": self.saturated_layers,
            "clamped_cubes": self.clamped_cubes,
            "fo_max": self.fo_max,
            "crowd_max": self.crowd_max,
            "class_counts": {str(k): v for k, v in sorted(self.class_counts.items())},
            "key_margin_min": self.key_margin_min,
            "occurrence_max": self.occurrence_max,
            "occurrence_cap": self.occurrence_cap,
            "max_principle_violations": self.max_principle_violations,
            "principal_count": self.principal_count,
            "geometric_ratio": self.geometric_ratio,
            "carleson_ratio": self.carleson_ratio,
            "carleson_cap": self.carleson_cap,
            "violations": self.violations,
        }


def audit_decomposition(
    f,
    sigma: Measure,
    omega: Measure,
    tau: CubeWeights,
    *,
    eta: float = DEFAULT_ETA,
    rho: int = DEFAULT_RHO,
    m: int = DEFAULT_M,
    p: float = 2.0,
    base: float = 2.0,
    seeds=None,
) -> ProofLabReport:
    """Run the full decomposition pipeline on one instance and aggregate audits.

    Builds v = T(f sigma), the Whitney layers, the classification, the
    neighbor/occurrence counts, the maximum-principle check, and a principal
    forest seeded (by default) with all layer cubes. Every violation string
    from every stage lands in one list; an empty list means the instance
    passes everything.
    """
    grid = sigma.grid
    f = np.asarray(f, dtype=np.float64)
    v = apply_T(tau, Measure.product(f, sigma))
    deco = whitney_layers(grid, v, rho, base)
    classified = classify_cubes(deco, f, sigma, omega, tau, eta, m)
    occurrence = occurrence_audit(classified)

    violations = list(deco.violations) + list(classified.violations)
    violations += occurrence.violations
    for e in classified.entries:
        ns = neighbor_sets(deco, e.cube, e.k, m, tau=tau, omega=omega)
        violations += ns.violations

    mp = max_principle_audit(deco, f, sigma, tau, m)
    violations += [
        f"max principle {v.kind} k={v.k} cube={v.cube} leaf={v.leaf}: "
        f"{v.lhs!r} vs {v.rhs!r}"
        for v in mp
    ]

    if seeds is None:
        seeds = sorted({int(c) for lay in deco.layers for c in lay.cubes})
    forest = principal_cubes(f, sigma, seeds) if seeds else None
    if forest is not None:
        violations += forest.violations
        geo = geometric_sum_audit(forest)
        car = carleson_of_principal(forest, p)
    else:
        geo = 0.0
        car = 0.0
    p_conj = p / (p - 1.0)
    car_cap = p_conj**p
    if geo > 2.0 + 1e-9:
        violations.append(f"geometric principal sum ratio {geo!r} exceeds 2")
    if car > car_cap * (1 + 1e-9):
        violations.append(f"principal Carleson ratio {car!r} exceeds {car_cap!r}")

    class_counts: dict[int, int] = {1: 0, 2: 0, 3: 0}
    for e in classified.entries:
        class_counts[e.cls] += 1
    return ProofLabReport(
        n_layers=len(deco.layers),
        k_lo=deco.layers[0].k if deco.layers else None,
        k_hi=deco.layers[-1].k if deco.layers else None,
        saturated_layers=[lay.k for lay in deco.layers if lay.saturated],
        clamped_cubes=int(sum(int(lay.clamped.sum()) for lay in deco.layers)),
        fo_max=deco.fo_max,
        crowd_max=deco.crowd_max,
        class_counts=class_counts,
        key_margin_min=classified.key_margin_min,
        occurrence_max=occurrence.max_count,
        occurrence_cap=occurrence.cap,
        max_principle_violations=len(mp),
        principal_count=0 if forest is None else int(forest.cubes.size),
        geometric_ratio=geo,
        carleson_ratio=car,
        carleson_cap=car_cap,
        violations=violations,
    )
