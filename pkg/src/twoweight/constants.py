"""Carleson norms and two-weight testing constants.

The local testing constant tests the operator on indicators of cubes with the
summation restricted inside the cube; the global variant restricts it outside.
Both come with duals obtained by swapping the measure pair and conjugating the
exponents. At p = q = 2 the quadratic indicator-testing constants coincide
with the local constants, which the test-suite asserts as an identity.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import CubeRef, Exponents, Measure
from .operators import CubeWeights

WeightedCarlesonResult = namedtuple("WeightedCarlesonResult", "value argmax degenerate")


def carleson_norm(tau: CubeWeights):
    """sup_Q |Q|^-1 sum_{R <= Q} tau_R, with its argmax cube.

    Ties break to the smallest canonical index.
    """
    grid = tau.grid
    subtree = _kernels.up_sum(tau.tau, grid.child_order, grid.level_offsets)
    vals = subtree / grid.volumes
    best = int(np.argmax(vals))
    return float(vals[best]), grid.cube(best)


def weighted_carleson_norm(tau: CubeWeights, omega: Measure) -> WeightedCarlesonResult:
    """sup_Q omega(Q)^-1 sum_{R <= Q} tau_R over cubes with omega(Q) > 0.

    A cube with omega(Q) == 0 but positive subtree tau-mass makes the constant
    degenerate: the result carries value +inf, that cube, and a flag.
    """
    grid = tau.grid
    subtree = _kernels.up_sum(tau.tau, grid.child_order, grid.level_offsets)
    dead = (omega.cube_mass == 0) & (subtree > 0)
    if np.any(dead):
        first = int(np.argmax(dead))
        return WeightedCarlesonResult(math.inf, grid.cube(first), True)
    ok = omega.cube_mass > 0
    if not np.any(ok):
        return WeightedCarlesonResult(0.0, None, False)
    vals = np.where(ok, subtree / np.where(ok, omega.cube_mass, 1.0), -np.inf)
    best = int(np.argmax(vals))
    return WeightedCarlesonResult(float(vals[best]), grid.cube(best), False)


def _restricted_in_function(grid, contrib, subtree_mask):
    masked = np.where(subtree_mask, contrib, 0.0)
    return _kernels.down_sum(masked, grid.parent, grid.level_offsets)[grid.leaf_start :]


def local_testing(tau: CubeWeights, sigma: Measure, omega: Measure, exps: Exponents):
    """sup_R omega(R)^(-1/q') * || T^in_R(omega 1_R) ||_{L^p'(sigma)}.

    Returns (value, argmax cube). Cubes with omega(R) == 0 contribute 0 and
    are skipped; the sup of an empty family is 0 with argmax None.
    """
    return _testing_sweep(tau, sigma, omega, exps, mode="in")


def global_testing(tau: CubeWeights, sigma: Measure, omega: Measure, exps: Exponents):
    """sup_R omega(R)^(-1/q') * || T^out_R(omega 1_R) ||_{L^p'(sigma)}.

    Equivalence with the norm is only claimed for p < q; at p == q the value
    is still well-defined and reported (callers may attach an advisory).
    """
    return _testing_sweep(tau, sigma, omega, exps, mode="out")


def _testing_sweep(tau, sigma, omega, exps, mode):
    grid = tau.grid
    pc = exps.p_conj
    qc = exps.q_conj
    # E_Q(omega 1_R) = omega(Q)/|Q| for Q <= R, and omega(R)/|Q| for Q >= R
    contrib_in = tau.tau * omega.cube_mass / grid.volumes
    best_val = 0.0
    best_cube = None
    for r in range(grid.n_cubes):
        w_r = float(omega.cube_mass[r])
        if w_r <= 0.0:
            continue
        if mode == "in":
            t = _restricted_in_function(grid, contrib_in, grid.subtree_cube_mask(r))
        else:
            chain = grid.ancestor_indices(r)
            masked = np.zeros(grid.n_cubes)
            masked[chain] = tau.tau[chain] * w_r / grid.volumes[chain]
            t = _kernels.down_sum(masked, grid.parent, grid.level_offsets)[grid.leaf_start :]
        norm = float(np.sum(t**pc * sigma.leaf_mass) ** (1.0 / pc))
        val = w_r ** (-1.0 / qc) * norm
        if val > best_val:
            best_val = val
            best_cube = grid.cube(r)
    return best_val, best_cube


def strengthened_local_testing(tau: CubeWeights, sigma: Measure, omega: Measure, exps: Exponents):
    """Variant with the full operator: sup_R omega(R)^(-1/q') ||T(omega 1_R)||_{L^p'(sigma)}.

    Dominates the local constant term by term (the in-localization drops
    nonnegative summands).
    """
    grid = tau.grid
    pc, qc = exps.p_conj, exps.q_conj
    best_val, best_cube = 0.0, None
    for r in range(grid.n_cubes):
        w_r = float(omega.cube_mass[r])
        if w_r <= 0.0:
            continue
        restricted = omega.with_leaf_mask(grid.subtree_leaf_mask(r))
        contrib = tau.tau * restricted.cube_mass / grid.volumes
        t = _kernels.down_sum(contrib, grid.parent, grid.level_offsets)[grid.leaf_start :]
        val = w_r ** (-1.0 / qc) * float(np.sum(t**pc * sigma.leaf_mass) ** (1.0 / pc))
        if val > best_val:
            best_val, best_cube = val, grid.cube(r)
    return best_val, best_cube


def testing_constants_22(tau: CubeWeights, sigma: Measure, omega: Measure):
    """The two quadratic indicator-testing constants (C1, C2).

    C1^2 = sup_R sigma(R)^-1 int_R [sum_{Q <= R} tau_Q 1_Q E_Q(sigma)]^2 domega
    and C2 swaps sigma and omega. Computed by direct enumeration; equals the
    corresponding local testing constant at p = q = 2.
    """
    c1 = _quadratic_sweep(tau, sigma, omega)
    c2 = _quadratic_sweep(tau, omega, sigma)
    return c1, c2


def _quadratic_sweep(tau, inner: Measure, against: Measure) -> float:
    grid = tau.grid
    contrib = tau.tau * inner.cube_mass / grid.volumes
    best = 0.0
    for r in range(grid.n_cubes):
        m_r = float(inner.cube_mass[r])
        if m_r <= 0.0:
            continue
        t = _restricted_in_function(grid, contrib, grid.subtree_cube_mask(r))
        val = float(np.sum(t * t * against.leaf_mass) / m_r)
        if val > best:
            best = val
    return math.sqrt(best)


@dataclass
class TestingReport:
    """All four testing constants for one (tau, sigma, omega, exps) instance."""

    p: float
    q: float
    loc: float
    loc_argmax: CubeRef | None
    loc_dual: float
    loc_dual_argmax: CubeRef | None
    glo: float
    glo_argmax: CubeRef | None
    glo_dual: float
    glo_dual_argmax: CubeRef | None
    glo_advisory: bool = field(default=False)

    def to_dict(self) -> dict:
        def cube_id(c):
            return None if c is None else {"level": c.level, "coords": list(c.coords)}

        return {
            "p": self.p,
            "q": self.q,
            "local": self.loc,
            "local_argmax": cube_id(self.loc_argmax),
            "local_dual": self.loc_dual,
            "local_dual_argmax": cube_id(self.loc_dual_argmax),
            "global": self.glo,
            "global_argmax": cube_id(self.glo_argmax),
            "global_dual": self.glo_dual,
            "global_dual_argmax": cube_id(self.glo_dual_argmax),
            "global_advisory_p_eq_q": self.glo_advisory,
        }


def compute_testing_report(
    tau: CubeWeights, sigma: Measure, omega: Measure, exps: Exponents
) -> TestingReport:
    """Local and global testing constants plus their duals in one report.

    The dual constants swap (sigma, omega) and use the conjugate pair (q', p').
    When p == q the global constants carry an advisory flag: the global-to-norm
    equivalence is not claimed on the diagonal.
    """
    dual = exps.dual()
    loc, loc_arg = local_testing(tau, sigma, omega, exps)
    locd, locd_arg = local_testing(tau, omega, sigma, dual)
    glo, glo_arg = global_testing(tau, sigma, omega, exps)
    glod, glod_arg = global_testing(tau, omega, sigma, dual)
    return TestingReport(
        p=exps.p,
        q=exps.q,
        loc=loc,
        loc_argmax=loc_arg,
        loc_dual=locd,
        loc_dual_argmax=locd_arg,
        glo=glo,
        glo_argmax=glo_arg,
        glo_dual=glod,
        glo_dual_argmax=glod_arg,
        glo_advisory=(exps.p == exps.q),
    )
