"""Instance generation, suite execution, and serialization.

An Instance bundles one grid with its two measures, the cube weights, and the
exponent pair; everything downstream (constants, norms, audits) consumes it.
Serialization is canonical JSON — leaf and cube arrays in canonical order,
keys sorted, floats as shortest round-trip decimals — so identical instances
produce identical bytes, and suite reports hash reproducibly.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .constants import (
    carleson_norm,
    compute_testing_report,
    testing_constants_22,
)
from .extremal import (
    AscentOptions,
    carleson_embedding_constant,
    exact_norm_22,
    strong_norm_lower,
    weak_norm_lower,
)
from .grid import DyadicGrid, Exponents, Measure, build_grid
from .operators import CubeWeights
from .prooflab import audit_decomposition

SIGMA_STYLES = ("lognormal", "spikes", "uniform")
TAU_STYLES = ("random", "fractional", "sparse", "root_only")

THREADS_ENV = "TWOWEIGHT_THREADS"


class ConfigError(ValueError):
    """Raised when a generator or suite configuration is invalid."""


@dataclass
class GeneratorConfig:
    d: int = 1
    depth: int = 3
    sigma: str = "lognormal"
    omega: str = "lognormal"
    tau: str = "random"
    alpha: float | None = None
    p: float = 2.0
    q: float = 2.0
    allow_zero_sigma: bool = False

    def validate(self) -> None:
        if self.d < 1 or self.depth < 0:
            raise ConfigError(f"bad grid spec d={self.d}, depth={self.depth}")
        if self.sigma not in SIGMA_STYLES or self.omega not in SIGMA_STYLES:
            raise ConfigError(
                f"measure styles must be one of {SIGMA_STYLES}, "
                f"got sigma={self.sigma!r} omega={self.omega!r}"
            )
        if self.tau not in TAU_STYLES:
            raise ConfigError(f"tau style must be one of {TAU_STYLES}, got {self.tau!r}")
        if self.tau == "fractional":
            if self.alpha is None or not (0.0 < self.alpha < self.d):
                raise ConfigError(f"fractional tau needs 0 < alpha < d, got {self.alpha}")
        try:
            Exponents(self.p, self.q)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def tag(self) -> str:
        bits = [f"d{self.d}D{self.depth}", self.sigma, self.omega, self.tau]
        if self.tau == "fractional":
            bits.append(f"a{self.alpha}")
        bits.append(f"p{self.p}q{self.q}")
        return "-".join(bits)


@dataclass
class Instance:
    grid: DyadicGrid
    sigma: Measure
    omega: Measure
    tau: CubeWeights
    exps: Exponents
    seed: int
    generator: str

    def to_json_dict(self) -> dict:
        return {
            "d": self.grid.d,
            "depth": self.grid.depth,
            "sigma": self.sigma.leaf_mass.tolist(),
            "omega": self.omega.leaf_mass.tolist(),
            "tau": {"rule": self.tau.rule, "values": self.tau.tau.tolist()},
            "p": self.exps.p,
            "q": self.exps.q,
            "seed": self.seed,
            "generator": self.generator,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, data: dict) -> "Instance":
        grid = build_grid(int(data["d"]), int(data["depth"]))
        sigma = Measure(grid, np.array(data["sigma"], dtype=np.float64))
        omega = Measure(grid, np.array(data["omega"], dtype=np.float64))
        t = data["tau"]
        if "values" in t:
            tau = CubeWeights(grid, np.array(t["values"], dtype=np.float64), rule=t.get("rule", "explicit"))
        elif t.get("rule") == "fractional":
            tau = CubeWeights.fractional(grid, float(t["alpha"]))
        else:
            raise ConfigError(f"unrecognized tau serialization: {t!r}")
        return cls(
            grid=grid,
            sigma=sigma,
            omega=omega,
            tau=tau,
            exps=Exponents(float(data["p"]), float(data["q"])),
            seed=int(data["seed"]),
            generator=str(data.get("generator", "")),
        )

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_json_dict(json.loads(text))


def _draw_masses(rng: np.random.Generator, style: str, grid: DyadicGrid, allow_zero: bool) -> np.ndarray:
    vol = grid.volumes[grid.leaf_start :]
    n = grid.n_leaves
    if style == "lognormal":
        return rng.lognormal(0.0, 1.0, n) * vol
    if style == "uniform":
        return rng.uniform(0.1, 2.0, n) * vol
    # spikes: a few heavy leaves over a (possibly zero) floor
    floor = np.zeros(n) if allow_zero else 1e-8 * vol
    k = max(1, n // 8)
    hot = rng.choice(n, size=k, replace=False)
    mass = floor.copy()
    mass[hot] += rng.lognormal(1.0, 1.0, k) * vol[hot] * n / k
    return mass


def _draw_tau(rng: np.random.Generator, cfg: GeneratorConfig, grid: DyadicGrid) -> CubeWeights:
    if cfg.tau == "random":
        return CubeWeights.explicit(grid, rng.uniform(0.0, 1.0, grid.n_cubes))
    if cfg.tau == "fractional":
        return CubeWeights.fractional(grid, cfg.alpha)
    if cfg.tau == "sparse":
        t = np.where(
            rng.uniform(0.0, 1.0, grid.n_cubes) < 0.25,
            rng.uniform(0.0, 2.0, grid.n_cubes),
            0.0,
        )
        return CubeWeights.explicit(grid, t)
    return CubeWeights.root_only(grid)


def gen_instance(cfg: GeneratorConfig, seed: int) -> Instance:
    """Deterministic instance from a generator config and an integer seed."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    grid = build_grid(cfg.d, cfg.depth)
    sigma = Measure(grid, _draw_masses(rng, cfg.sigma, grid, cfg.allow_zero_sigma))
    omega = Measure(grid, _draw_masses(rng, cfg.omega, grid, cfg.allow_zero_sigma))
    tau = _draw_tau(rng, cfg, grid)
    return Instance(
        grid=grid,
        sigma=sigma,
        omega=omega,
        tau=tau,
        exps=Exponents(cfg.p, cfg.q),
        seed=int(seed),
        generator=cfg.tag(),
    )


def instance_f(inst: Instance) -> np.ndarray:
    """The deterministic test function attached to an instance (for audits)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(inst.seed), 0x5F]))
    return rng.lognormal(0.0, 1.0, inst.grid.n_leaves)


@dataclass
class SuiteConfig:
    generators: list = field(default_factory=lambda: [GeneratorConfig()])
    n: int = 50
    seed: int = 0
    eta: float = 0.25
    rho: int = 1
    m: int = 5
    ratio_cap: float = 16.0
    threads: int | None = None
    out_dir: str | None = None
    ascent: AscentOptions | None = None
    run_audits: bool = True

    def resolve_threads(self) -> int:
        if self.threads is not None:
            return max(1, self.threads)
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError as exc:
                raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        return min(8, os.cpu_count() or 1)


@dataclass
class SuiteReport:
    rows: list
    violations: list  # each: {"check", "detail", "instance" (serialized)}
    aggregates: dict
    digest: str

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1


def _row_for_instance(inst: Instance, cfg: SuiteConfig) -> tuple[dict, list]:
    t0 = time.perf_counter()
    row: dict = {
        "seed": inst.seed,
        "generator": inst.generator,
        "d": inst.grid.d,
        "depth": inst.grid.depth,
        "p": inst.exps.p,
        "q": inst.exps.q,
    }
    violations: list = []

    def flag(check: str, detail: str) -> None:
        violations.append({"check": check, "detail": detail, "instance": inst.to_json_dict()})

    rep = compute_testing_report(inst.tau, inst.sigma, inst.omega, inst.exps)
    row["local"] = rep.loc
    row["local_dual"] = rep.loc_dual
    row["global"] = rep.glo
    row["global_dual"] = rep.glo_dual

    car, _ = carleson_norm(inst.tau)
    row["carleson"] = car

    opts = cfg.ascent or AscentOptions(restarts=8, max_iter=120, seed=inst.seed)
    cet = carleson_embedding_constant(inst.tau, inst.exps.p, opts=opts)
    row["cet"] = cet.value
    if car ** (1.0 / inst.exps.p) > cet.value * (1 + 1e-12):
        flag(
            "cet-lower",
            f"carleson^(1/p)={car ** (1.0 / inst.exps.p)!r} exceeds C_p={cet.value!r}",
        )

    strong = strong_norm_lower(inst.tau, inst.sigma, inst.omega, inst.exps, opts)
    weak = weak_norm_lower(inst.tau, inst.sigma, inst.omega, inst.exps, opts)
    row["strong"] = strong.value
    row["weak"] = weak.value
    row["strong_kind"] = strong.kind
    if weak.value > strong.value * (1 + 1e-12):
        flag("weak-le-strong", f"weak={weak.value!r} exceeds strong={strong.value!r}")

    if inst.exps.is_l2:
        c1, c2 = testing_constants_22(inst.tau, inst.sigma, inst.omega)
        c3 = exact_norm_22(inst.tau, inst.sigma, inst.omega).value
        row["c1"] = c1
        row["c2"] = c2
        row["c3"] = c3
        if max(c1, c2) > c3 * (1 + 1e-8):
            flag("necessity", f"max(C1,C2)={max(c1, c2)!r} exceeds C3={c3!r}")
        denom = c1 + c2
        ratio = math.inf if (denom == 0 and c3 > 0) else (c3 / denom if denom else 0.0)
        row["ratio_sufficiency"] = ratio
        if ratio > cfg.ratio_cap:
            flag("sufficiency-cap", f"C3/(C1+C2)={ratio!r} exceeds cap {cfg.ratio_cap}")
        for name in ("local", "local_dual", "global", "global_dual"):
            if row[name] > c3 * (1 + 1e-8):
                flag("testing-le-norm", f"{name}={row[name]!r} exceeds C3={c3!r}")

    if cfg.run_audits:
        f = instance_f(inst)
        audit = audit_decomposition(
            f,
            inst.sigma,
            inst.omega,
            inst.tau,
            eta=cfg.eta,
            rho=cfg.rho,
            m=cfg.m,
            p=inst.exps.p,
        )
        row["audit_clean"] = audit.clean
        row["audit_violations"] = len(audit.violations)
        row["fo_max"] = audit.fo_max
        row["occurrence_max"] = audit.occurrence_max
        row["geometric_ratio"] = audit.geometric_ratio
        row["carleson_principal_ratio"] = audit.carleson_ratio
        for v in audit.violations:
            flag("prooflab", v)

    row["time_total"] = time.perf_counter() - t0
    return row, violations


def run_suite(cfg: SuiteConfig) -> SuiteReport:
    """Run every generator n times, assert the exact directions, write reports.

    Rows are computed in parallel worker threads but assembled in instance
    order, so reports are deterministic for a fixed config and seed (timing
    fields excluded from the digest).
    """
    for g in cfg.generators:
        g.validate()
    total = cfg.n * len(cfg.generators)
    report = SuiteReport([], [], {}, "")
    if total:
        seeds = np.random.SeedSequence(cfg.seed).generate_state(total, dtype=np.uint64)
        instances = [
            gen_instance(g, int(seeds[i * cfg.n + j]))
            for i, g in enumerate(cfg.generators)
            for j in range(cfg.n)
        ]
        with concurrent.futures.ThreadPoolExecutor(cfg.resolve_threads()) as pool:
            results = list(pool.map(lambda inst: _row_for_instance(inst, cfg), instances))
        for row, viol in results:
            report.rows.append(row)
            report.violations.extend(viol)

    report.aggregates = _aggregate(report.rows, report.violations)
    report.digest = rows_digest(report.rows)
    report.aggregates["digest"] = report.digest
    if cfg.out_dir:
        _write_reports(cfg.out_dir, report)
    return report


def rows_digest(rows: list) -> str:
    """SHA-256 over the canonical row serialization, timing keys excluded."""
    stripped = [
        {k: v for k, v in row.items() if not k.startswith("time_")} for row in rows
    ]
    blob = json.dumps(stripped, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _aggregate(rows: list, violations: list) -> dict:
    agg: dict = {"n_rows": len(rows), "n_violations": len(violations)}
    def col(name):
        return [r[name] for r in rows if name in r and r[name] is not None]

    ratios = [r for r in col("ratio_sufficiency") if math.isfinite(r)]
    if ratios:
        agg["ratio_sufficiency_max"] = max(ratios)
        agg["ratio_sufficiency_min"] = min(ratios)
    for name in ("geometric_ratio", "carleson_principal_ratio", "fo_max", "occurrence_max"):
        vals = col(name)
        if vals:
            agg[f"{name}_max"] = max(vals)
    dirty = [r["seed"] for r in rows if r.get("audit_clean") is False]
    agg["audit_dirty_seeds"] = dirty
    return agg


def _write_reports(out_dir: str, report: SuiteReport) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "rows.jsonl"), "w") as fh:
        for row in report.rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    with open(os.path.join(out_dir, "aggregates.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key in sorted(report.aggregates):
            writer.writerow([key, report.aggregates[key]])
    for i, viol in enumerate(report.violations):
        path = os.path.join(out_dir, f"counterexample_{i}.json")
        with open(path, "w") as fh:
            json.dump(viol, fh, sort_keys=True, indent=2)
