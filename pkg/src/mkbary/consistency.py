"""Distributions over measures, the lifted transport distance, and the
statistical experiment harnesses.

The lifted distance treats measures themselves as atoms: transporting a
finitely supported distribution P onto P' costs J between the atom
measures, minimized over outer couplings.  The law-of-large-numbers
harness draws i.i.d. atom measures, solves empirical barycenters on a
shared constraint set, and tracks their distance to the population
barycenter; the perturbation harness jitters the atom measures with a
fixed direction field scaled by delta so both tracks are deterministic.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import numpy as np

from .barycenter import (
    BarycenterProblem,
    Constraint,
    barycenter_fixed_support,
    barycenter_free_support,
)
from .costs import CostSpec
from .measures import DiscreteMeasure, GroundSpace, canonicalize, measure_from_json
from .transport import solve_lp_matrix, transport_cost


@dataclass(frozen=True)
class MetaDistribution:
    """Finitely supported probability distribution whose atoms are measures."""

    atoms: tuple  # of DiscreteMeasure
    probs: np.ndarray

    @staticmethod
    def make(measures, probs) -> "MetaDistribution":
        if len(measures) == 0:
            raise ValueError("need at least one atom measure")
        p = np.array(probs, dtype=float)
        if np.any(p <= 0):
            raise ValueError("probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}")
        space = measures[0].space
        merged: list = []
        for m, pi in zip(measures, p):
            if not m.space.same_as(space):
                raise ValueError("atom measures must share a ground space")
            for idx, (m2, p2) in enumerate(merged):
                if m.same_as(m2):
                    merged[idx] = (m2, p2 + pi)
                    break
            else:
                merged.append((m, pi))
        ms, ps = zip(*merged)
        ps = np.array(ps)
        return MetaDistribution(atoms=tuple(ms), probs=ps / ps.sum())

    @staticmethod
    def dirac(measure: DiscreteMeasure) -> "MetaDistribution":
        return MetaDistribution.make([measure], [1.0])

    @property
    def space(self) -> GroundSpace:
        return self.atoms[0].space


def meta_distance(P: MetaDistribution, Q: MetaDistribution, cost: CostSpec) -> float:
    """Outer transport cost between distributions of measures, ground cost J."""
    if not P.space.same_as(Q.space):
        raise ValueError("meta-distributions live on different ground spaces")
    M = np.array(
        [[transport_cost(a, b, cost) for b in Q.atoms] for a in P.atoms]
    )
    _, value, _, _, _ = solve_lp_matrix(M, P.probs, Q.probs)
    return value


def generate_random_measure(
    seed: int, box_lo, box_hi, max_atoms: int = 5
) -> DiscreteMeasure:
    """Deterministic random measure: atom count uniform in [1, max_atoms],
    atoms uniform in the box, weights a flat simplex draw."""
    rng = np.random.default_rng(seed)
    lo = np.atleast_1d(np.asarray(box_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(box_hi, dtype=float))
    d = len(lo)
    n = int(rng.integers(1, max_atoms + 1))
    atoms = rng.uniform(lo, hi, size=(n, d))
    weights = rng.dirichlet(np.ones(n))
    return canonicalize(atoms, weights, GroundSpace.euclidean(d))


def random_population(
    count: int, seed: int, box_lo, box_hi, max_atoms: int = 5
) -> MetaDistribution:
    """Uniform meta-distribution over ``count`` generator draws."""
    measures = [
        generate_random_measure(seed * 1000 + i, box_lo, box_hi, max_atoms)
        for i in range(count)
    ]
    return MetaDistribution.make(measures, np.full(count, 1.0 / count))


# ---------------------------------------------------------------------------
# Experiment harnesses
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    config: dict
    records: list          # lln: (n, seed, j_to_bary, meta_j, runtime)
    summary: dict
    incomplete: bool = False
    errors: list = field(default_factory=list)


def _population_barycenter(population: MetaDistribution, constraint: Constraint,
                           cost: CostSpec, solver: str = "fixed"):
    problem = BarycenterProblem.make(
        [(m, p) for m, p in zip(population.atoms, population.probs)], constraint, cost
    )
    if solver == "free":
        result = barycenter_free_support(problem)
    else:
        result = barycenter_fixed_support(problem)
    reps = [result.measure]
    if result.alt_measure is not None:
        reps.append(result.alt_measure)
    return result, reps


def lln_experiment(
    population: MetaDistribution,
    n_grid,
    seeds,
    constraint: Constraint,
    cost: CostSpec,
    solver: str = "fixed",
    stratified: bool = False,
    jobs: int = 1,
) -> ExperimentReport:
    """Empirical barycenters of i.i.d. draws against the population barycenter.

    For every (seed, n): draw n atom measures from the population, solve
    the empirical barycenter on the same constraint set, and record the
    distance to the nearest population-barycenter representative together
    with the lifted distance between the empirical and true populations.
    Fixed seeds make the run bit-reproducible; seeds are independent work
    units merged in seed order.
    """
    n_grid = sorted(int(n) for n in n_grid)
    seeds = list(seeds)
    pop_result, reps = _population_barycenter(population, constraint, cost, solver)
    K = len(population.atoms)
    j_pop = np.array(
        [[transport_cost(a, b, cost) for b in population.atoms] for a in population.atoms]
    )

    def run_seed(seed: int):
        rng = np.random.default_rng(seed)
        rows, errs = [], []
        for n in n_grid:
            t0 = time.perf_counter()
            try:
                if stratified:
                    if n % K != 0 or not np.allclose(population.probs, 1.0 / K):
                        raise ValueError("stratified mode needs uniform probs and K | n")
                    counts = np.full(K, n // K)
                else:
                    idx = rng.choice(K, size=n, p=population.probs)
                    counts = np.bincount(idx, minlength=K)
                sel = counts > 0
                emp_inputs = [
                    (population.atoms[i], counts[i] / n) for i in range(K) if sel[i]
                ]
                problem = BarycenterProblem.make(emp_inputs, constraint, cost)
                if solver == "free":
                    emp = barycenter_free_support(problem)
                else:
                    emp = barycenter_fixed_support(problem)
                j_bar = min(transport_cost(emp.measure, rep, cost) for rep in reps)
                _, meta_j, _, _, _ = solve_lp_matrix(
                    j_pop[sel][:, :], counts[sel] / n, population.probs
                )
                rows.append((n, seed, j_bar, meta_j, time.perf_counter() - t0))
            except Exception as exc:  # record the hole, keep the report partial
                errs.append((n, seed, repr(exc)))
        return rows, errs

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_seed, seeds))
    else:
        outcomes = [run_seed(s) for s in seeds]

    records, errors = [], []
    for rows, errs in outcomes:
        records.extend(rows)
        errors.extend(errs)
    records.sort(key=lambda r: (r[0], r[1]))

    med_j = {n: float(np.median([r[2] for r in records if r[0] == n])) for n in n_grid}
    med_meta = {n: float(np.median([r[3] for r in records if r[0] == n])) for n in n_grid}
    first, last = n_grid[0], n_grid[-1]
    ratio = med_j[last] / med_j[first] if med_j[first] > 0 else 0.0
    summary = {
        "median_j": med_j,
        "median_meta_j": med_meta,
        "decay_ratio": ratio,
        "population_objective": pop_result.objective,
        "multiple_optima": pop_result.multiple_optima,
    }
    return ExperimentReport(
        config={
            "n_grid": n_grid,
            "seeds": seeds,
            "solver": solver,
            "stratified": stratified,
        },
        records=records,
        summary=summary,
        incomplete=bool(errors),
        errors=errors,
    )


def perturbation_experiment(
    population: MetaDistribution,
    deltas,
    constraint: Constraint,
    cost: CostSpec,
    seed: int = 0,
    usc_eps: float = 0.05,
) -> ExperimentReport:
    """Jitter atom measures by a fixed direction field scaled by delta.

    Tracks the lifted distance to the unperturbed population and the
    distance of the perturbed barycenter to the nearest unperturbed
    barycenter representative; with a shared direction field the lifted
    track is nondecreasing in delta on single-atom populations.
    """
    if population.space.kind != "euclidean":
        raise ValueError("perturbation harness needs a euclidean space")
    deltas = [float(d) for d in deltas]
    pop_result, reps = _population_barycenter(population, constraint, cost)
    rng = np.random.default_rng(seed)
    offsets = [rng.uniform(-1.0, 1.0, size=m.atoms.shape) for m in population.atoms]

    rows = []
    for delta in deltas:
        t0 = time.perf_counter()
        jittered = [
            canonicalize(m.atoms + delta * off, m.weights, m.space)
            for m, off in zip(population.atoms, offsets)
        ]
        P_delta = MetaDistribution.make(jittered, population.probs)
        meta_j = meta_distance(P_delta, population, cost)
        problem = BarycenterProblem.make(
            [(m, p) for m, p in zip(P_delta.atoms, P_delta.probs)], constraint, cost
        )
        emp = barycenter_fixed_support(problem)
        j_bar = min(transport_cost(emp.measure, rep, cost) for rep in reps)
        rows.append((delta, meta_j, j_bar, time.perf_counter() - t0))

    # largest delta up to which the barycenter stays usc_eps-close: recorded,
    # never claimed universal
    usc_threshold = 0.0
    for delta, _, j_bar, _ in sorted(rows):
        if j_bar <= usc_eps:
            usc_threshold = delta
        else:
            break
    summary = {
        "deltas": deltas,
        "meta_j_track": [r[1] for r in rows],
        "j_track": [r[2] for r in rows],
        "usc_eps": usc_eps,
        "usc_threshold": usc_threshold,
        "multiple_optima": pop_result.multiple_optima,
    }
    return ExperimentReport(
        config={"deltas": deltas, "seed": seed},
        records=rows,
        summary=summary,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def population_from_json(obj: dict) -> MetaDistribution:
    if "generator" in obj:
        g = obj["generator"]
        box = g["box"]
        return random_population(
            int(g["count"]), int(g.get("seed", 0)), box[0], box[1],
            int(g.get("max_atoms", 5)),
        )
    measures = [measure_from_json(m) for m in obj["measures"]]
    return MetaDistribution.make(measures, obj["probs"])


def constraint_from_json(obj: dict) -> Constraint:
    kind = obj.get("kind")
    if kind in ("simplex_over", "fixed_support"):
        return Constraint.simplex_over(obj["atoms"])
    if kind == "grid":
        (lo, hi), shape = obj["box"], obj["shape"]
        axes = [np.linspace(lo[i], hi[i], int(shape[i])) for i in range(len(shape))]
        mesh = np.meshgrid(*axes, indexing="ij")
        atoms = np.stack([m.ravel() for m in mesh], axis=-1)
        return Constraint.simplex_over(atoms)
    if kind == "free":
        return Constraint.free(int(obj["k"]))
    raise ValueError(f"unknown constraint kind {kind!r}")


def lln_report_csv(report: ExperimentReport, path) -> None:
    # runtime stays out of the CSV so repeated runs are byte-identical
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "seed", "j_to_population_barycenter", "meta_j"])
        for n, seed, j_bar, meta_j, _ in report.records:
            wr.writerow([n, seed, repr(float(j_bar)), repr(float(meta_j))])


def perturb_report_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["delta", "meta_j", "j_to_base_barycenter"])
        for delta, meta_j, j_bar, _ in report.records:
            wr.writerow([repr(float(delta)), repr(float(meta_j)), repr(float(j_bar))])


def summary_json(report: ExperimentReport, path) -> None:
    payload = {
        "config": report.config,
        "summary": report.summary,
        "incomplete": report.incomplete,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
