"""Diagnostics for the transport-induced topology.

Convergence of a sequence nu_n to nu* in the transport sense is
equivalent to weak convergence plus convergence of the cost to one
reference measure; ``check_convergence`` records all four tracks and
assigns a verdict.  Weak convergence is operationalized by transport
under the clamped ground metric min(rho, 1), which metrizes it on the
uniformly bounded families the harness generates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
import numpy as np

from .costs import CostSpec
from .measures import ATOM_MERGE_TOL, DiscreteMeasure, _as_point, canonicalize
from .transport import TransportPlan, solve_lp_matrix, solve_transport

VERDICT_TOL = 1e-6


@dataclass(frozen=True)
class SequenceDiagnostics:
    n_values: tuple
    J_forward: tuple   # J(nu*, nu_n)
    J_backward: tuple  # J(nu_n, nu*)
    weak_proxy: tuple
    reference_J: tuple  # J(mu, nu_n)
    reference_limit: float  # J(mu, nu*)
    verdict: str


def weak_proxy_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Transport cost under the bounded ground metric min(rho, 1)."""
    space = mu.space
    if space.kind == "euclidean":
        diff = mu.atoms[:, None, :] - nu.atoms[None, :, :]
        rho = np.sqrt(np.sum(diff**2, axis=-1))
    else:
        rho = space.rho[np.ix_(mu.atoms.astype(int), nu.atoms.astype(int))]
    C = np.minimum(rho, 1.0)
    _, value, _, _, _ = solve_lp_matrix(C, mu.weights, nu.weights)
    return value


def _final_third(values):
    k = max(1, (len(values) + 2) // 3)
    return values[-k:]


def _strictly_small(track, tol) -> bool:
    return max(_final_third(track)) <= tol


def _decaying(track) -> bool:
    """Trend test: nonincreasing on the final third and at least halved."""
    tail = _final_third(track)
    if any(tail[i + 1] > tail[i] + 1e-12 for i in range(len(tail) - 1)):
        return False
    return track[-1] <= 0.5 * track[0] + 1e-15


def check_convergence(
    sequence: list,
    limit: DiscreteMeasure,
    reference: DiscreteMeasure,
    cost: CostSpec,
    tol: float = VERDICT_TOL,
) -> SequenceDiagnostics:
    """Record transport and weak tracks for nu_n against nu* and classify.

    ``consistent_with_J_convergence`` needs both the weak proxy and
    |J(mu, nu_n) - J(mu, nu*)| below ``tol`` on the final third;
    ``weak_only`` needs the proxy small or decaying while the reference
    track is not; anything else is ``divergent``.  Thresholds are
    reporting configuration, not truth claims: the raw tracks travel with
    the verdict.
    """
    if not sequence:
        raise ValueError("sequence must be nonempty")
    ref_limit = solve_transport(reference, limit, cost).objective
    fwd, bwd, proxy, ref = [], [], [], []
    for nu_n in sequence:
        fwd.append(solve_transport(limit, nu_n, cost).objective)
        bwd.append(solve_transport(nu_n, limit, cost).objective)
        proxy.append(weak_proxy_distance(nu_n, limit))
        ref.append(solve_transport(reference, nu_n, cost).objective)
    ref_err = [abs(v - ref_limit) for v in ref]

    proxy_small = _strictly_small(proxy, tol)
    ref_small = _strictly_small(ref_err, tol)
    if proxy_small and ref_small:
        verdict = "consistent_with_J_convergence"
    elif proxy_small or _decaying(proxy):
        verdict = "weak_only"
    else:
        verdict = "divergent"
    return SequenceDiagnostics(
        n_values=tuple(range(1, len(sequence) + 1)),
        J_forward=tuple(fwd),
        J_backward=tuple(bwd),
        weak_proxy=tuple(proxy),
        reference_J=tuple(ref),
        reference_limit=ref_limit,
        verdict=verdict,
    )


def diagnostics_to_csv(diag: SequenceDiagnostics, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "J_forward", "J_backward", "weak_proxy", "reference_J"])
        for row in zip(diag.n_values, diag.J_forward, diag.J_backward,
                       diag.weak_proxy, diag.reference_J):
            wr.writerow([row[0]] + [repr(v) for v in row[1:]])


# ---------------------------------------------------------------------------
# Plan truncation
# ---------------------------------------------------------------------------

def _merge_rows(space, atoms: np.ndarray, rows: np.ndarray):
    """Sort atoms and add together coupling rows of coinciding atoms."""
    if space.kind == "euclidean":
        order = np.lexsort(atoms.T[::-1])
    else:
        order = np.argsort(atoms, kind="stable")
    atoms, rows = atoms[order], rows[order]
    out_atoms, out_rows = [atoms[0]], [rows[0].copy()]
    for a, r in zip(atoms[1:], rows[1:]):
        if space.kind == "euclidean":
            dup = np.max(np.abs(a - out_atoms[-1])) <= ATOM_MERGE_TOL
        else:
            dup = a == out_atoms[-1]
        if dup:
            out_rows[-1] += r
        else:
            out_atoms.append(a)
            out_rows.append(r.copy())
    return np.asarray(out_atoms), np.asarray(out_rows)


def truncate_plan(gamma: TransportPlan, x0, R: float, cost: CostSpec):
    """Collapse far-field plan mass onto the target diagonal.

    With the two-argument cutoff f_R(x, y) = phi(x) phi(y), phi the
    clamped one-argument cutoff around x0, the surgery
    ``gamma - f_R|gamma + (pi_y x pi_y)_# (f_R|gamma)`` returns a plan
    from the modified source onto the original target whose cost is
    K(gamma) - K(f_R|gamma).  Returns (nu_tilde, plan, cost_drop).
    """
    mu, nu = gamma.source, gamma.target
    cost = cost.bound_to(mu.space)
    x0p = _as_point(mu.space, x0)
    phi_x = np.array(
        [np.clip(R + 1.0 - cost.evaluate(x0p, mu.atom(i)), 0.0, 1.0) for i in range(mu.n_atoms)]
    )
    phi_y = np.array(
        [np.clip(R + 1.0 - cost.evaluate(x0p, nu.atom(j)), 0.0, 1.0) for j in range(nu.n_atoms)]
    )
    lam = gamma.coupling * phi_x[:, None] * phi_y[None, :]
    C = cost.matrix(mu, nu)
    k_gamma = float((gamma.coupling * C).sum())
    k_lam = float((lam * C).sum())
    cost_drop = k_gamma - k_lam

    top = gamma.coupling - lam
    diag = np.diag(lam.sum(axis=0))
    if mu.space.kind == "euclidean":
        atoms = np.concatenate([mu.atoms, nu.atoms])
    else:
        atoms = np.concatenate([mu.atoms, nu.atoms]).astype(int)
    stacked = np.concatenate([top, diag], axis=0)
    atoms, rows = _merge_rows(mu.space, atoms, stacked)
    mass = rows.sum(axis=1)
    keep = mass > 0
    atoms, rows, mass = atoms[keep], rows[keep], mass[keep]
    nu_tilde = canonicalize(atoms, mass, mu.space)
    C_new = cost.bound_to(mu.space).matrix(nu_tilde, nu)
    plan = TransportPlan(
        source=nu_tilde,
        target=nu,
        coupling=rows,
        objective=float((rows * C_new).sum()),
        duals=None,
        gap=None,
    )
    return nu_tilde, plan, cost_drop


def uniform_tail_radius(family, x0, cost: CostSpec, eps: float) -> float:
    """Smallest doubling radius at which every member's tail cost is <= eps."""
    from .measures import tail_cost

    R = 1.0
    for _ in range(200):
        if max(tail_cost(nu, x0, R, cost) for nu in family) <= eps:
            return R
        R *= 2.0
    raise RuntimeError("tail cost did not fall below eps at any doubling radius")
