"""Horizon-wide formulations available when liability proportions are
time-constant: the constant-proportion certificate, the whole-horizon primal
and dual LPs, the prefix-payment one-shot reformulation, and the
sequential-equals-horizon consistency check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clearing import LEQ, LinearProgram, solve_lp
from .errors import CertificateError, MyopicGapError, SolverError
from .fractional import broadcast_caps, value_given_sample_path
from .network import SamplePath, SystemState, _freeze

CERTIFICATE_TOL = 1e-9
GAP_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ConstantProportionCertificate:
    """Whether every round allocates new liabilities in the same proportions.

    ``zeta[i, j]`` is the round-1 share of node i's new mass owed to j;
    ``max_violation`` is the largest deviation of any later round from it.
    """

    zeta: np.ndarray
    valid: bool
    max_violation: float

    def __post_init__(self):
        object.__setattr__(self, "zeta", _freeze(np.asarray(self.zeta, float)))

    @property
    def n(self) -> int:
        return self.zeta.shape[0]


@dataclass(frozen=True, eq=False)
class PrefixFormulation:
    """Cumulative view of a schedule: running payments, interventions,
    assets and liabilities, all nondecreasing in the round."""

    cumulative_payments: np.ndarray      # (T, n)
    cumulative_interventions: np.ndarray # (T, n)
    cumulative_assets: np.ndarray        # (T, n)
    cumulative_liabilities: np.ndarray   # (T, n)


@dataclass(frozen=True, eq=False)
class HorizonSolution:
    value: float
    clearing: np.ndarray       # (T, n)
    interventions: np.ndarray  # (T, n)
    rewards: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class DualSolution:
    value: float
    lam: np.ndarray  # (T, n) prefix-solvency multipliers
    mu: np.ndarray   # (T, n) default-row multipliers
    nu: np.ndarray   # (T,)   budget multipliers
    xi: np.ndarray   # (T, n) cap multipliers


@dataclass(frozen=True, eq=False)
class MyopicReport:
    certificate: ConstantProportionCertificate
    applicable: bool
    sequential_value: float
    horizon_value: float
    gap: float


def _round_ratios(shock) -> np.ndarray:
    mass = shock.external_liabilities + shock.internal_liabilities.sum(axis=1)
    return shock.internal_liabilities / mass[:, None]


def check_constant_proportions(
    path: SamplePath, tol: float = CERTIFICATE_TOL
) -> ConstantProportionCertificate:
    """Extract round-1 proportions and measure how far later rounds drift.

    Any round works as the reference under validity; round 1 is used.  The
    denominators are strictly positive because external liabilities are.
    """
    zeta = _round_ratios(path.shocks[0])
    worst = 0.0
    for shock in path.shocks[1:]:
        worst = max(worst, float(np.abs(_round_ratios(shock) - zeta).max()))
    return ConstantProportionCertificate(
        zeta=zeta, valid=worst <= tol, max_violation=worst
    )


def _require_valid(certificate: ConstantProportionCertificate):
    if not certificate.valid:
        raise CertificateError(
            "liability proportions vary across rounds "
            f"(max deviation {certificate.max_violation}); "
            "the horizon formulation does not apply"
        )


def _prefix_data(path: SamplePath):
    b = np.stack([s.external_liabilities for s in path])
    l = np.stack([s.internal_liabilities.sum(axis=1) for s in path])
    c = np.stack([s.external_assets for s in path])
    h = np.cumsum(b + l, axis=0)
    f = np.cumsum(c, axis=0)
    return c, h, f


def _solve_horizon(
    path: SamplePath, budget: float, caps: np.ndarray, zeta: np.ndarray
) -> HorizonSolution:
    rounds, n = len(path), path.n
    c, h, _ = _prefix_data(path)
    dim = 2 * rounds * n  # [P_tilde(1..T) | Z(1..T)]
    objective = np.zeros(dim)
    objective[: rounds * n] = 1.0
    rows = []
    eye = np.eye(n)
    lhs_default = eye - zeta.T
    for t in range(rounds):
        for i in range(n):
            # prefix solvency: sum_{t' <= t} P_tilde(t') <= h(t)
            row = np.zeros(dim)
            for tp in range(t + 1):
                row[tp * n + i] = 1.0
            rows.append((row, LEQ, float(h[t, i])))
    for t in range(rounds):
        for i in range(n):
            row = np.zeros(dim)
            row[t * n : (t + 1) * n] = lhs_default[i]
            row[rounds * n + t * n + i] = -1.0
            rows.append((row, LEQ, float(c[t, i])))
    for t in range(rounds):
        row = np.zeros(dim)
        row[rounds * n + t * n : rounds * n + (t + 1) * n] = 1.0
        rows.append((row, LEQ, float(budget)))
    bounds = [(0.0, float("inf"))] * (rounds * n)
    bounds += [(0.0, float(caps[i])) for _ in range(rounds) for i in range(n)]
    sol = solve_lp(
        LinearProgram(objective=objective, constraints=tuple(rows),
                      variable_bounds=tuple(bounds))
    )
    if sol.status != "optimal":
        raise SolverError(f"horizon LP returned status {sol.status}",
                          status=sol.status)
    clearing = sol.primal[: rounds * n].reshape(rounds, n)
    interventions = sol.primal[rounds * n :].reshape(rounds, n)
    return HorizonSolution(
        value=float(sol.objective_value),
        clearing=clearing,
        interventions=interventions,
        rewards=tuple(float(r.sum()) for r in clearing),
    )


def solve_horizon_primal(
    path: SamplePath,
    budget: float,
    caps,
    certificate: ConstantProportionCertificate,
) -> HorizonSolution:
    """One LP over all rounds with the certified constant proportion matrix
    in place of the per-round relative liabilities."""
    _require_valid(certificate)
    caps = broadcast_caps(caps, path.n)
    return _solve_horizon(path, budget, caps, certificate.zeta)


def solve_horizon_dual(
    path: SamplePath,
    budget: float,
    caps,
    certificate: ConstantProportionCertificate,
) -> DualSolution:
    """The dual of the horizon primal, solved as its own LP.

    Multipliers: ``lam`` on the prefix-solvency rows, ``mu`` on the default
    rows, ``nu`` on the budgets, ``xi`` on the caps.  Strong duality against
    :func:`solve_horizon_primal` holds to solver precision.
    """
    _require_valid(certificate)
    caps = broadcast_caps(caps, path.n)
    rounds, n = len(path), path.n
    c, h, _ = _prefix_data(path)
    zeta = certificate.zeta
    # variable layout: [lam (T*n) | mu (T*n) | nu (T) | xi (T*n)], all >= 0
    base_mu = rounds * n
    base_nu = 2 * rounds * n
    base_xi = base_nu + rounds
    dim = base_xi + rounds * n
    cost = np.zeros(dim)
    for t in range(rounds):
        cost[t * n : (t + 1) * n] = h[t]
        cost[base_mu + t * n : base_mu + (t + 1) * n] = c[t]
        cost[base_nu + t] = budget
        cost[base_xi + t * n : base_xi + (t + 1) * n] = caps
    rows = []
    eye = np.eye(n)
    # (I - zeta) mu(t) + sum_{t' >= t} lam(t') >= 1
    lhs_mu = eye - zeta
    for t in range(rounds):
        for i in range(n):
            row = np.zeros(dim)
            row[base_mu + t * n : base_mu + (t + 1) * n] = lhs_mu[i]
            for tp in range(t, rounds):
                row[tp * n + i] = 1.0
            rows.append((row, ">=", 1.0))
    # xi(t) + nu(t) 1 - mu(t) >= 0
    for t in range(rounds):
        for i in range(n):
            row = np.zeros(dim)
            row[base_xi + t * n + i] = 1.0
            row[base_nu + t] = 1.0
            row[base_mu + t * n + i] = -1.0
            rows.append((row, ">=", 0.0))
    bounds = [(0.0, float("inf"))] * dim
    # minimize cost == maximize -cost
    sol = solve_lp(
        LinearProgram(objective=-cost, constraints=tuple(rows),
                      variable_bounds=tuple(bounds))
    )
    if sol.status != "optimal":
        raise SolverError(f"horizon dual LP returned status {sol.status}",
                          status=sol.status)
    x = sol.primal
    return DualSolution(
        value=float(-sol.objective_value),
        lam=x[:base_mu].reshape(rounds, n),
        mu=x[base_mu:base_nu].reshape(rounds, n),
        nu=x[base_nu:base_xi].copy(),
        xi=x[base_xi:].reshape(rounds, n),
    )


@dataclass(frozen=True, eq=False)
class PrefixSolution:
    value: float
    prefix: PrefixFormulation
    clearing: np.ndarray       # (T, n), recovered differences
    interventions: np.ndarray  # (T, n), recovered differences
    rewards: tuple[float, ...]


def solve_prefix_oneshot(
    path: SamplePath,
    budget: float,
    caps,
    certificate: ConstantProportionCertificate,
) -> PrefixSolution:
    """The horizon problem as a single static clearing LP over cumulative
    payments, with the weighted objective ``sum_t 1^T Q(t)`` (equivalently
    ``sum_t t * reward(t)``, another strictly increasing choice).

    The vectorized problem has block-diagonal proportions, prefix assets and
    liabilities, staircase budgets ``1^T W(t) <= t B`` and caps
    ``W(t) <= t L``.  Per-round schedules are recovered by differencing;
    differences below ``-1e-9`` indicate a genuine failure and raise.
    """
    _require_valid(certificate)
    caps = broadcast_caps(caps, path.n)
    rounds, n = len(path), path.n
    c, h, f = _prefix_data(path)
    zeta = certificate.zeta
    dim = 2 * rounds * n  # [Q(1..T) | W(1..T)]
    objective = np.zeros(dim)
    objective[: rounds * n] = 1.0
    rows = []
    eye = np.eye(n)
    lhs_default = eye - zeta.T
    for t in range(rounds):
        for i in range(n):
            row = np.zeros(dim)
            row[t * n : (t + 1) * n] = lhs_default[i]
            row[rounds * n + t * n + i] = -1.0
            rows.append((row, LEQ, float(f[t, i])))
    for t in range(rounds):
        row = np.zeros(dim)
        row[rounds * n + t * n : rounds * n + (t + 1) * n] = 1.0
        rows.append((row, LEQ, float(budget) * (t + 1)))
    bounds = [(0.0, float(h[t, i])) for t in range(rounds) for i in range(n)]
    bounds += [
        (0.0, float(caps[i]) * (t + 1)) for t in range(rounds) for i in range(n)
    ]
    sol = solve_lp(
        LinearProgram(objective=objective, constraints=tuple(rows),
                      variable_bounds=tuple(bounds))
    )
    if sol.status != "optimal":
        raise SolverError(f"prefix LP returned status {sol.status}",
                          status=sol.status)
    q = sol.primal[: rounds * n].reshape(rounds, n)
    w = sol.primal[rounds * n :].reshape(rounds, n)
    clearing = np.diff(q, axis=0, prepend=np.zeros((1, n)))
    if clearing.min(initial=0.0) < -1e-9:
        raise SolverError(
            f"recovered per-round payments dip to {clearing.min()}; "
            "prefix recovery failed"
        )
    clearing = np.clip(clearing, 0.0, None)
    interventions = np.diff(w, axis=0, prepend=np.zeros((1, n)))
    return PrefixSolution(
        value=float(clearing.sum()),
        prefix=PrefixFormulation(
            cumulative_payments=q,
            cumulative_interventions=w,
            cumulative_assets=f,
            cumulative_liabilities=h,
        ),
        clearing=clearing,
        interventions=interventions,
        rewards=tuple(float(r.sum()) for r in clearing),
    )


def verify_myopic_optimality(
    path: SamplePath,
    budget: float,
    caps,
    start: SystemState | None = None,
    tol: float = GAP_TOL,
) -> MyopicReport:
    """Compare the sequential per-round solve against the horizon LP.

    On a certificate-valid path the two are provably equal; a gap beyond
    ``tol`` raises :class:`MyopicGapError`.  On an invalid certificate the
    report is returned with ``applicable=False`` (both values listed for
    inspection, nothing asserted).
    """
    caps = broadcast_caps(caps, path.n)
    certificate = check_constant_proportions(path)
    if start is None:
        start = SystemState.empty(path.n)
    sequential, _ = value_given_sample_path(start, path, budget, caps)
    horizon = _solve_horizon(path, budget, caps, certificate.zeta)
    gap = sequential - horizon.value
    report = MyopicReport(
        certificate=certificate,
        applicable=certificate.valid,
        sequential_value=sequential,
        horizon_value=horizon.value,
        gap=gap,
    )
    if certificate.valid and abs(gap) > tol:
        raise MyopicGapError(
            f"sequential value {sequential} and horizon value {horizon.value} "
            f"differ by {gap} on a certificate-valid path"
        )
    return report
