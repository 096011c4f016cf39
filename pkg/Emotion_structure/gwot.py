"""
Gromov-Wasserstein optimal transport between two RDMs, without entropic regularization.

The objective

    GWD(G) = sum_{i,j,k,l} (D_ij - D'_kl)^2 G_ik G_jl

is minimized over couplings with uniform marginals by a conditional-gradient
(Frank-Wolfe) loop: the linearized problem is an exact linear assignment,
and the step size comes from an exact line search on the quadratic objective.
Loss, gradient and line search use POT's square-loss GW terms.

Each restart starts from a random permutation vertex. A Frank-Wolfe run from
a vertex usually stops on a nearby vertex, so the restart then alternates
pairwise-exchange descent over permutations with further Frank-Wolfe runs
until neither lowers the objective. The best restart wins.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import ot
from joblib import Parallel, delayed
from scipy.optimize import linear_sum_assignment

from .errors import InputError, SolverError
from .structure import RDM, histogram_match

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
BRUTE_FORCE_MAX_N = 8


@dataclass(frozen=True)
class TransportPlan:
    """
    Coupling between the stimuli of two structures.
    """

    values: np.ndarray
    "n x n nonnegative matrix; entry (i, k) is the mass sent from row stimulus i to column stimulus k"

    row_ids: tuple[str, ...] | None = None
    "labels of the first structure"

    col_ids: tuple[str, ...] | None = None
    "labels of the second structure"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InputError(f'Transport plan must be square, got shape {values.shape}')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        for name in ('row_ids', 'col_ids'):
            ids = getattr(self, name)
            if ids is not None:
                ids = tuple(str(s) for s in ids)
                if len(ids) != values.shape[0]:
                    raise InputError(f'{name} has {len(ids)} labels for a plan of size {values.shape[0]}')
                object.__setattr__(self, name, ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def row_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def is_feasible(self, tol: float = FEASIBILITY_TOL) -> bool:
        """True if the plan is nonnegative and both marginals are uniform within `tol`."""
        if self.n == 0:
            return False
        uniform = 1.0 / self.n
        return bool(np.all(self.values >= -tol)
                    and np.all(np.abs(self.row_marginal - uniform) <= tol)
                    and np.all(np.abs(self.col_marginal - uniform) <= tol)
                    and abs(self.values.sum() - 1.0) <= tol)

    def with_ids(self, row_ids, col_ids) -> 'TransportPlan':
        return TransportPlan(self.values, tuple(row_ids), tuple(col_ids))


@dataclass(frozen=True)
class SolverConfig:
    """
    Settings of the multi-restart GW solver. Tolerances are configuration, not constants.
    """

    n_restarts: Optional[int] = None
    "number of random initializations; None picks restart_schedule(n) for the problem size"

    max_fw_iterations: int = 1000
    "iteration cap per Frank-Wolfe run"

    convergence_tol: float = 1e-9
    "stop when the relative objective decrease falls below this"

    base_seed: int = 0
    "restart r uses seed base_seed + r"

    histogram_match_inputs: bool = True
    "rewrite the second RDM to the first RDM's value distribution before solving"

    product_warm_start: bool = False
    "restart 0 starts from the uniform product coupling instead of a random vertex"

    pairwise_exchange: bool = True
    "polish each restart by alternating pairwise-exchange descent with Frank-Wolfe"

    max_exchange_passes: int = 100_000
    "cap on accepted exchanges per descent"

    n_jobs: int = 1
    "joblib workers for restarts; the result does not depend on it"

    def validate(self):
        for name in ('max_fw_iterations', 'max_exchange_passes', 'n_jobs'):
            if getattr(self, name) < 1:
                raise SolverError(f'SolverConfig.{name} must be positive, got {getattr(self, name)}')
        if self.n_restarts is not None and self.n_restarts < 1:
            raise SolverError(f'SolverConfig.n_restarts must be positive, got {self.n_restarts}')
        if not self.convergence_tol > 0:
            raise SolverError(f'SolverConfig.convergence_tol must be positive, got {self.convergence_tol}')

    def restarts_for(self, n: int) -> int:
        return self.n_restarts if self.n_restarts is not None else restart_schedule(n)


@dataclass(frozen=True)
class RestartLog:
    restart: int
    seed: int
    initial_gwd: float
    gwd: float
    iterations: int
    converged: bool
    exchange_rounds: int = 0


@dataclass(frozen=True)
class SolverResult:
    """
    Outcome of solve_gwot.
    """

    best_plan: TransportPlan
    "plan of the restart with minimal GWD (lowest restart index on ties)"

    best_gwd: float
    "min(per_restart_gwd)"

    per_restart_gwd: tuple[float, ...]

    converged_flags: tuple[bool, ...]

    best_restart: int = 0

    restarts: tuple[RestartLog, ...] = field(default_factory=tuple)
    "per-restart diagnostics, in restart order"


def restart_schedule(n: int) -> int:
    """
    Default number of random initializations for n stimuli: 10,000 up to about
    500 stimuli, 1,000 up to about 1,000, and 200 beyond.
    """
    if n <= 500:
        return 10_000
    if n <= 1000:
        return 1_000
    return 200


def _gw_terms(d1: np.ndarray, d2: np.ndarray):
    # constC, hC1, hC2 of the square loss for uniform marginals
    weights = ot.unif(d1.shape[0])
    return ot.gromov.init_matrix(d1, d2, weights, weights, loss_fun='square_loss')


def _loss(terms, plan: np.ndarray) -> float:
    return float(ot.gromov.gwloss(*terms, plan))


def _check_pair(d1: RDM, d2: RDM):
    if d1.n != d2.n:
        raise SolverError(f'RDMs have different sizes ({d1.n} and {d2.n})')
    if d1.n == 0:
        raise SolverError('RDMs are empty')


def gw_objective(d1: RDM, d2: RDM, plan: TransportPlan) -> float:
    """
    Evaluates the GW objective of `plan` in O(n^3).

    The quadruple sum is expanded with (a - b)^2 = a^2 + b^2 - 2ab into
    marginal terms and one matrix contraction, which is exact for any plan
    with uniform marginals.

    Raises
    ------
    SolverError
        On a size mismatch.
    InputError
        If the plan is not a feasible coupling with uniform marginals.
    """
    _check_pair(d1, d2)
    if plan.n != d1.n:
        raise SolverError(f'Plan of size {plan.n} does not match RDMs of size {d1.n}')
    if not plan.is_feasible():
        raise InputError('Transport plan is not a feasible coupling with uniform marginals')
    return max(_loss(_gw_terms(d1.values, d2.values), plan.values), 0.0)


def random_plan(n: int, seed: int) -> TransportPlan:
    """A uniformly random permutation matrix scaled by 1/n, reproducible per seed."""
    if n < 1:
        raise InputError(f'Plan size must be positive, got {n}')
    permutation = np.random.default_rng(seed).permutation(n)
    return permutation_plan(permutation)


def permutation_plan(permutation) -> TransportPlan:
    """Plan sending row i to column permutation[i], each with mass 1/n."""
    return TransportPlan(_vertex(np.asarray(permutation)))


def _vertex(permutation: np.ndarray) -> np.ndarray:
    n = permutation.size
    values = np.zeros((n, n))
    values[np.arange(n), permutation] = 1.0 / n
    return values


def _frank_wolfe(terms, plan: np.ndarray, config: SolverConfig):
    constC, hC1, hC2 = terms
    n = plan.shape[0]
    cost = _loss(terms, plan)
    converged = False
    iteration = 0
    while iteration < config.max_fw_iterations:
        iteration += 1
        gradient = ot.gromov.gwggrad(constC, hC1, hC2, plan)
        rows, cols = linear_sum_assignment(gradient)
        direction = -plan
        direction[rows, cols] += 1.0 / n
        # constC drops out of the quadratic term because direction has zero marginals
        a = -float(np.sum((hC1 @ direction @ hC2.T) * direction))
        b = float(np.sum(gradient * direction)) - float(np.sum(constC * direction))
        step = ot.optim.solve_1d_linesearch_quad(a, b)
        if step == 0.0:
            converged = True
            break
        plan = plan + step * direction
        new_cost = _loss(terms, plan)
        assert new_cost <= cost + 1e-12 * max(1.0, abs(cost)), 'GW objective increased during line search'
        decrease = cost - new_cost
        cost = new_cost
        if cost <= 0.0 or decrease <= config.convergence_tol * abs(cost):
            converged = True
            break
    return plan, cost, iteration, converged


def _exchange_descent(d1: np.ndarray, d2: np.ndarray, permutation: np.ndarray, config: SolverConfig) -> np.ndarray:
    """
    Best-improvement descent over swaps of two rows' targets.

    On permutation plans the GW objective is const - 2 S / n^2 with
    S = sum_ij d1_ij d2_{p(i) p(j)}, so every swap gain comes from one
    product M = d1 @ B where B = d2[p][:, p].
    """
    permutation = permutation.copy()
    n = permutation.size
    if n < 2:
        return permutation
    b = d2[np.ix_(permutation, permutation)]
    diag1 = np.diag(d1).copy()
    floor = 1e-12 * max(1.0, float(np.abs(d1).sum() * np.abs(d2).max()))
    for _ in range(config.max_exchange_passes):
        m = d1 @ b
        diag_m = np.diag(m)
        diag_b = np.diag(b)
        gain = m + m.T - diag_m[:, None] - diag_m[None, :]
        gain -= (diag1[:, None] - d1) * (b - diag_b[:, None])
        gain -= (d1 - diag1[None, :]) * (diag_b[None, :] - b)
        gain = 2.0 * gain + (diag1[:, None] - diag1[None, :]) * (diag_b[None, :] - diag_b[:, None])
        r, s = np.unravel_index(int(np.argmax(gain)), gain.shape)
        if not gain[r, s] > floor:
            break
        permutation[[r, s]] = permutation[[s, r]]
        b[[r, s], :] = b[[s, r], :]
        b[:, [r, s]] = b[:, [s, r]]
    return permutation


def _run_restart(d1: np.ndarray, d2: np.ndarray, terms, restart: int, config: SolverConfig):
    n = d1.shape[0]
    seed = config.base_seed + restart
    if restart == 0 and config.product_warm_start:
        start = np.full((n, n), 1.0 / (n * n))
    else:
        start = np.array(random_plan(n, seed).values)
    initial = _loss(terms, start)
    plan, cost, iterations, converged = _frank_wolfe(terms, start, config)
    rounds = 0
    while config.pairwise_exchange:
        _, nearest = linear_sum_assignment(plan, maximize=True)
        vertex = _vertex(_exchange_descent(d1, d2, nearest, config))
        vertex_cost = _loss(terms, vertex)
        if not vertex_cost < cost - config.convergence_tol * abs(cost):
            break
        plan, cost, more, converged = _frank_wolfe(terms, vertex, config)
        iterations += more
        rounds += 1
    log = RestartLog(restart, seed, initial, max(cost, 0.0), iterations, converged, rounds)
    return plan, log


def solve_gwot(d1: RDM, d2: RDM, config: SolverConfig | None = None) -> SolverResult:
    """
    Aligns two RDMs by multi-restart non-entropic GW optimal transport.

    Parameters
    ----------
    d1 : RDM
        First (reference) structure; plan rows.
    d2 : RDM
        Second structure; plan columns. When config.histogram_match_inputs is
        set, it is histogram-matched to d1 before solving.
    config : SolverConfig, optional
        Default: SolverConfig()

    Returns
    -------
    SolverResult holding the plan with the smallest GWD; ties go to the lowest
    restart index, so the result does not depend on config.n_jobs.

    Examples
    --------
    >>> result = solve_gwot(human_rdm, model_rdm, SolverConfig(n_restarts=1000, n_jobs=8))
    >>> result.best_gwd, result.best_plan.values.argmax(axis=1)
    """
    config = config or SolverConfig()
    config.validate()
    _check_pair(d1, d2)
    if config.histogram_match_inputs:
        d2 = histogram_match(d1, d2)

    a, b = d1.values, d2.values
    terms = _gw_terms(a, b)
    n_restarts = config.restarts_for(d1.n)
    logger.info('Solving GWOT for n=%d with %d restarts', d1.n, n_restarts)
    outcomes = Parallel(n_jobs=config.n_jobs)(
        delayed(_run_restart)(a, b, terms, restart, config) for restart in range(n_restarts))

    logs = tuple(log for _, log in outcomes)
    best = min(range(len(logs)), key=lambda r: (logs[r].gwd, r))
    for log in logs:
        logger.debug('restart %d: gwd=%.6g iterations=%d exchange rounds=%d converged=%s',
                     log.restart, log.gwd, log.iterations, log.exchange_rounds, log.converged)
    logger.info('Best GWD %.6g at restart %d', logs[best].gwd, best)
    plan = TransportPlan(outcomes[best][0], d1.stimulus_ids, d2.stimulus_ids)
    return SolverResult(plan, logs[best].gwd,
                        tuple(log.gwd for log in logs),
                        tuple(log.converged for log in logs),
                        best, logs)


def brute_force_gwot(d1: RDM, d2: RDM) -> tuple[tuple[int, ...], float]:
    """
    Exhaustive minimum of the GW objective over all permutation plans.

    Only for small problems (n <= 8). Permutations are visited in
    lexicographic order and the first minimum is kept.

    Returns
    -------
    (permutation, gwd) where row i maps to column permutation[i].
    """
    _check_pair(d1, d2)
    if d1.n > BRUTE_FORCE_MAX_N:
        raise SolverError(f'brute_force_gwot enumerates n! plans; n={d1.n} exceeds {BRUTE_FORCE_MAX_N}')
    terms = _gw_terms(d1.values, d2.values)
    best_permutation, best_gwd = None, math.inf
    for permutation in itertools.permutations(range(d1.n)):
        gwd = _loss(terms, _vertex(np.array(permutation)))
        if gwd < best_gwd:
            best_permutation, best_gwd = permutation, gwd
    return best_permutation, max(best_gwd, 0.0)
