import collections

import numpy as np
import pytest
import Emotion_structure
from Emotion_structure.errors import InputError, SolverError
from Emotion_structure.gwot import SolverConfig, TransportPlan

# (number of stimuli, expected default restart count)
EXAMPLE_SCHEDULE = [
    (10, 10_000),
    (500, 10_000),
    (501, 1_000),
    (1000, 1_000),
    (1001, 200),
    (5000, 200),
]

EXAMPLE_BAD_CONFIGS = [
    {'n_restarts': 0},
    {'max_fw_iterations': 0},
    {'n_jobs': 0},
    {'max_exchange_passes': 0},
    {'convergence_tol': 0.0},
    {'convergence_tol': -1e-6},
]


def random_rdm(rng, n, prefix='s'):
    upper = rng.random(n * (n - 1) // 2)
    return Emotion_structure.structure.rdm_from_upper([f'{prefix}{i}' for i in range(n)], upper)


def geometric_rdm(rng, n, prefix='s'):
    """Cosine RDM of skewed random points, so distances carry structure."""
    points = rng.random((n, 6)) ** 3
    matrix = Emotion_structure.RatingMatrix([f'{prefix}{i}' for i in range(n)], [f'e{j}' for j in range(6)], points)
    return Emotion_structure.structure.build_rdm(matrix)


def mixed_plan(rng, n):
    """Random coupling with uniform marginals: a Dirichlet mixture of permutation plans."""
    weights = rng.dirichlet(np.ones(4))
    values = sum(w * Emotion_structure.gwot.random_plan(n, int(rng.integers(1 << 30))).values for w in weights)
    return TransportPlan(values)


def quadruple_sum(d1, d2, plan):
    diff = d1[:, :, None, None] - d2[None, None, :, :]
    return float(np.einsum('ijkl,ik,jl->', diff ** 2, plan, plan))


def test_gw_objective_oracle():
    """
    Test the fast GW objective against the literal quadruple sum.
    """
    rng = np.random.default_rng(0)
    for _ in range(100):
        d1, d2 = random_rdm(rng, 6), random_rdm(rng, 6)
        plan = mixed_plan(rng, 6)
        expected = quadruple_sum(d1.values, d2.values, plan.values)
        assert Emotion_structure.gwot.gw_objective(d1, d2, plan) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_gw_objective_zero_for_permuted_copy():
    """
    Test that an RDM and its relabelled copy are aligned at zero cost.
    """
    rng = np.random.default_rng(1)
    d1 = random_rdm(rng, 7)
    permutation = rng.permutation(7)
    d2 = d1.permuted(permutation)
    # row i of d2 is stimulus permutation[i] of d1
    plan = Emotion_structure.gwot.permutation_plan(np.argsort(permutation))
    assert Emotion_structure.gwot.gw_objective(d1, d2, plan) == pytest.approx(0.0, abs=1e-12)


def test_gw_objective_errors():
    """
    Test that infeasible plans and size mismatches are rejected.
    """
    rng = np.random.default_rng(2)
    d1, d2 = random_rdm(rng, 3), random_rdm(rng, 3)
    with pytest.raises(InputError):
        Emotion_structure.gwot.gw_objective(d1, d2, TransportPlan(np.eye(3)))
    with pytest.raises(InputError):
        Emotion_structure.gwot.gw_objective(d1, d2, TransportPlan(np.full((3, 3), 2 / 9) - np.eye(3) / 9))
    with pytest.raises(SolverError):
        Emotion_structure.gwot.gw_objective(d1, random_rdm(rng, 4), TransportPlan(np.eye(3) / 3))
    with pytest.raises(SolverError):
        Emotion_structure.gwot.gw_objective(d1, d2, TransportPlan(np.eye(2) / 2))


def test_random_plan():
    """
    Test that random plans are feasible, reproducible and uniform over permutations.
    """
    plan = Emotion_structure.gwot.random_plan(5, seed=11)
    assert plan.is_feasible()
    np.testing.assert_array_equal(plan.values, Emotion_structure.gwot.random_plan(5, seed=11).values)

    counts = collections.Counter(
        tuple(Emotion_structure.gwot.random_plan(3, seed).values.argmax(axis=1)) for seed in range(6000))
    assert len(counts) == 6
    assert all(850 <= count <= 1150 for count in counts.values())


@pytest.mark.parametrize('n,expected', EXAMPLE_SCHEDULE)
def test_restart_schedule(n, expected):
    """
    Test the default number of restarts by problem size.
    """
    assert Emotion_structure.gwot.restart_schedule(n) == expected


@pytest.mark.parametrize('overrides', EXAMPLE_BAD_CONFIGS)
def test_solver_config_validate(overrides):
    """
    Test that nonpositive solver settings are rejected.
    """
    with pytest.raises(SolverError):
        SolverConfig(**overrides).validate()


def test_solve_size_mismatch():
    """
    Test that RDMs of different sizes cannot be aligned.
    """
    rng = np.random.default_rng(3)
    with pytest.raises(SolverError):
        Emotion_structure.gwot.solve_gwot(random_rdm(rng, 4), random_rdm(rng, 5), SolverConfig(n_restarts=1))


def test_solve_matches_brute_force():
    """
    Test on small problems that random-vertex restarts are never worse than the best permutation.
    """
    rng = np.random.default_rng(4)
    config = SolverConfig(n_restarts=200, histogram_match_inputs=False)
    for n in (4, 5, 6, 7):
        for _ in range(50):
            d1, d2 = random_rdm(rng, n), random_rdm(rng, n, prefix='t')
            _, brute_gwd = Emotion_structure.gwot.brute_force_gwot(d1, d2)
            result = Emotion_structure.gwot.solve_gwot(d1, d2, config)
            assert result.best_plan.is_feasible(1e-9)
            assert result.best_gwd <= brute_gwd + 1e-9 * max(1.0, brute_gwd)
            assert result.best_gwd == pytest.approx(
                Emotion_structure.gwot.gw_objective(d1, d2, result.best_plan), rel=1e-9, abs=1e-12)


def test_solve_recovers_planted_permutation():
    """
    Test that a relabelled copy of an RDM is matched back perfectly from random starts.
    """
    rng = np.random.default_rng(5)
    d1 = geometric_rdm(rng, 30)
    permutation = rng.permutation(30)
    d2 = d1.permuted(permutation)
    result = Emotion_structure.gwot.solve_gwot(d1, d2, SolverConfig(n_restarts=500))

    assert result.best_gwd < 1e-8
    assert result.best_plan.row_ids == d1.stimulus_ids
    assert result.best_plan.col_ids == d2.stimulus_ids
    truth = Emotion_structure.evaluation.identity_assignment(result.best_plan.row_ids, result.best_plan.col_ids)
    assert Emotion_structure.evaluation.matching_rate(result.best_plan, truth) == 100.0


def test_gw_objective_relabelling_invariant():
    """
    Test that relabelling both structures and the plan together leaves the objective unchanged.
    """
    rng = np.random.default_rng(9)
    for _ in range(20):
        d1, d2 = random_rdm(rng, 6), random_rdm(rng, 6, prefix='t')
        plan = mixed_plan(rng, 6)
        p, q = rng.permutation(6), rng.permutation(6)
        relabelled = TransportPlan(plan.values[np.ix_(p, q)])
        assert Emotion_structure.gwot.gw_objective(d1.permuted(p), d2.permuted(q), relabelled) == pytest.approx(
            Emotion_structure.gwot.gw_objective(d1, d2, plan), rel=1e-9, abs=1e-12)


def test_default_restarts_follow_schedule():
    """
    Test that an unset restart count resolves to the size-dependent default.
    """
    assert SolverConfig().n_restarts is None
    assert SolverConfig().restarts_for(30) == 10_000
    assert SolverConfig().restarts_for(800) == 1_000
    assert SolverConfig().restarts_for(1200) == 200
    assert SolverConfig(n_restarts=3).restarts_for(1200) == 3


def test_exchange_polish_never_worse():
    """
    Test that exchange polishing only lowers each restart's objective.
    """
    rng = np.random.default_rng(10)
    d1, d2 = geometric_rdm(rng, 12), geometric_rdm(rng, 12, prefix='t')
    plain = Emotion_structure.gwot.solve_gwot(d1, d2, SolverConfig(n_restarts=20, pairwise_exchange=False))
    polished = Emotion_structure.gwot.solve_gwot(d1, d2, SolverConfig(n_restarts=20))

    assert all(log.exchange_rounds == 0 for log in plain.restarts)
    assert [log.initial_gwd for log in plain.restarts] == [log.initial_gwd for log in polished.restarts]
    for before, after in zip(plain.per_restart_gwd, polished.per_restart_gwd):
        assert after <= before + 1e-12
    assert polished.best_plan.is_feasible()


def test_solve_result_bookkeeping():
    """
    Test that the best restart is the lowest-index minimum of the per-restart values.
    """
    rng = np.random.default_rng(6)
    d1, d2 = random_rdm(rng, 8), random_rdm(rng, 8)
    result = Emotion_structure.gwot.solve_gwot(d1, d2, SolverConfig(n_restarts=12, base_seed=40))

    assert len(result.per_restart_gwd) == 12
    assert len(result.converged_flags) == 12
    assert result.best_gwd == min(result.per_restart_gwd)
    assert result.best_restart == result.per_restart_gwd.index(result.best_gwd)
    assert [log.seed for log in result.restarts] == list(range(40, 52))
    assert all(log.gwd <= log.initial_gwd + 1e-12 for log in result.restarts)


def test_solve_independent_of_n_jobs():
    """
    Test that parallel restarts give the same result as sequential ones.
    """
    rng = np.random.default_rng(7)
    d1, d2 = random_rdm(rng, 10), random_rdm(rng, 10)
    serial = Emotion_structure.gwot.solve_gwot(d1, d2, SolverConfig(n_restarts=8, n_jobs=1))
    parallel = Emotion_structure.gwot.solve_gwot(d1, d2, SolverConfig(n_restarts=8, n_jobs=2))
    np.testing.assert_array_equal(serial.best_plan.values, parallel.best_plan.values)
    assert serial.per_restart_gwd == parallel.per_restart_gwd
    assert serial.best_restart == parallel.best_restart


def test_brute_force_limit():
    """
    Test that exhaustive search refuses large problems.
    """
    rng = np.random.default_rng(8)
    with pytest.raises(SolverError):
        Emotion_structure.gwot.brute_force_gwot(random_rdm(rng, 9), random_rdm(rng, 9))
