import numpy as np
import pytest

from mkbary import (
    BarycenterProblem,
    Constraint,
    CostSpec,
    GroundSpace,
    NotConvexCost,
    NotOneDimensional,
    barycenter_fixed_support,
    barycenter_free_support,
    barycenter_quantile_1d,
    canonicalize,
    dirac,
    generate_random_measure,
    mixture,
    objective,
    pushforward,
)

LINE = GroundSpace.euclidean(1)
PLANE = GroundSpace.euclidean(2)
SQ = CostSpec.norm_power(2)
ABS = CostSpec.norm_power(1)

D0 = dirac(LINE, [0.0])
D1 = dirac(LINE, [1.0])


def two_dirac_problem(constraint, cost=SQ):
    return BarycenterProblem.make([(D0, 0.5), (D1, 0.5)], constraint, cost)


def test_objective_examples():
    p = BarycenterProblem.make([(D0, 1.0)], Constraint.quantile_1d(), SQ)
    assert objective(D0, p) == 0.0
    p2 = two_dirac_problem(Constraint.quantile_1d())
    assert objective(dirac(LINE, [0.5]), p2) == pytest.approx(0.25, abs=1e-12)
    assert objective(D0, p2) == pytest.approx(0.5, abs=1e-12)


def test_fixed_support_three_candidates():
    res = barycenter_fixed_support(two_dirac_problem(Constraint.simplex_over([[0.0], [0.5], [1.0]])))
    assert res.measure.same_as(dirac(LINE, [0.5]))
    assert res.objective == pytest.approx(0.25, abs=1e-12)
    assert res.certificate.kind == "lp_optimal"
    assert res.certificate.gap <= 1e-9 * 1.25


def test_fixed_support_single_input_identity():
    m = canonicalize([[0.0], [2.0]], [0.25, 0.75], LINE)
    prob = BarycenterProblem.make([(m, 1.0)], Constraint.simplex_over([[0.0], [1.0], [2.0]]), SQ)
    res = barycenter_fixed_support(prob)
    assert res.objective == pytest.approx(0.0, abs=1e-10)
    assert res.measure.same_as(m, atol=1e-8)


def test_fixed_support_tie_break_and_flag():
    res = barycenter_fixed_support(two_dirac_problem(Constraint.simplex_over([[0.0], [1.0]]), ABS))
    # objective is 1/2 across the whole simplex; lexicographic pick is delta_0
    assert res.objective == pytest.approx(0.5, abs=1e-12)
    assert res.measure.same_as(D0)
    assert res.multiple_optima
    assert res.alt_measure is not None and res.alt_measure.same_as(D1)


def test_barycenter_set_is_convex():
    prob = two_dirac_problem(Constraint.simplex_over([[0.0], [1.0]]), ABS)
    res = barycenter_fixed_support(prob)
    for t in (0.25, 0.5, 0.75):
        mix = mixture(res.measure, res.alt_measure, t)
        assert objective(mix, prob) == pytest.approx(res.objective, abs=1e-9)


def test_free_support_midpoint():
    for a, b in (((0.0,), (1.0,)), ((-2.0,), (0.5,))):
        prob = BarycenterProblem.make(
            [(dirac(LINE, a), 0.5), (dirac(LINE, b), 0.5)], Constraint.free(1), SQ
        )
        res = barycenter_free_support(prob, k=1)
        assert res.measure.same_as(dirac(LINE, [(a[0] + b[0]) / 2]), atol=1e-9)
        assert res.certificate.kind == "local_stationary"


def test_free_support_fixed_point():
    m = canonicalize([[0.0], [1.0], [3.0]], [0.2, 0.3, 0.5], LINE)
    prob = BarycenterProblem.make([(m, 1.0)], Constraint.free(3), SQ)
    res = barycenter_free_support(prob, k=3)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    assert res.measure.same_as(m, atol=1e-8)


def test_free_support_trace_nonincreasing():
    for seed in range(5):
        ms = [generate_random_measure(seed * 10 + i, [-1, -1], [1, 1], 4) for i in range(3)]
        prob = BarycenterProblem.make([(m, 1.0) for m in ms], Constraint.free(3), SQ)
        res = barycenter_free_support(prob, k=3, init_seed=seed)
        values = [v for _, v in res.trace]
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))
        assert values[-1] <= values[0] + 1e-9


def test_free_support_rejects_nonconvex():
    prob = two_dirac_problem(Constraint.free(1), CostSpec.metric_power(0.5))
    with pytest.raises(NotConvexCost):
        barycenter_free_support(prob, k=1)


def test_quantile_two_diracs():
    res = barycenter_quantile_1d(two_dirac_problem(Constraint.quantile_1d(), SQ))
    assert res.measure.same_as(dirac(LINE, [0.5]))
    assert res.objective == pytest.approx(0.25, abs=1e-12)

    res_abs = barycenter_quantile_1d(two_dirac_problem(Constraint.quantile_1d(), ABS))
    assert res_abs.measure.same_as(dirac(LINE, [0.5]))  # midpoint tie rule


def test_quantile_two_segments():
    m1 = canonicalize([[0.0], [2.0]], [0.5, 0.5], LINE)
    m2 = canonicalize([[1.0], [3.0]], [0.5, 0.5], LINE)
    prob = BarycenterProblem.make([(m1, 0.5), (m2, 0.5)], Constraint.quantile_1d(), SQ)
    res = barycenter_quantile_1d(prob)
    expected = canonicalize([[0.5], [2.5]], [0.5, 0.5], LINE)
    assert res.measure.same_as(expected)


def test_quantile_rejects_wrong_inputs():
    p2d = BarycenterProblem.make(
        [(dirac(PLANE, [0.0, 0.0]), 1.0)], Constraint.quantile_1d(), SQ
    )
    with pytest.raises(NotOneDimensional):
        barycenter_quantile_1d(p2d)
    with pytest.raises(NotConvexCost):
        barycenter_quantile_1d(two_dirac_problem(Constraint.quantile_1d(), CostSpec.metric_power(0.5)))


def test_quantile_matches_fixed_support_lp():
    # the LP on (quantile atoms + input atoms) must reproduce the objective
    for seed in range(20):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 5))
        inputs = [
            (generate_random_measure(seed * 50 + i, [-2.0], [2.0], 5), float(rng.uniform(0.2, 1)))
            for i in range(k)
        ]
        cost = SQ if seed % 2 == 0 else ABS
        prob = BarycenterProblem.make(inputs, Constraint.quantile_1d(), cost)
        qres = barycenter_quantile_1d(prob)
        grid = np.concatenate([qres.measure.atoms] + [m.atoms for m, _ in prob.inputs])
        grid = np.unique(np.round(grid, 12), axis=0)
        lp = barycenter_fixed_support(
            BarycenterProblem.make(list(prob.inputs), Constraint.simplex_over(grid), cost)
        )
        assert abs(qres.objective - lp.objective) <= 1e-7


def test_translation_equivariance_quadratic():
    shift = np.array([0.37])
    ms = [generate_random_measure(800 + i, [-1.0], [1.0], 4) for i in range(3)]
    prob = BarycenterProblem.make([(m, 1.0) for m in ms], Constraint.quantile_1d(), SQ)
    res = barycenter_quantile_1d(prob)
    shifted = [pushforward(m, lambda x: x + shift) for m in ms]
    prob_s = BarycenterProblem.make([(m, 1.0) for m in shifted], Constraint.quantile_1d(), SQ)
    res_s = barycenter_quantile_1d(prob_s)
    np.testing.assert_allclose(res_s.measure.atoms, res.measure.atoms + shift, atol=1e-9)
    assert res_s.objective == pytest.approx(res.objective, abs=1e-9)


def test_translation_equivariance_free_support():
    shift = np.array([0.5, -0.25])
    ms = [generate_random_measure(700 + i, [-1, -1], [1, 1], 3) for i in range(2)]
    prob = BarycenterProblem.make([(m, 1.0) for m in ms], Constraint.free(2), SQ)
    res = barycenter_free_support(prob, k=2, init_seed=1)
    shifted = [pushforward(m, lambda x: x + shift) for m in ms]
    prob_s = BarycenterProblem.make([(m, 1.0) for m in shifted], Constraint.free(2), SQ)
    res_s = barycenter_free_support(prob_s, k=2, init_seed=1)
    np.testing.assert_allclose(res_s.measure.atoms, res.measure.atoms + shift, atol=1e-9)
    assert res_s.objective == pytest.approx(res.objective, abs=1e-9)


def test_result_objective_recomputes():
    for seed in range(5):
        ms = [generate_random_measure(900 + seed * 7 + i, [0, 0], [1, 1], 4) for i in range(3)]
        grid = np.array([[x, y] for x in np.linspace(0, 1, 4) for y in np.linspace(0, 1, 4)])
        prob = BarycenterProblem.make([(m, 1.0) for m in ms], Constraint.simplex_over(grid), SQ)
        res = barycenter_fixed_support(prob)
        assert abs(objective(res.measure, prob) - res.objective) <= 1e-7


def test_problem_weights_normalized():
    prob = BarycenterProblem.make([(D0, 2.0), (D1, 2.0)], Constraint.quantile_1d(), SQ)
    lams = [lam for _, lam in prob.inputs]
    assert sum(lams) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        BarycenterProblem.make([], Constraint.quantile_1d(), SQ)
    with pytest.raises(ValueError):
        BarycenterProblem.make([(D0, -1.0)], Constraint.quantile_1d(), SQ)
