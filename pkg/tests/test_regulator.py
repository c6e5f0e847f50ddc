import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import cnormal, equivalence_instance, random_closed_loop, random_exosystem
from roreg import closed_loop, regulator
from roreg.controller import Controller
from roreg.errors import DimensionError, ResonanceError
from roreg.exosystem import Block, Exosystem
from roreg.heat_bench import build_heat_plant, constant_reference_setup
from roreg.modal_plant import ModalPlant
from roreg.regulator import ClosedLoopSystem, solve_sylvester


def const_exo():
    return Exosystem((Block(0, 0.0, 1),))


def heat_closed_loop():
    plant, exo, E, F, ctrl, _ = constant_reference_setup()
    return closed_loop.assemble(plant, ctrl, E, F), exo, plant, ctrl, F


# -- Sylvester -------------------------------------------------------------------------


def test_scalar_sylvester():
    sol = solve_sylvester(ClosedLoopSystem([[-1.0]], [[1.0]], [[1.0]], [[0.0]]), const_exo())
    np.testing.assert_allclose(sol.matrix(), [[1.0]])
    assert sol.max_residual() == 0.0


def test_zero_input_gives_zero_solution():
    sol = solve_sylvester(ClosedLoopSystem(-np.eye(3), np.zeros((3, 1)), np.ones((1, 3)), [[0.0]]), const_exo())
    assert not np.any(sol.matrix()) and sol.max_residual() == 0.0


def test_two_step_chain_by_hand():
    exo = Exosystem((Block(0, 0.0, 2),))
    b1, b2 = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
    Be = np.column_stack([b1, b2])  # flat order l = 1, 2
    sol = solve_sylvester(ClosedLoopSystem(-np.eye(2), Be, np.eye(2), np.zeros((2, 2))), exo)
    np.testing.assert_allclose(sol.columns[(0, 1)], b1)
    np.testing.assert_allclose(sol.columns[(0, 2)], b2 - b1)


def test_resonance_is_an_error():
    cl = ClosedLoopSystem([[0.0]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(ResonanceError) as err:
        solve_sylvester(cl, const_exo())
    assert err.value.k == 0


def test_input_dimension_checked():
    with pytest.raises(DimensionError):
        solve_sylvester(ClosedLoopSystem(-np.eye(2), np.zeros((2, 3)), np.eye(2), np.zeros((2, 3))), const_exo())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8))
def test_sylvester_residual_and_formula(seed, n):
    rng = np.random.default_rng(seed)
    exo = random_exosystem(rng, max_blocks=3)
    cl = random_closed_loop(rng, n, exo.dim)
    sol = solve_sylvester(cl, exo)
    assert sol.max_residual() <= 1e-10 * (cl.norm() + 1)
    assert max(sol.formula_deviation.values()) <= 1e-10
    # the dense matrix satisfies the full equation
    Sig = sol.matrix()
    np.testing.assert_allclose(Sig @ exo.generator(), cl.Ae @ Sig + cl.Be, atol=1e-9 * (cl.norm() + 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_block_decoupling(seed):
    rng = np.random.default_rng(seed)
    exo = random_exosystem(rng, max_blocks=3)
    cl = random_closed_loop(rng, int(rng.integers(1, 9)), exo.dim)
    full = solve_sylvester(cl, exo)
    for b in exo.blocks:
        part = solve_sylvester(cl.with_input(cl.Be @ exo.projector(b.k)), exo)
        for (k, l), col in part.columns.items():
            if k == b.k:
                np.testing.assert_array_equal(col, full.columns[(k, l)])
            else:
                assert not np.any(col)


def test_csv_rows_and_json():
    sol = solve_sylvester(ClosedLoopSystem(-np.eye(2), [[1.0], [2j]], np.eye(2), np.zeros((2, 1))), const_exo())
    assert sol.csv_rows() == [(0, 0, 1.0, 0.0), (0, 1, 0.0, 2.0)]
    js = sol.to_json()
    assert js["max_residual"] == 0.0 and js["residuals"][0]["k"] == 0


def test_series_norm_weights():
    exo = Exosystem(((0, 0.0, 1), (1, 2.0, 1)), alpha=1.0)
    cl = ClosedLoopSystem(-np.eye(1), [[1.0, 0.0]], [[1.0]], [[0.0, 0.0]])
    sol = solve_sylvester(cl, exo)
    assert sol.series_norm_sq() == pytest.approx(1.0)
    assert sol.series_norm_sq(alpha=0.0) == pytest.approx(1.0)


# -- regulation constraint ------------------------------------------------------------


def test_heat_regulation_holds():
    cl, exo, *_ = heat_closed_loop()
    res, ok = regulator.regulation_constraint(solve_sylvester(cl, exo), cl)
    assert ok and max(res.values()) <= 1e-8


def test_zero_gain_residual_is_reference():
    plant = build_heat_plant(31)
    ctrl = Controller(-np.eye(2), 0.2 * np.eye(2), np.zeros((2, 2)))
    F = -np.array([[1.0], [3.0]]) / 5
    cl = closed_loop.assemble(plant, ctrl, None, F)
    res, ok = regulator.regulation_constraint(solve_sylvester(cl, const_exo()), cl)
    assert not ok and res[(0, 1)] == pytest.approx(np.linalg.norm(F))


def test_no_signals_no_residual():
    plant, exo, _, _, ctrl, _ = constant_reference_setup()
    cl = closed_loop.assemble(plant, ctrl, np.zeros((31, 1)), np.zeros((2, 1)))
    sol = solve_sylvester(cl, exo)
    assert not np.any(sol.matrix()) and max(regulator.regulation_constraint(sol, cl)[0].values()) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_resolvent_bound_per_column(seed):
    rng = np.random.default_rng(seed)
    exo = random_exosystem(rng)
    exo = Exosystem(exo.blocks, alpha=float(rng.uniform(0, 2)))
    cl = random_closed_loop(rng, int(rng.integers(1, 8)), exo.dim)
    for lhs, rhs in regulator.column_bound_check(cl, solve_sylvester(cl, exo)).values():
        assert lhs <= rhs * (1 + 1e-10)


# -- robustness -------------------------------------------------------------------------


def test_robustness_trivial_data():
    plant, exo, _, _, ctrl, _ = constant_reference_setup()
    e = regulator.robustness_equations(ctrl, plant, None, np.zeros((2, 1)), exo, 0)
    assert e.solvable and e.lhs_residual == 0.0 and not np.any(e.z)
    z, res = regulator.per_frequency_fixed_point(ctrl, plant, None, np.zeros((2, 1)), exo, 0)
    assert not np.any(z) and res == 0.0


def test_heat_controller_robust_to_any_output_perturbation():
    plant, exo, _, _, ctrl, _ = constant_reference_setup()
    rng = np.random.default_rng(7)
    for _ in range(10):
        E, F = cnormal(rng, 31, 1), cnormal(rng, 2, 1)
        e = regulator.robustness_equations(ctrl, plant, E, F, exo, 0)
        assert e.solvable and e.unique
        z, res = regulator.per_frequency_fixed_point(ctrl, plant, E, F, exo, 0)
        assert res <= 1e-10 * (1 + np.linalg.norm(F))
        # both characterisations select the same controller state
        np.testing.assert_allclose(z, e.z, atol=1e-9)


def test_no_internal_model_not_solvable():
    plant = build_heat_plant(8)
    ctrl = Controller(-np.eye(2), np.eye(2), np.eye(2))
    F = np.array([[1.0], [0.5]])
    assert not regulator.robustness_equations(ctrl, plant, None, F, const_exo(), 0).solvable
    _, res = regulator.per_frequency_fixed_point(ctrl, plant, None, F, const_exo(), 0)
    assert res > 1e-3


def test_one_dimensional_counterexample():
    # single mode, controller pole at -2: the fixed point leaves a nonzero regulation error
    plant = ModalPlant([-1.0], [[1.0]], [[1.0]])
    ctrl = Controller([[-2.0]], [[1.0]], [[-1.0]])
    _, res = regulator.per_frequency_fixed_point(ctrl, plant, None, [[1.0]], const_exo(), 0)
    # steady state: z = e/2, y = P(0) K z = -e/2 and e = y + 1, so e = 2/3
    assert res == pytest.approx(2 / 3)


def test_fixed_point_singular_raises():
    plant = ModalPlant([-1.0], [[1.0]], [[1.0]])
    # A_e = [[-1, 1], [1, -1]] has an eigenvalue at 0
    ctrl = Controller([[-1.0]], [[1.0]], [[1.0]])
    with pytest.raises(ResonanceError):
        regulator.per_frequency_fixed_point(ctrl, plant, None, [[1.0]], const_exo(), 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.booleans())
def test_solvability_matches_perturbed_regulation(seed, positive):
    rng = np.random.default_rng(seed)
    plant, exo, ctrl, _ = equivalence_instance(rng, positive)
    cl0 = closed_loop.assemble(plant, ctrl)
    for E, F in regulator.random_perturbations(rng, plant.N, plant.n_outputs, exo.dim, 3):
        cl = closed_loop.assemble(plant, ctrl, E, F)
        rep = regulator.robustness_report(ctrl, plant, E, F, exo, cl=cl)
        regulates = all(e.regulation_residual <= 1e-8 * (1 + np.linalg.norm(F)) for e in rep.entries)
        assert all(e.solvable for e in rep.entries) == regulates
        for e in rep.entries:
            _, res = regulator.per_frequency_fixed_point(ctrl, plant, E, F, exo, e.k)
            assert (res <= 1e-8 * (1 + np.linalg.norm(F))) == e.solvable
    assert cl0.spectral_abscissa < 0


def test_random_perturbations_shapes():
    pairs = regulator.random_perturbations(np.random.default_rng(0), 4, 2, 3, 5, scale=0.1)
    assert len(pairs) == 5 and pairs[0][0].shape == (4, 3) and pairs[0][1].shape == (2, 3)


def test_report_json():
    plant, exo, E, F, ctrl, _ = constant_reference_setup()
    cl = closed_loop.assemble(plant, ctrl, E, F)
    js = regulator.robustness_report(ctrl, plant, E, F, exo, cl=cl).to_json()
    assert js["robust"] and js["frequencies"][0]["regulation_residual"] <= 1e-12


# -- state formula --------------------------------------------------------------------------


def test_state_formula_without_transient():
    rng = np.random.default_rng(3)
    exo = Exosystem((Block(0, 1.0, 2),))
    cl = random_closed_loop(rng, 5, 2)
    sol = solve_sylvester(cl, exo)
    v0 = cnormal(rng, 2)
    xe, _ = regulator.closed_loop_state_formula(cl, sol, sol.apply(v0), v0, exo, 2.5)
    np.testing.assert_allclose(xe, sol.apply(exo.group_action(v0, 2.5)), atol=1e-12)


def test_state_formula_pure_decay():
    from scipy.linalg import expm

    rng = np.random.default_rng(4)
    exo = Exosystem((Block(0, 1.0, 1),))
    cl = random_closed_loop(rng, 4, 1)
    sol = solve_sylvester(cl, exo)
    x0 = cnormal(rng, 4)
    xe, e = regulator.closed_loop_state_formula(cl, sol, x0, np.zeros(1), exo, 1.3)
    np.testing.assert_allclose(xe, expm(1.3 * cl.Ae) @ x0, atol=1e-12)
    np.testing.assert_allclose(e, cl.Ce @ xe)


def test_propagator_paths_agree():
    from scipy.linalg import expm

    A = np.array([[-1.0, 1.0], [0.0, -1.0]])  # defective: eigenvector matrix is singular
    p = regulator.Propagator(A)
    assert p.method == "expm"
    np.testing.assert_allclose(p.matrix(2.0), expm(2 * A))
    q = regulator.Propagator(np.diag([-1.0, -2.0]))
    assert q.method == "eig"
    np.testing.assert_allclose(q.apply(np.ones(2), 1.0), np.exp([-1.0, -2.0]))


def test_closed_loop_system_properties():
    cl = ClosedLoopSystem(np.diag([-1.0, -3.0]), np.zeros((2, 1)), np.eye(2), np.zeros((2, 1)))
    assert cl.spectral_abscissa == -1.0 and cl.dim == 2
    assert cl.resonance_distance(0.0) == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        ClosedLoopSystem(np.eye(2), np.zeros((2, 1)), np.eye(3), np.zeros((3, 1)))
