# -*- coding: utf-8 -*-
"""Tests for the characteristic-grid solvers, BSDE recovery and the pathwise checks."""

import math

import numpy as np
import pytest

from smctrl import (
    AgePoint,
    ConfigurationError,
    ContractViolationError,
    DomainError,
    GeneratorSpec,
    NonConvergenceError,
    NumericalError,
    SemiMarkovModel,
    Trajectory,
    ValueField,
    apply_L,
    check_energy_identity,
    check_ito_formula,
    contraction_constant,
    recover_bsde,
    simulate_path,
    solve_backward,
    solve_hjb,
    solve_picard,
    spot_check_lipschitz,
    value_at,
)
from smctrl.config import RUN_CONFIG
from smctrl.kolmogorov import grid_shape
from smctrl.oracle import ExampleConfig, example_model, example_problem, oracle_y0, oracle_y1


def random_terminal(rng: np.random.Generator, n_states: int):
    amp = rng.uniform(-1.0, 1.0, size=n_states)
    freq = rng.uniform(0.5, 2.0, size=n_states)
    return lambda x, a: float(amp[x] * math.cos(freq[x] * a))


def random_forcing(rng: np.random.Generator, n_states: int):
    c0 = rng.uniform(-1.0, 1.0, size=n_states)
    c1 = rng.uniform(-1.0, 1.0, size=n_states)
    return lambda t, x, ages: c0[x] + c1[x] * np.sin(np.asarray(ages) + t)


def random_linear(rng: np.random.Generator, model: SemiMarkovModel, scale: float = 0.1) -> GeneratorSpec:
    """Linear generator with |kappa| <= scale·α and |gamma| <= scale."""
    alpha = model.jump_rate_bound
    n = model.n_states
    return GeneratorSpec.linear(
        model,
        h=random_forcing(rng, n),
        kappa=float(rng.uniform(-scale, scale) * alpha),
        gamma=rng.uniform(-scale, scale, size=(n, n)),
    )


def example_errors(alpha: float, dt: float) -> float:
    """Sup-norm error of the HJB grid against the closed forms on the worked example."""
    cfg = ExampleConfig(alpha=alpha, horizon=1.0)
    model = example_model(cfg)
    field = solve_hjb(example_problem(cfg, model), model, dt, a_max=0.0)
    times = field.times()
    y0 = np.array([oracle_y0(cfg, t, model) for t in times])
    y1 = np.array([oracle_y1(cfg, t, t, model) for t in times])
    err0 = np.abs(field.values[:, 0, :] - y0[:, None]).max()
    err1 = np.abs(field.values[:, 1, :] - y1[:, None]).max()
    return float(max(err0, err1))


# =============================================================================
# Operator and generator
# =============================================================================


class TestApplyL:

    def test_constant_field(self, rng, random_model):
        """L annihilates constants."""
        model = random_model(rng)
        assert apply_L(model, lambda y, a: 3.5, 0, 0.4) == pytest.approx(0.0, abs=1e-15)

    def test_zero_hazard(self, no_jump_model):
        """λ ≡ 0 gives 0."""
        assert apply_L(no_jump_model(), lambda y, a: y + a, 0, 1.0) == 0.0

    def test_two_state_swap(self, swap_model):
        """λ = 2 swapping, field(y, 0) = 1 and field(x, a) = 0: value 2."""
        model = swap_model(2.0)
        field = lambda y, a: 1.0 if a == 0.0 else 0.0  # noqa: E731
        assert apply_L(model, field, 0, 0.5) == 2.0


class TestGenerator:

    def test_contraction_constant(self, swap_model):
        """C = max{2α, 2L√α, L'}."""
        model = swap_model(2.0)
        assert contraction_constant(model, GeneratorSpec.zero()) == 4.0
        gen = GeneratorSpec.linear(model, kappa=9.0, gamma=0.5)
        assert gen.lipschitz_z == pytest.approx(0.5 * math.sqrt(2.0))
        assert contraction_constant(model, gen) == 9.0

    def test_spot_check_accepts_linear(self, rng, random_model):
        """The linear family satisfies its declared constants."""
        model = random_model(rng)
        observed = spot_check_lipschitz(model, random_linear(rng, model, scale=0.5), rng, samples=100)
        assert observed["lipschitz_z"] >= 0.0

    def test_spot_check_rejects_understated(self, rng, random_model):
        """A z-dependent driver declared with L = 0 fails the spot check."""
        model = random_model(rng)
        gen = GeneratorSpec.pointwise(lambda t, x, a, y, z: float(z.sum()), lipschitz_z=0.0, lipschitz_y=0.0)
        with pytest.raises(ContractViolationError):
            spot_check_lipschitz(model, gen, rng, samples=20)


# =============================================================================
# Backward solver
# =============================================================================


class TestGrid:

    def test_dt_must_divide_horizon(self):
        """dt not dividing T is a configuration error."""
        with pytest.raises(ConfigurationError):
            grid_shape(1.0, 0.3, 0.0)

    def test_age_axis_covers_horizon(self):
        """J·dt >= a_max + T."""
        N, J = grid_shape(1.0, 0.1, 0.55)
        assert N == 10 and J * 0.1 >= 1.55 - 1e-12


class TestSolveBackward:

    def test_terminal_exact(self, rng, random_model):
        """The last time level equals g on the grid bit for bit."""
        model = random_model(rng)
        g = random_terminal(rng, model.n_states)
        field = solve_backward(model, random_linear(rng, model), g, 1.0, 0.05, 0.5)
        for x in range(model.n_states):
            assert all(field.values[-1, x, j] == g(x, a) for j, a in enumerate(field.ages()))

    def test_pure_transport(self, rng, no_jump_model):
        """f ≡ 0, λ ≡ 0: v(t, x, a) = g(x, a + T − t) exactly on reachable nodes."""
        model = no_jump_model(3)
        g = random_terminal(rng, 3)
        field = solve_backward(model, GeneratorSpec.zero(), g, 1.0, 0.05, 0.5)
        N, J = field.n_steps, field.n_ages
        ages = field.ages()
        for i in range(N + 1):
            for j in range(J - (N - i) + 1):
                for x in range(3):
                    assert field.values[i, x, j] == g(x, ages[j + N - i])

    def test_constant_forcing(self, rng, no_jump_model):
        """f ≡ c, λ ≡ 0: v = g(x, a + T − t) + c(T − t)."""
        model = no_jump_model(2)
        g = random_terminal(rng, 2)
        field = solve_backward(model, GeneratorSpec.constant(0.7), g, 1.0, 0.05, 0.5)
        for i, t in enumerate(field.times()):
            for j in range(field.n_ages - (field.n_steps - i) + 1):
                expected = g(0, field.ages()[j + field.n_steps - i]) + 0.7 * (1.0 - t)
                assert field.values[i, 0, j] == pytest.approx(expected, abs=1e-12)

    def test_non_finite_step(self, swap_model):
        """An infinite driver raises NumericalError citing the node."""
        with pytest.raises(NumericalError) as exc:
            solve_backward(swap_model(), GeneratorSpec.constant(math.inf), lambda x, a: 0.0, 1.0, 0.1, 0.0)
        assert exc.value.location[0] == 9

    def test_example_value(self):
        """Worked example, α = 2: v(0, x1, 0) within 10·dt of 1 − 2/e."""
        cfg = ExampleConfig(alpha=2.0)
        model = example_model(cfg)
        field = solve_hjb(example_problem(cfg, model), model, 0.01, 0.0)
        assert abs(field(0.0, 0, 0.0) - (1 - 2 * math.exp(-1))) <= 0.1

    def test_grid_convergence(self):
        """Halving dt divides the sup-norm error by a factor in [1.7, 2.3]."""
        for alpha in (0.5, 2.0):
            errors = [example_errors(alpha, dt) for dt in (4e-3, 2e-3, 1e-3)]
            for coarse, fine in zip(errors, errors[1:]):
                assert 1.7 <= coarse / fine <= 2.3


class TestComparison:

    def test_ordered_data_ordered_fields(self, random_model):
        """f1 <= f2 and g1 <= g2 give v1 <= v2 + 2·dt at every node."""
        rng = np.random.default_rng(3141)
        dt = 0.05
        for _ in range(200):
            model = random_model(rng, n_states=3, max_pieces=2)
            n = model.n_states
            kappa = float(rng.uniform(-0.5, 0.5))
            gamma = rng.uniform(-0.9, 1.0, size=(n, n))
            base = random_forcing(rng, n)
            bump = rng.uniform(0.0, 0.5, size=n)
            g1 = random_terminal(rng, n)
            lift = rng.uniform(0.0, 0.3, size=n)
            f1 = GeneratorSpec.linear(model, h=base, kappa=kappa, gamma=gamma)
            f2 = GeneratorSpec.linear(
                model, h=lambda t, x, a, base=base, bump=bump: base(t, x, a) + bump[x], kappa=kappa, gamma=gamma
            )
            v1 = solve_backward(model, f1, g1, 1.0, dt, 0.5).values
            v2 = solve_backward(model, f2, lambda x, a, g1=g1, lift=lift: g1(x, a) + lift[x], 1.0, dt, 0.5).values
            assert np.all(v1 <= v2 + 2 * dt)

    def test_hamiltonian_costs_ordered(self, rng, random_model, random_problem):
        """Raising the running cost of every action cannot lower the HJB value."""
        from smctrl import ControlProblem

        for _ in range(10):
            model = random_model(rng)
            problem = random_problem(rng, model)
            raised = ControlProblem(
                problem.actions,
                problem.rate_multiplier,
                lambda t, x, a, u, p=problem: p.running_cost(t, x, a, u) + 0.25,
                problem.terminal_cost,
                problem.horizon,
                problem.c_r,
                rate_matrix=problem._rate_matrix,
                cost_vector=lambda t, x, ages, k, p=problem: p.cost_vector(t, x, ages, k) + 0.25,
            )
            v1 = solve_hjb(problem, model, 0.05, 0.5).values
            v2 = solve_hjb(raised, model, 0.05, 0.5).values
            assert np.all(v1 <= v2 + 2 * 0.05)


class TestContinuousDependence:

    def test_terminal_perturbation(self, rng, random_model):
        """Shifting g by ε moves v by at most e^{|κ|T}·ε, stably under refinement."""
        model = random_model(rng)
        gen = random_linear(rng, model, scale=0.3)
        g = random_terminal(rng, model.n_states)
        eps = 1e-3
        ratios = []
        for dt in (0.02, 0.01):
            v = solve_backward(model, gen, g, 1.0, dt, 0.5).values
            w = solve_backward(model, gen, lambda x, a: g(x, a) + eps, 1.0, dt, 0.5).values
            ratios.append(float(np.abs(w - v).max() / eps))
        kappa_bound = math.exp(0.3 * model.jump_rate_bound)
        assert max(ratios) <= kappa_bound + 1e-6
        assert abs(ratios[0] - ratios[1]) <= 0.05 * ratios[1]


# =============================================================================
# Picard solver
# =============================================================================


class TestSolvePicard:

    def test_pure_transport_one_iteration(self, rng, no_jump_model):
        """f ≡ 0, λ ≡ 0 converges in one iteration."""
        model = no_jump_model(2)
        g = random_terminal(rng, 2)
        field, report = solve_picard(model, GeneratorSpec.zero(), g, 1.0, 0.1, 0.5)
        assert report.iterations == 1
        backward = solve_backward(model, GeneratorSpec.zero(), g, 1.0, 0.1, 0.5)
        assert np.array_equal(field.values, backward.values)

    def test_beta_must_exceed_constant(self, swap_model):
        """beta <= C is rejected."""
        with pytest.raises(ConfigurationError):
            solve_picard(swap_model(), GeneratorSpec.zero(), lambda x, a: 0.0, 1.0, 0.1, 0.0, beta=1.0)

    def test_non_convergence(self, rng, random_model):
        """max_iter too small raises NonConvergenceError with the last distance."""
        model = random_model(rng)
        with pytest.raises(NonConvergenceError) as exc:
            solve_picard(model, random_linear(rng, model), random_terminal(rng, 3), 1.0, 0.05, 0.5, max_iter=2)
        assert exc.value.iterations == 2 and exc.value.final_distance > 0

    def _contraction_case(self, rng, random_model):
        model = random_model(rng)
        gen = random_linear(rng, model)
        _, report = solve_picard(model, gen, random_terminal(rng, model.n_states), 1.0, 0.02, 0.5)
        assert report.converged
        assert report.beta == pytest.approx(RUN_CONFIG["picard_beta_factor"] * report.constant)
        assert all(r <= report.constant / report.beta + 0.05 for r in report.ratios)

    def test_contraction_ratios(self, random_model):
        """Successive distances shrink by at most C/β + 0.05."""
        rng = np.random.default_rng(55)
        for _ in range(3):
            self._contraction_case(rng, random_model)

    @pytest.mark.slow
    def test_contraction_ratios_full(self, random_model):
        """Ten random problems at β = 4C."""
        rng = np.random.default_rng(56)
        for _ in range(10):
            self._contraction_case(rng, random_model)

    def test_agrees_with_backward_on_example(self, worked_model, worked_problem):
        """Both schemes agree within 5·dt on the worked example."""
        from smctrl import hamiltonian_generator

        dt = 0.01
        backward = solve_hjb(worked_problem, worked_model, dt, 0.0)
        picard, _ = solve_picard(
            worked_model, hamiltonian_generator(worked_problem, worked_model), worked_problem.terminal_cost, 1.0, dt, 0.0
        )
        assert np.abs(picard.values - backward.values).max() <= RUN_CONFIG["scheme_budget"] * dt

    def test_agrees_with_backward_random(self, rng, random_model):
        """Both schemes agree within 5·dt on a random linear problem."""
        model = random_model(rng)
        gen = random_linear(rng, model)
        g = random_terminal(rng, model.n_states)
        dt = 0.02
        backward = solve_backward(model, gen, g, 1.0, dt, 0.5)
        picard, _ = solve_picard(model, gen, g, 1.0, dt, 0.5)
        assert np.abs(picard.values - backward.values).max() <= 5 * dt


# =============================================================================
# Value field and BSDE recovery
# =============================================================================


class TestValueField:

    def test_exact_terminal(self, rng, random_model):
        """value_at at t = T returns g exactly, also off the grid."""
        model = random_model(rng)
        g = random_terminal(rng, model.n_states)
        field = solve_backward(model, random_linear(rng, model), g, 1.0, 0.05, 0.5)
        assert value_at(field, 1.0, 1, 0.123) == g(1, 0.123)

    def test_nodes_reproduced(self, rng, random_model):
        """Evaluation at grid nodes returns the stored values."""
        model = random_model(rng)
        field = solve_backward(model, random_linear(rng, model), random_terminal(rng, 3), 1.0, 0.05, 0.5)
        assert field(0.5, 2, 0.25) == pytest.approx(field.node(10, 2, 5), abs=1e-12)

    def test_off_grid_queries(self, rng, random_model):
        """Times outside [0, T] and ages beyond the axis are domain errors."""
        model = random_model(rng)
        field = solve_backward(model, GeneratorSpec.zero(), lambda x, a: 0.0, 1.0, 0.1, 0.0)
        with pytest.raises(DomainError):
            field(1.5, 0, 0.0)
        with pytest.raises(DomainError):
            field(0.5, 0, 5.0)
        with pytest.raises(DomainError):
            field(0.5, 9, 0.0)

    def test_rows(self, no_jump_model):
        """to_rows emits one row per node."""
        field = solve_backward(no_jump_model(2), GeneratorSpec.zero(), lambda x, a: 1.0, 1.0, 0.25, 0.0)
        rows = list(field.to_rows())
        assert len(rows) == 5 * 2 * 5
        assert rows[0] == (0.0, "z0", 0.0, 1.0)


class TestRecoverBSDE:

    def test_terminal_value(self, rng, random_model):
        """Y at the end of the path equals g at the final point."""
        model = random_model(rng)
        g = random_terminal(rng, model.n_states)
        field = solve_backward(model, random_linear(rng, model), g, 1.0, 0.05, 0.5)
        traj = simulate_path(model, AgePoint(0, 0.25), 0.8, rng)
        bsde = recover_bsde(field, traj, 0.2)
        end = traj.segments()[-1]
        assert bsde.Y(0.8) == pytest.approx(g(end.state, end.age0 + 0.8 - end.s0), abs=1e-12)

    def test_transport_constant_in_s(self, rng, no_jump_model):
        """f ≡ 0, λ ≡ 0, no jumps: Y_s is constant along the path."""
        model = no_jump_model(2)
        g = random_terminal(rng, 2)
        field = solve_backward(model, GeneratorSpec.zero(), g, 1.0, 0.05, 0.5)
        bsde = recover_bsde(field, Trajectory(AgePoint(1, 0.1), 0.9), 0.1)
        values = [bsde.Y(s) for s in np.linspace(0.0, 0.9, 19)]
        assert np.allclose(values, values[-1], atol=1e-12)

    def test_example_z_difference(self, worked_model, worked_problem):
        """After the first jump Z(x4) − Z(x3) = 1."""
        field = solve_hjb(worked_problem, worked_model, 0.01, 0.0)
        traj = Trajectory(AgePoint(0, 0.0), 1.0, ((0.3, 1),))
        bsde = recover_bsde(field, traj, 0.0)
        for s in (0.35, 0.6, 0.95):
            assert bsde.Z(s, 3) - bsde.Z(s, 2) == pytest.approx(1.0, abs=1e-12)

    def test_jump_of_Y_is_Z_at_the_mark(self, rng, random_model):
        """At each jump Y − Y_left = Z(mark); between jumps Y_left = Y."""
        model = random_model(rng)
        g = random_terminal(rng, model.n_states)
        field = solve_backward(model, random_linear(rng, model), g, 1.0, 0.05, 0.5)
        traj = Trajectory(AgePoint(0, 0.25), 0.8, ((0.3, 1), (0.55, 2)))
        bsde = recover_bsde(field, traj, 0.2)
        for time, mark in traj.jumps:
            z = bsde.Z_vector(time)
            assert z.shape == (model.n_states,)
            assert bsde.Y(time) - bsde.Y_left(time) == pytest.approx(z[mark], abs=1e-12)
            assert z[mark] == bsde.Z(time, mark)
        for s in (0.1, 0.4, 0.7):
            assert bsde.Y_left(s) == bsde.Y(s)

    def test_horizon_too_long(self, rng, random_model):
        """A path running past the field horizon is rejected."""
        model = random_model(rng)
        field = solve_backward(model, GeneratorSpec.zero(), lambda x, a: 0.0, 1.0, 0.1, 0.5)
        with pytest.raises(DomainError):
            recover_bsde(field, Trajectory(AgePoint(0, 0.0), 0.9), 0.2)

    def test_off_grid_start_age(self, rng, random_model):
        """Start ages must be grid ages."""
        model = random_model(rng)
        field = solve_backward(model, GeneratorSpec.zero(), lambda x, a: 0.0, 1.0, 0.1, 0.5)
        with pytest.raises(DomainError):
            recover_bsde(field, Trajectory(AgePoint(0, 0.15), 0.5), 0.0)


# =============================================================================
# Pathwise chain rule
# =============================================================================


def smooth_field(rng: np.random.Generator, n_states: int, horizon: float, a_max: float):
    """Grid samples of sin(c1·t + c2·a + c3) per state; independent of dt given the coefficients."""
    coef = rng.uniform(-1.0, 1.0, size=(n_states, 3))

    def sample(step):
        N, J = grid_shape(horizon, step, a_max)
        t = np.arange(N + 1)[:, None, None] * step
        a = np.arange(J + 1)[None, None, :] * step
        values = np.sin(coef[None, :, 0:1] * t + coef[None, :, 1:2] * a + coef[None, :, 2:3])
        states = tuple(f"s{k}" for k in range(n_states))
        return ValueField(step, horizon, a_max, values, states)

    return sample


class TestItoFormula:

    def test_constant_field(self, rng, random_model):
        """A constant grid function has residual 0."""
        model = random_model(rng)
        N, J = grid_shape(1.0, 0.05, 0.5)
        field = ValueField(0.05, 1.0, 0.5, np.full((N + 1, 3, J + 1), 2.5), tuple(model.states))
        traj = simulate_path(model, AgePoint(1, 0.25), 1.0, rng)
        assert check_ito_formula(field, traj, 0.0, model) <= 1e-12

    def test_linear_in_time_no_jumps(self, no_jump_model):
        """v = t on a path without jumps: residual at machine precision."""
        model = no_jump_model(2)
        dt = 0.05
        N, J = grid_shape(1.0, dt, 0.5)
        values = np.broadcast_to((np.arange(N + 1) * dt)[:, None, None], (N + 1, 2, J + 1)).copy()
        field = ValueField(dt, 1.0, 0.5, values, ("z0", "z1"))
        traj = Trajectory(AgePoint(0, 0.1), 0.8)
        assert check_ito_formula(field, traj, 0.2, model) <= 1e-12

    def _residuals(self, model, sample, dt, n_paths, seed):
        field = sample(dt)
        out = []
        for k in range(n_paths):
            rng = np.random.default_rng(seed + k)
            traj = simulate_path(model, AgePoint(int(rng.integers(model.n_states)), 0.2), 0.8, rng)
            out.append(check_ito_formula(field, traj, 0.2, model))
        return np.array(out)

    def test_random_fields_bounded_and_first_order(self, random_model):
        """Residual <= 10·dt on random smooth fields and halves with dt."""
        rng = np.random.default_rng(8)
        steps = (0.02, 0.01, 0.005)
        residuals = {dt: [] for dt in steps}
        for case in range(4):
            model = random_model(rng, max_rate=1.0)
            sample = smooth_field(rng, model.n_states, 1.0, 0.5)
            for dt in steps:
                residuals[dt].append(self._residuals(model, sample, dt, 8, seed=100 * case))
        means = []
        for dt in steps:
            values = np.concatenate(residuals[dt])
            assert np.all(values <= 10 * dt)
            means.append(values.mean())
        for coarse, fine in zip(means, means[1:]):
            assert 1.7 <= coarse / fine <= 2.5

    @pytest.mark.slow
    def test_random_fields_full(self, random_model):
        """100 random (field, path) pairs."""
        rng = np.random.default_rng(9)
        for case in range(20):
            model = random_model(rng, max_rate=1.0)
            sample = smooth_field(rng, model.n_states, 1.0, 0.5)
            assert np.all(self._residuals(model, sample, 0.01, 5, seed=1000 + 10 * case) <= 10 * 0.01)


# =============================================================================
# Energy identity
# =============================================================================


class TestEnergyIdentity:

    def _case(self, rng, random_model, n_paths, dt, sigmas):
        model = random_model(rng, max_rate=1.5)
        forcing = random_forcing(rng, model.n_states)
        g = random_terminal(rng, model.n_states)
        field = solve_backward(model, GeneratorSpec.linear(model, h=forcing), g, 1.0, dt, 0.5)
        for s in (0.0, 0.5):
            check = check_energy_identity(field, model, forcing, AgePoint(0, 0.0), s, n_paths, seed=int(rng.integers(1 << 30)))
            assert check.passes(slack=10 * dt, sigmas=sigmas), check.to_dict()

    def test_linear_problems(self, random_model):
        """Both sides agree within 4σ + 10·dt."""
        rng = np.random.default_rng(21)
        for _ in range(2):
            self._case(rng, random_model, 1000, 0.02, 4.0)

    @pytest.mark.slow
    def test_linear_problems_full(self, random_model):
        """Five problems, 10^4 paths, 3σ + 10·dt."""
        rng = np.random.default_rng(22)
        for _ in range(5):
            self._case(rng, random_model, 10_000, 0.01, 3.0)
