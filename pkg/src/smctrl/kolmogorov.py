# -*- coding: utf-8 -*-
"""
Nonlinear Kolmogorov equation on a characteristic-aligned grid. See README.md.

The grid uses the same step for time and age, so the directional derivative along
slope-1 characteristics is the diagonal difference (v[i+1][x][j+1] - v[i][x][j]) / dt.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from smctrl.config import RUN_CONFIG
from smctrl.errors import ConfigurationError, ContractViolationError, DomainError, NonConvergenceError, NumericalError
from smctrl.logger_config import get_logger
from smctrl.model import AgePoint, SemiMarkovModel
from smctrl.mpp import MarkField, integrate_compensator, integrate_p, integrate_time, segment_pieces
from smctrl.simulate import Trajectory, evaluate_state, left_state, map_paths, simulate_path

logger = get_logger()

GRID_TOL = 1e-9

# driver(t, x, ages, y_val, z) with ages and y_val of shape (n,) and z of shape (n, n_states)
Driver = Callable[[float, int, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
Terminal = Callable[[int, float], float]


# =============================================================================
# Generator
# =============================================================================


@dataclass(frozen=True)
class GeneratorSpec:
    """Driver f(t, x, a, y, z) with its declared Lipschitz constants L (in z) and L' (in y)."""

    driver: Driver
    lipschitz_z: float = 0.0
    lipschitz_y: float = 0.0
    name: str = "custom"

    def __call__(self, t: float, x: int, ages: np.ndarray, y_val: np.ndarray, z: np.ndarray) -> np.ndarray:
        ages = np.asarray(ages, dtype=float)
        out = self.driver(t, x, ages, np.asarray(y_val, dtype=float), np.asarray(z, dtype=float))
        return np.broadcast_to(np.asarray(out, dtype=float), ages.shape)

    @classmethod
    def zero(cls) -> "GeneratorSpec":
        return cls(driver=lambda t, x, a, y, z: np.zeros(len(a)), name="zero")

    @classmethod
    def constant(cls, c: float) -> "GeneratorSpec":
        return cls(driver=lambda t, x, a, y, z: np.full(len(a), float(c)), name=f"constant({c})")

    @classmethod
    def linear(
        cls,
        model: SemiMarkovModel,
        h: Union[None, float, Callable[[float, int, np.ndarray], np.ndarray]] = None,
        kappa: float = 0.0,
        gamma: Union[float, Sequence[Sequence[float]]] = 0.0,
    ) -> "GeneratorSpec":
        """
        f = h(t, x, a) + kappa·y + Σ_y z_y·gamma[x][y]·λ(x,a)·q̄(x,a,{y}).

        With every gamma entry > -1 this family satisfies the comparison hypothesis.
        """
        n = model.n_states
        gamma_arr = np.broadcast_to(np.asarray(gamma, dtype=float), (n, n)).copy()
        alpha = model.jump_rate_bound

        def forcing(t, x, ages):
            if h is None:
                return 0.0
            if callable(h):
                return np.asarray(h(t, x, ages), dtype=float)
            return float(h)

        def driver(t, x, ages, y_val, z):
            tilt = (z * gamma_arr[x][None, :] * model.rate_on(x, ages)).sum(axis=1)
            return forcing(t, x, ages) + kappa * y_val + tilt

        return cls(
            driver=driver,
            lipschitz_z=float(np.abs(gamma_arr).max()) * math.sqrt(alpha),
            lipschitz_y=abs(kappa),
            name="linear",
        )

    @classmethod
    def pointwise(
        cls,
        fn: Callable[[float, int, float, float, np.ndarray], float],
        lipschitz_z: float,
        lipschitz_y: float,
    ) -> "GeneratorSpec":
        """Wrap a scalar f(t, x, a, y, z_vector)."""

        def driver(t, x, ages, y_val, z):
            return np.array([fn(t, x, float(a), float(y), z[k]) for k, (a, y) in enumerate(zip(ages, y_val))])

        return cls(driver=driver, lipschitz_z=lipschitz_z, lipschitz_y=lipschitz_y, name="pointwise")


def contraction_constant(model: SemiMarkovModel, generator: GeneratorSpec) -> float:
    """C = max{2α, 2L√α, L'} with α = sup λ·q̄(·, K)."""
    alpha = model.jump_rate_bound
    return max(2.0 * alpha, 2.0 * generator.lipschitz_z * math.sqrt(alpha), generator.lipschitz_y)


def spot_check_lipschitz(
    model: SemiMarkovModel,
    generator: GeneratorSpec,
    rng: np.random.Generator,
    samples: Optional[int] = None,
    horizon: float = 1.0,
    scale: float = 1.0,
) -> Dict[str, float]:
    """
    Check the declared constants on random (t, x, a, y, z) pairs.

    Returns the largest observed ratios; raises ContractViolationError when a sample
    exceeds a declared constant.
    """
    samples = RUN_CONFIG["lipschitz_samples"] if samples is None else samples
    n = model.n_states
    age_top = max(float(model.breaks(x)[-1]) for x in range(n)) + 1.0
    worst_z, worst_y = 0.0, 0.0
    for _ in range(samples):
        t = float(rng.uniform(0.0, horizon))
        x = int(rng.integers(n))
        a = np.array([rng.uniform(0.0, age_top)])
        y1, y2 = rng.normal(0.0, scale, size=2)
        z1, z2 = rng.normal(0.0, scale, size=(2, 1, n))
        rates = model.rate_on(x, a)[0]

        dz = math.sqrt(float(((z1[0] - z2[0]) ** 2 * rates).sum()))
        df = abs(float(generator(t, x, a, np.array([y1]), z1)[0] - generator(t, x, a, np.array([y1]), z2)[0]))
        if df > generator.lipschitz_z * dz + 1e-9:
            raise ContractViolationError(
                f"generator {generator.name}: z-increment {df:.3e} exceeds L·|dz| = {generator.lipschitz_z * dz:.3e}"
            )
        if dz > 0:
            worst_z = max(worst_z, df / dz)

        dy = abs(y1 - y2)
        df = abs(float(generator(t, x, a, np.array([y1]), z1)[0] - generator(t, x, a, np.array([y2]), z1)[0]))
        if df > generator.lipschitz_y * dy + 1e-9:
            raise ContractViolationError(
                f"generator {generator.name}: y-increment {df:.3e} exceeds L'·|dy| = {generator.lipschitz_y * dy:.3e}"
            )
        if dy > 0:
            worst_y = max(worst_y, df / dy)
    return {"lipschitz_z": worst_z, "lipschitz_y": worst_y}


def apply_L(model: SemiMarkovModel, field: Callable[[int, float], float], x: int, a: float) -> float:
    """Σ_y [field(y, 0) − field(x, a)]·λ(x,a)·q̄(x,a,{y})."""
    x = model.index(x)
    lam = model.hazard_at(x, a)
    if lam == 0.0:
        return 0.0
    row = model.row_at(x, a)
    base = field(x, a)
    return float(lam * sum(row[y] * (field(y, 0.0) - base) for y in np.flatnonzero(row)))


# =============================================================================
# Value field
# =============================================================================


@dataclass(frozen=True, eq=False)
class ValueField:
    """
    Grid function v[i][x][j] = v(i·dt, x, j·dt), i = 0..N, j = 0..J.

    `terminal`, when set, is used for exact evaluation at t = T.
    """

    dt: float
    horizon: float
    a_max: float
    values: np.ndarray
    states: Tuple[str, ...]
    terminal: Optional[Terminal] = None

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_ages(self) -> int:
        return self.values.shape[2] - 1

    @property
    def age_top(self) -> float:
        return self.n_ages * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def ages(self) -> np.ndarray:
        return np.arange(self.n_ages + 1) * self.dt

    def _interp_age(self, i: np.ndarray, x: int, age: np.ndarray) -> np.ndarray:
        J = self.n_ages
        pos = age / self.dt
        j0 = np.clip(np.floor(pos), 0, J - 1).astype(int)
        w = np.clip(pos - j0, 0.0, 1.0)
        row = self.values[i, x]
        lo = np.take_along_axis(row, j0[..., None], axis=-1)[..., 0]
        hi = np.take_along_axis(row, (j0 + 1)[..., None], axis=-1)[..., 0]
        return lo * (1.0 - w) + hi * w

    def evaluate_many(self, t, x: int, a, exact_terminal: bool = True) -> np.ndarray:
        """
        Vectorized v(t, x, a): linear in time along the characteristic through (t, a),
        linear in age on each time level, and linear in time at fixed age when the
        characteristic leaves the age axis inside the cell.
        """
        if not (0 <= x < len(self.states)):
            raise DomainError(f"unknown state index {x}")
        t, a = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(a, dtype=float))
        t = np.atleast_1d(t)
        a = np.atleast_1d(a)
        if np.any(t < -GRID_TOL) or np.any(t > self.horizon + GRID_TOL):
            raise DomainError(f"time outside [0, {self.horizon}]")
        if np.any(a < -GRID_TOL) or np.any(a > self.age_top + GRID_TOL):
            raise DomainError(f"age outside [0, {self.age_top}] covered by the grid")
        N = self.n_steps
        tau = t / self.dt
        i = np.clip(np.floor(tau + GRID_TOL), 0, N - 1).astype(int)
        theta = np.clip(tau - i, 0.0, 1.0)
        a0 = a - theta * self.dt
        along = a0 >= -GRID_TOL
        lo_age = np.where(along, np.maximum(a0, 0.0), a)
        hi_age = np.where(along, np.maximum(a0, 0.0) + self.dt, a)
        out = (1.0 - theta) * self._interp_age(i, x, lo_age) + theta * self._interp_age(i + 1, x, hi_age)
        if exact_terminal and self.terminal is not None:
            at_end = t >= self.horizon - GRID_TOL
            if np.any(at_end):
                out = out.copy()
                for k in np.flatnonzero(at_end):
                    out[k] = self.terminal(x, float(a[k]))
        return out

    def evaluate(self, t: float, x: int, a: float, exact_terminal: bool = True) -> float:
        return float(self.evaluate_many(t, x, a, exact_terminal=exact_terminal)[0])

    __call__ = evaluate

    def node(self, i: int, x: int, j: int) -> float:
        return float(self.values[i, x, j])

    def to_rows(self, stride: int = 1) -> Iterator[Tuple[float, str, float, float]]:
        """(t, state, a, v) for every node, optionally every `stride`-th node on each axis."""
        times, ages = self.times(), self.ages()
        for i in range(0, self.n_steps + 1, stride):
            for x, sid in enumerate(self.states):
                for j in range(0, self.n_ages + 1, stride):
                    yield float(times[i]), sid, float(ages[j]), float(self.values[i, x, j])


def value_at(field: ValueField, t: float, x: int, a: float) -> float:
    """Interpolated v(t, x, a); exact terminal value at t = T when the field carries g."""
    return field.evaluate(t, x, a)


# =============================================================================
# Grid set-up
# =============================================================================


def grid_shape(T: float, dt: float, a_max: float) -> Tuple[int, int]:
    """(N, J) with N·dt = T and J·dt ≥ a_max + T."""
    if not (dt > 0) or not (T > 0):
        raise ConfigurationError(f"dt and T must be positive, got dt={dt}, T={T}")
    if a_max < 0:
        raise ConfigurationError(f"a_max must be nonnegative, got {a_max}")
    N = int(round(T / dt))
    if N < 1 or abs(N * dt - T) > GRID_TOL * max(1.0, T):
        raise ConfigurationError(f"dt={dt} does not divide T={T}")
    J = max(int(math.ceil((a_max + T) / dt - GRID_TOL)), 1)
    return N, J


def terminal_grid(terminal: Terminal, n_states: int, ages: np.ndarray) -> np.ndarray:
    out = np.array([[terminal(x, float(a)) for a in ages] for x in range(n_states)], dtype=float)
    if not np.all(np.isfinite(out)):
        x, j = np.argwhere(~np.isfinite(out))[0]
        raise NumericalError("terminal condition is not finite", (-1, int(x), int(j)))
    return out


def _shift_age(level: np.ndarray) -> np.ndarray:
    """level[x][min(j+1, J)]: one step up the age axis with constant closure at the top."""
    return np.concatenate([level[:, 1:], level[:, -1:]], axis=1)


def _check_finite(level: np.ndarray, i: int):
    if not np.all(np.isfinite(level)):
        x, j = np.argwhere(~np.isfinite(level))[0]
        raise NumericalError("non-finite value while stepping", (i, int(x), int(j)))


# =============================================================================
# Solvers
# =============================================================================


def solve_backward(
    model: SemiMarkovModel,
    generator: GeneratorSpec,
    terminal: Terminal,
    T: float,
    dt: float,
    a_max: float,
) -> ValueField:
    """
    Explicit backward step along characteristics:

        v[i][x][j] = v[i+1][x][j+1] + dt·(Lv + f)((i+1)·dt, x, (j+1)·dt)

    with z_y = v[i+1][y][0] − v[i+1][x][j+1] and v[i+1][x][J+1] := v[i+1][x][J].
    """
    N, J = grid_shape(T, dt, a_max)
    K = model.n_states
    ages = np.arange(J + 1) * dt
    ages_next = ages + dt
    rates = [model.rate_on(x, ages_next) for x in range(K)]

    v = np.empty((N + 1, K, J + 1))
    v[N] = terminal_grid(terminal, K, ages)
    logger.debug(f"solve_backward: N={N}, J={J}, states={K}, generator={generator.name}")

    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(N - 1, -1, -1):
            nxt = v[i + 1]
            head = nxt[:, 0]
            shifted = _shift_age(nxt)
            t = (i + 1) * dt
            for x in range(K):
                z = head[None, :] - shifted[x][:, None]
                Lv = (z * rates[x]).sum(axis=1)
                v[i, x] = shifted[x] + dt * (Lv + generator(t, x, ages_next, shifted[x], z))
            _check_finite(v[i], i)

    return ValueField(dt, T, a_max, v, tuple(model.states), terminal)


@dataclass
class PicardReport:
    """Per-iteration log of solve_picard."""

    iterations: int
    distances: List[float]
    plain_distances: List[float]
    constant: float
    beta: float
    converged: bool

    @property
    def ratios(self) -> List[float]:
        d = self.distances
        return [d[k + 1] / d[k] for k in range(len(d) - 1) if d[k] > 0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "distances": self.distances,
            "plain_distances": self.plain_distances,
            "ratios": self.ratios,
            "constant": self.constant,
            "beta": self.beta,
            "converged": self.converged,
        }


def solve_picard(
    model: SemiMarkovModel,
    generator: GeneratorSpec,
    terminal: Terminal,
    T: float,
    dt: float,
    a_max: float,
    beta: Optional[float] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    plain_tol: Optional[float] = None,
) -> Tuple[ValueField, PicardReport]:
    """
    Fixed point of w ↦ Γ(w), the integral form of the equation on the grid.

    Time integrals along characteristics use the trapezoid rule. Iteration stops when
    sup e^{−β(T−t)}·|Γ(w) − w| < tol (and the plain sup distance < plain_tol if given).
    """
    tol = RUN_CONFIG["picard_tol"] if tol is None else tol
    max_iter = RUN_CONFIG["picard_max_iter"] if max_iter is None else max_iter
    C = contraction_constant(model, generator)
    if beta is None:
        beta = RUN_CONFIG["picard_beta_factor"] * C if C > 0 else 1.0
    if not (beta > C):
        raise ConfigurationError(f"beta={beta} must exceed the contraction constant {C}")
    if not (tol > 0):
        raise ConfigurationError(f"tol must be positive, got {tol}")

    N, J = grid_shape(T, dt, a_max)
    K = model.n_states
    ages = np.arange(J + 1) * dt
    times = np.arange(N + 1) * dt
    rates = [model.rate_on(x, ages) for x in range(K)]
    weights = np.exp(-beta * (T - times))[:, None, None]

    # transported terminal: G[i][x][j] = g(x, min(j + N − i, J)·dt)
    G = np.empty((N + 1, K, J + 1))
    G[N] = terminal_grid(terminal, K, ages)
    for i in range(N - 1, -1, -1):
        G[i] = _shift_age(G[i + 1])

    def gamma_map(w: np.ndarray) -> np.ndarray:
        F = np.empty_like(w)
        for i in range(N + 1):
            head = w[i][:, 0]
            for x in range(K):
                z = head[None, :] - w[i, x][:, None]
                F[i, x] = (z * rates[x]).sum(axis=1) + generator(times[i], x, ages, w[i, x], z)
        S = np.zeros_like(w)
        for i in range(N - 1, -1, -1):
            S[i] = _shift_age(S[i + 1]) + 0.5 * dt * (F[i] + _shift_age(F[i + 1]))
        out = G + S
        for i in range(N + 1):
            _check_finite(out[i], i)
        return out

    logger.debug(f"solve_picard: N={N}, J={J}, C={C:.4g}, beta={beta:.4g}, tol={tol:.1e}")
    w = G
    distances: List[float] = []
    plain: List[float] = []
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, max_iter + 1):
            nxt = gamma_map(w)
            diff = np.abs(nxt - w)
            distances.append(float((weights * diff).max()))
            plain.append(float(diff.max()))
            w = nxt
            logger.debug(f"picard iteration {k}: weighted={distances[-1]:.3e}, plain={plain[-1]:.3e}")
            if distances[-1] < tol and (plain_tol is None or plain[-1] < plain_tol):
                report = PicardReport(k, distances, plain, C, beta, True)
                return ValueField(dt, T, a_max, w, tuple(model.states), terminal), report
    raise NonConvergenceError(distances[-1], max_iter)


# =============================================================================
# BSDE recovery and path checks
# =============================================================================


@dataclass(frozen=True, eq=False)
class BSDEPath:
    """(Y, Z) along one trajectory: Y_s = v(t+s, X_s, a_s), Z_s(y) = v(t+s, y, 0) − v(t+s, X_{s−}, a_{s−})."""

    trajectory: Trajectory
    field: ValueField
    t_offset: float

    def Y(self, s: float) -> float:
        p = evaluate_state(self.trajectory, s)
        return self.field.evaluate(self.t_offset + s, p.state, p.age)

    def Y_left(self, s: float) -> float:
        p = left_state(self.trajectory, s)
        return self.field.evaluate(self.t_offset + s, p.state, p.age)

    def Z(self, s: float, y: int) -> float:
        p = left_state(self.trajectory, s)
        t = self.t_offset + s
        return self.field.evaluate(t, y, 0.0) - self.field.evaluate(t, p.state, p.age)

    def Z_vector(self, s: float) -> np.ndarray:
        return np.array([self.Z(s, y) for y in range(len(self.field.states))])


def recover_bsde(field: ValueField, traj: Trajectory, t_offset: float) -> BSDEPath:
    """Read (Y, Z) off a solved field along a trajectory started at time t_offset."""
    if not (0.0 <= t_offset) or t_offset + traj.horizon > field.horizon + GRID_TOL:
        raise DomainError(
            f"trajectory on [{t_offset}, {t_offset + traj.horizon}] exceeds the field horizon {field.horizon}"
        )
    steps = traj.start.age / field.dt
    if abs(steps - round(steps)) > GRID_TOL * max(1.0, steps):
        raise DomainError(f"start age {traj.start.age} is not a grid age for dt={field.dt}")
    if traj.start.age + t_offset + traj.horizon > field.age_top + GRID_TOL:
        raise DomainError(f"start age {traj.start.age} beyond the ages covered by the grid")
    return BSDEPath(traj, field, t_offset)


def increment_field(field: ValueField, t_offset: float) -> MarkField:
    """Mark field (s, (x, a), y) ↦ v(t+s, y, 0) − v(t+s, x, a), linear in s between grid times."""

    def batch(s: np.ndarray, x: int, ages: np.ndarray) -> np.ndarray:
        t = t_offset + s
        base = field.evaluate_many(t, x, ages, exact_terminal=False)
        heads = np.stack(
            [field.evaluate_many(t, y, np.zeros_like(t), exact_terminal=False) for y in range(len(field.states))],
            axis=1,
        )
        return heads - base[:, None]

    def evaluator(s: float, current: AgePoint, y: int) -> float:
        t = t_offset + s
        return field.evaluate(t, y, 0.0, exact_terminal=False) - field.evaluate(
            t, current.state, current.age, exact_terminal=False
        )

    return MarkField(evaluator=evaluator, degree=1, knots=_grid_knots(field, t_offset), batch=batch)


def _grid_knots(field: ValueField, t_offset: float) -> Tuple[float, ...]:
    return tuple(float(t - t_offset) for t in field.times() if t > t_offset)


def check_ito_formula(field: ValueField, traj: Trajectory, t_offset: float, model: SemiMarkovModel) -> float:
    """
    |left − right| for the pathwise chain rule along one trajectory.

    left is v(t+H, X_H, a_H) − v(t, x, a). right adds the directional-derivative
    integral and the L-integral (nodal rectangle rule per grid cell) and the
    compensated integral of the increment field.
    """
    dt = field.dt
    H = traj.horizon
    J = field.n_ages
    end = evaluate_state(traj, H)
    left = field.evaluate(t_offset + H, end.state, end.age, exact_terminal=False) - field.evaluate(
        t_offset, traj.start.state, traj.start.age, exact_terminal=False
    )

    v = field.values
    knots = _grid_knots(field, t_offset)
    d_integral = 0.0
    l_integral = 0.0
    for seg in traj.segments():
        x = seg.state
        cuts = segment_pieces(model, x, seg.s0, seg.age0, seg.s0, seg.s1, knots)
        lo, hi = cuts[:-1], cuts[1:]
        tau = t_offset + lo
        i = np.clip(np.floor(tau / dt + GRID_TOL), 0, field.n_steps - 1).astype(int)
        age_level = seg.age0 + (lo - seg.s0) - (tau - i * dt)
        j = np.clip(np.floor(age_level / dt + GRID_TOL), 0, J - 1).astype(int)
        length = hi - lo
        d_node = (v[i + 1, x, j + 1] - v[i, x, j]) / dt
        mid_age = seg.age0 + 0.5 * (lo + hi) - seg.s0
        rates = model.rate_on(x, mid_age)
        l_node = ((v[i, :, 0] - v[i, x, j][:, None]) * rates).sum(axis=1)
        d_integral += float(np.dot(d_node, length))
        l_integral += float(np.dot(l_node, length))

    increments = increment_field(field, t_offset)
    q_integral = integrate_p(traj, increments) - integrate_compensator(traj, increments, model)
    right = d_integral + l_integral + q_integral
    residual = abs(left - right)
    logger.debug(
        f"ito check: left={left:.6g}, D={d_integral:.6g}, L={l_integral:.6g}, q={q_integral:.6g}, residual={residual:.3e}"
    )
    return residual


@dataclass
class EnergyCheck:
    """Monte Carlo sides of E|Y_s|² + E∫Σ|Z|²λq̄ = E|ξ|² + 2E∫Y·f."""

    s: float
    lhs: float
    rhs: float
    difference: float
    std_error: float
    paths: int

    def passes(self, slack: float, sigmas: float = 3.0) -> bool:
        return abs(self.difference) <= sigmas * self.std_error + slack

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s": self.s,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "difference": self.difference,
            "std_error": self.std_error,
            "paths": self.paths,
        }


def check_energy_identity(
    field: ValueField,
    model: SemiMarkovModel,
    forcing: Callable[[float, int, np.ndarray], np.ndarray],
    start: AgePoint,
    s: float,
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
) -> EnergyCheck:
    """
    Energy identity for a field solved with the forcing-only generator f = forcing(t, x, a).

    Paths start at time 0 from `start` under the reference law.
    """
    T = field.horizon
    if not (0.0 <= s <= T):
        raise DomainError(f"s={s} outside [0, {T}]")
    if n_paths < 2:
        raise DomainError("n_paths must be at least 2")
    increments = increment_field(field, 0.0)
    squared = increments.squared()
    knots = _grid_knots(field, 0.0)

    def y_times_f(r: np.ndarray, x: int, ages: np.ndarray) -> np.ndarray:
        y = field.evaluate_many(r, x, ages, exact_terminal=False)
        return y * np.broadcast_to(np.asarray(forcing(r, x, ages), dtype=float), y.shape)

    def one_path(path_id: int, rng: np.random.Generator) -> Tuple[float, float]:
        traj = simulate_path(model, start, T, rng)
        at_s = evaluate_state(traj, s)
        at_T = evaluate_state(traj, T)
        y_s = field.evaluate(s, at_s.state, at_s.age)
        xi = field.evaluate(T, at_T.state, at_T.age)
        z_energy = integrate_compensator(traj, squared, model, start=s) if s < T else 0.0
        cross = integrate_time(traj, y_times_f, model, degree=2, knots=knots, start=s) if s < T else 0.0
        return y_s**2 + z_energy, xi**2 + 2.0 * cross

    sides = np.array(map_paths(one_path, n_paths, seed, workers=workers, desc="Energy identity"))
    diff = sides[:, 0] - sides[:, 1]
    return EnergyCheck(
        s=s,
        lhs=float(sides[:, 0].mean()),
        rhs=float(sides[:, 1].mean()),
        difference=float(diff.mean()),
        std_error=float(diff.std(ddof=1) / math.sqrt(n_paths)),
        paths=n_paths,
    )
