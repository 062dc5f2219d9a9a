# -*- coding: utf-8 -*-
"""Intensity-control problems, the Hamiltonian, the HJB solve and feedback laws. See README.md."""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from smctrl.errors import ConfigurationError, ContractViolationError, DomainError, InvalidModelError
from smctrl.kolmogorov import GRID_TOL, GeneratorSpec, ValueField, solve_backward
from smctrl.logger_config import get_logger
from smctrl.model import SemiMarkovModel
from smctrl.mpp import interior_points
from smctrl.schemas import PiecewiseEntry, ProblemDocument, parse_document

logger = get_logger()

RateFn = Callable[[float, int, float, int, float], float]
CostFn = Callable[[float, int, float, float], float]
TerminalFn = Callable[[int, float], float]
# vectorized forms: (t, x, ages, action_index, n_states) -> (n, n_states) and (t, x, ages, action_index) -> (n,)
RateMatrixFn = Callable[[np.ndarray, int, np.ndarray, int, int], np.ndarray]
CostVectorFn = Callable[[np.ndarray, int, np.ndarray, int], np.ndarray]
TerminalVectorFn = Callable[[int, np.ndarray], np.ndarray]


# =============================================================================
# Tables
# =============================================================================


@dataclass(frozen=True, eq=False)
class PiecewiseTable:
    """values[ti][ai] on [time_breaks[ti], ...) × [age_breaks[ai], ...)."""

    age_breaks: np.ndarray
    time_breaks: np.ndarray
    values: np.ndarray

    def lookup(self, t, ages) -> np.ndarray:
        t, ages = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(ages, dtype=float))
        ti = np.searchsorted(self.time_breaks, t, side="right") - 1
        ai = np.searchsorted(self.age_breaks, ages, side="right") - 1
        return self.values[np.clip(ti, 0, None), np.clip(ai, 0, None)]

    @classmethod
    def constant(cls, value: float) -> "PiecewiseTable":
        return cls(np.zeros(1), np.zeros(1), np.full((1, 1), float(value)))

    @classmethod
    def from_entry(cls, entry: PiecewiseEntry, path: str) -> "PiecewiseTable":
        age_breaks = _check_breaks(entry.breaks, f"{path}.breaks")
        if entry.time_breaks is None:
            time_breaks = np.zeros(1)
            values = np.asarray([entry.values], dtype=float)
        else:
            time_breaks = _check_breaks(entry.time_breaks, f"{path}.time_breaks")
            values = np.asarray(entry.values, dtype=float)
        if values.shape != (len(time_breaks), len(age_breaks)):
            raise InvalidModelError(
                f"{path}.values",
                f"expected shape {[len(time_breaks), len(age_breaks)]}, got {list(values.shape)}",
            )
        if not np.all(np.isfinite(values)):
            raise InvalidModelError(f"{path}.values", "values must be finite")
        return cls(age_breaks, time_breaks, values)


def _check_breaks(breaks: Sequence[float], path: str) -> np.ndarray:
    b = np.asarray(breaks, dtype=float)
    if b.ndim != 1 or len(b) == 0 or b[0] != 0.0 or np.any(np.diff(b) <= 0) or not np.all(np.isfinite(b)):
        raise InvalidModelError(path, "breakpoints must start at 0 and be finite and strictly increasing")
    return b


# =============================================================================
# Problem
# =============================================================================


class ControlProblem:
    """
    Action set U, rate multiplier r(t, x, a, y, u) in [0, C_r], running cost l(t, x, a, u),
    terminal cost g(x, a) and horizon T.

    The scalar callables are the reference definition. Vectorized forms are optional;
    when absent they are derived by looping the scalar callables.
    """

    def __init__(
        self,
        actions: Sequence[float],
        rate_multiplier: RateFn,
        running_cost: CostFn,
        terminal_cost: TerminalFn,
        horizon: float,
        c_r: float,
        rate_matrix: Optional[RateMatrixFn] = None,
        cost_vector: Optional[CostVectorFn] = None,
        time_breaks: Sequence[float] = (),
        age_breaks: Sequence[float] = (),
        piecewise_constant: bool = False,
        terminal_vector: Optional[TerminalVectorFn] = None,
    ):
        self.actions: Tuple[float, ...] = tuple(float(u) for u in actions)
        if not self.actions:
            raise ConfigurationError("the action set is empty")
        if not (c_r > 1.0) or not math.isfinite(c_r):
            raise ConfigurationError(f"C_r must be a finite number above 1, got {c_r}")
        if not (horizon > 0):
            raise ConfigurationError(f"horizon must be positive, got {horizon}")
        self.rate_multiplier = rate_multiplier
        self.running_cost = running_cost
        self.terminal_cost = terminal_cost
        self.horizon = float(horizon)
        self.c_r = float(c_r)
        self._rate_matrix = rate_matrix
        self._cost_vector = cost_vector
        self._terminal_vector = terminal_vector
        self.time_breaks: Tuple[float, ...] = tuple(sorted(set(float(t) for t in time_breaks)))
        self.age_breaks: Tuple[float, ...] = tuple(sorted(set(float(a) for a in age_breaks)))
        self.piecewise_constant = piecewise_constant

    def __repr__(self) -> str:
        return f"ControlProblem(actions={self.actions}, c_r={self.c_r}, horizon={self.horizon})"

    def action_index(self, u: float) -> int:
        for k, v in enumerate(self.actions):
            if abs(v - u) <= 1e-12:
                return k
        raise DomainError(f"{u} is not an action of this problem")

    # ------------------------------------------------------------------
    # Vectorized evaluation
    # ------------------------------------------------------------------

    def rate_matrix(self, t, x: int, ages, k: int, n_states: int) -> np.ndarray:
        """r(t, x, a, y, U[k]) for every age and every target y, shape (n, n_states)."""
        t, ages = np.broadcast_arrays(np.atleast_1d(np.asarray(t, dtype=float)), np.atleast_1d(ages))
        if self._rate_matrix is not None:
            return np.asarray(self._rate_matrix(t, x, ages, k, n_states), dtype=float)
        u = self.actions[k]
        return np.array(
            [[self.rate_multiplier(float(ti), x, float(ai), y, u) for y in range(n_states)] for ti, ai in zip(t, ages)]
        ).reshape(len(ages), n_states)

    def cost_vector(self, t, x: int, ages, k: int) -> np.ndarray:
        """l(t, x, a, U[k]) for every age, shape (n,)."""
        t, ages = np.broadcast_arrays(np.atleast_1d(np.asarray(t, dtype=float)), np.atleast_1d(ages))
        if self._cost_vector is not None:
            return np.asarray(self._cost_vector(t, x, ages, k), dtype=float)
        u = self.actions[k]
        return np.array([self.running_cost(float(ti), x, float(ai), u) for ti, ai in zip(t, ages)], dtype=float)

    def terminal_costs(self, x: int, ages) -> np.ndarray:
        """g(x, a) for every age, shape (n,)."""
        ages = np.atleast_1d(np.asarray(ages, dtype=float))
        if self._terminal_vector is not None:
            return np.asarray(self._terminal_vector(x, ages), dtype=float)
        return np.array([self.terminal_cost(x, float(a)) for a in ages], dtype=float)

    def controlled_rates(self, t, x: int, ages, indices: np.ndarray, n_states: int) -> np.ndarray:
        """Rate matrix when each node carries its own action index."""
        t, ages, indices = np.broadcast_arrays(np.atleast_1d(t), np.atleast_1d(ages), np.atleast_1d(indices))
        out = np.empty((len(ages), n_states))
        for k in np.unique(indices):
            mask = indices == k
            out[mask] = self.rate_matrix(t[mask], x, ages[mask], int(k), n_states)
        return out

    def controlled_costs(self, t, x: int, ages, indices: np.ndarray) -> np.ndarray:
        t, ages, indices = np.broadcast_arrays(np.atleast_1d(t), np.atleast_1d(ages), np.atleast_1d(indices))
        out = np.empty(len(ages))
        for k in np.unique(indices):
            mask = indices == k
            out[mask] = self.cost_vector(t[mask], x, ages[mask], int(k))
        return out

    def check_rate_bounds(self, model: SemiMarkovModel, rng: np.random.Generator, samples: int = 64) -> None:
        """Check 0 <= r <= C_r at random (t, x, a, y, u); raises ContractViolationError."""
        n = model.n_states
        age_top = max(float(model.breaks(x)[-1]) for x in range(n)) + self.horizon
        for _ in range(samples):
            t = float(rng.uniform(0.0, self.horizon))
            x = int(rng.integers(n))
            a = float(rng.uniform(0.0, age_top))
            k = int(rng.integers(len(self.actions)))
            row = self.rate_matrix(t, x, a, k, n)[0]
            if np.any(row < 0) or np.any(row > self.c_r):
                raise ContractViolationError(
                    f"rate multiplier outside [0, {self.c_r}] at t={t}, state={x}, age={a}, action={self.actions[k]}"
                )

    # ------------------------------------------------------------------
    # Documents
    # ------------------------------------------------------------------

    @classmethod
    def from_document(cls, doc: Union[ProblemDocument, Dict[str, Any]], model: SemiMarkovModel) -> "ControlProblem":
        """Tabulated problem: every table piecewise constant in age and, optionally, in time."""
        if not isinstance(doc, ProblemDocument):
            doc = parse_document(ProblemDocument, doc)
        if not doc.actions:
            raise ConfigurationError("the action set is empty")
        if not (doc.c_r > 1.0):
            raise InvalidModelError("C_r", f"C_r must exceed 1, got {doc.c_r}")
        n = model.n_states
        n_actions = len(doc.actions)
        time_breaks: List[float] = []
        age_breaks: List[float] = []

        def state_index(sid: str, path: str) -> int:
            try:
                return model.states.index(sid)
            except ValueError:
                raise InvalidModelError(path, f"unknown state {sid!r}") from None

        def action_indices(action: Optional[int], path: str) -> List[int]:
            if action is None:
                return list(range(n_actions))
            if not (0 <= action < n_actions):
                raise InvalidModelError(path, f"action index {action} out of range")
            return [action]

        def table(entry: PiecewiseEntry, path: str) -> PiecewiseTable:
            tab = PiecewiseTable.from_entry(entry, path)
            time_breaks.extend(tab.time_breaks.tolist())
            age_breaks.extend(tab.age_breaks.tolist())
            return tab

        if not (0.0 <= doc.rate_multiplier.default <= doc.c_r):
            raise InvalidModelError("rate_multiplier.default", f"must lie in [0, {doc.c_r}]")
        rate_tables: Dict[Tuple[int, int, int], PiecewiseTable] = {}
        for n_entry, entry in enumerate(doc.rate_multiplier.entries):
            path = f"rate_multiplier.entries[{n_entry}]"
            x = state_index(entry.source, f"{path}.from")
            y = state_index(entry.target, f"{path}.to")
            tab = table(entry, path)
            if np.any(tab.values < 0) or np.any(tab.values > doc.c_r):
                raise InvalidModelError(f"{path}.values", f"rate multipliers must lie in [0, {doc.c_r}]")
            for k in action_indices(entry.action, f"{path}.action"):
                rate_tables[(k, x, y)] = tab

        cost_tables: Dict[Tuple[int, int], PiecewiseTable] = {}
        for n_entry, entry in enumerate(doc.running_cost.entries):
            path = f"running_cost.entries[{n_entry}]"
            x = state_index(entry.state, f"{path}.state")
            tab = table(entry, path)
            for k in action_indices(entry.action, f"{path}.action"):
                cost_tables[(k, x)] = tab

        terminal_tables: Dict[int, PiecewiseTable] = {}
        for n_entry, entry in enumerate(doc.terminal_cost.entries):
            path = f"terminal_cost.entries[{n_entry}]"
            if entry.time_breaks is not None:
                raise InvalidModelError(f"{path}.time_breaks", "the terminal cost depends on age only")
            terminal_tables[state_index(entry.state, f"{path}.state")] = table(entry, path)

        rate_default = doc.rate_multiplier.default
        cost_default = doc.running_cost.default
        terminal_default = doc.terminal_cost.default

        def rate_matrix(t, x, ages, k, n_states):
            out = np.full((len(ages), n_states), rate_default)
            for y in range(n_states):
                tab = rate_tables.get((k, x, y))
                if tab is not None:
                    out[:, y] = tab.lookup(t, ages)
            return out

        def cost_vector(t, x, ages, k):
            tab = cost_tables.get((k, x))
            if tab is None:
                return np.full(len(ages), cost_default)
            return tab.lookup(t, ages)

        def rate_multiplier(t, x, a, y, u):
            k = problem.action_index(u)
            tab = rate_tables.get((k, x, y))
            return rate_default if tab is None else float(tab.lookup(t, a))

        def running_cost(t, x, a, u):
            tab = cost_tables.get((problem.action_index(u), x))
            return cost_default if tab is None else float(tab.lookup(t, a))

        def terminal_cost(x, a):
            tab = terminal_tables.get(x)
            return terminal_default if tab is None else float(tab.lookup(0.0, a))

        def terminal_vector(x, ages):
            tab = terminal_tables.get(x)
            return np.full(len(ages), terminal_default) if tab is None else tab.lookup(0.0, ages)

        problem = cls(
            doc.actions,
            rate_multiplier,
            running_cost,
            terminal_cost,
            doc.horizon,
            doc.c_r,
            rate_matrix=rate_matrix,
            cost_vector=cost_vector,
            time_breaks=time_breaks,
            age_breaks=age_breaks,
            piecewise_constant=True,
            terminal_vector=terminal_vector,
        )
        return problem


def load_problem(path: Union[str, Path], model: SemiMarkovModel) -> ControlProblem:
    """Read and validate a problem JSON document against a model."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidModelError("", f"{path}: invalid JSON ({e})") from e
    return ControlProblem.from_document(data, model)


# =============================================================================
# Hamiltonian
# =============================================================================


def _minimands(problem: ControlProblem, model: SemiMarkovModel, t, x: int, ages: np.ndarray, z: np.ndarray) -> np.ndarray:
    """l + Σ_y z_y (r_y − 1) λ q̄_y per action, shape (n_actions, n)."""
    n = model.n_states
    rates = model.rate_on(x, ages)
    out = np.empty((len(problem.actions), len(ages)))
    for k in range(len(problem.actions)):
        r = problem.rate_matrix(t, x, ages, k, n)
        out[k] = problem.cost_vector(t, x, ages, k) + (z * (r - 1.0) * rates).sum(axis=1)
    return out


def hamiltonian_batch(
    problem: ControlProblem, model: SemiMarkovModel, t, x: int, ages: np.ndarray, z: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Infimum and minimizing action index for each age; ties go to the lowest index."""
    ages = np.atleast_1d(np.asarray(ages, dtype=float))
    z = np.asarray(z, dtype=float).reshape(len(ages), model.n_states)
    values = _minimands(problem, model, t, x, ages, z)
    best = np.argmin(values, axis=0)
    return values[best, np.arange(len(ages))], best


def hamiltonian(
    problem: ControlProblem, model: SemiMarkovModel, t: float, x: int, a: float, z: Sequence[float]
) -> Tuple[float, float]:
    """(inf_u {l + Σ_y z_y (r − 1) λ q̄}, a minimizing action)."""
    x = model.index(x)
    values, best = hamiltonian_batch(problem, model, t, x, np.array([a]), np.asarray(z, dtype=float)[None, :])
    return float(values[0]), problem.actions[int(best[0])]


def gamma_set(
    problem: ControlProblem,
    model: SemiMarkovModel,
    t: float,
    x: int,
    a: float,
    z: Sequence[float],
    atol: float = 0.0,
) -> List[float]:
    """Every action attaining the infimum (within atol)."""
    x = model.index(x)
    values = _minimands(problem, model, t, x, np.array([a]), np.asarray(z, dtype=float)[None, :])[:, 0]
    best = values.min()
    return [u for u, v in zip(problem.actions, values) if v <= best + atol]


def hamiltonian_lipschitz(problem: ControlProblem, model: SemiMarkovModel) -> float:
    """L = (C_r + 1)·sup(λ q̄(·, K))^{1/2}."""
    return (problem.c_r + 1.0) * math.sqrt(model.jump_rate_bound)


def hamiltonian_generator(problem: ControlProblem, model: SemiMarkovModel) -> GeneratorSpec:
    """HJB driver: the Hamiltonian value, independent of y."""

    def driver(t, x, ages, y_val, z):
        return hamiltonian_batch(problem, model, t, x, ages, z)[0]

    return GeneratorSpec(
        driver=driver,
        lipschitz_z=hamiltonian_lipschitz(problem, model),
        lipschitz_y=0.0,
        name="hamiltonian",
    )


def solve_hjb(problem: ControlProblem, model: SemiMarkovModel, dt: float, a_max: float) -> ValueField:
    """Value function: backward solve with the Hamiltonian driver and g as terminal condition."""
    logger.info(f"Solving HJB: T={problem.horizon}, dt={dt}, a_max={a_max}, actions={len(problem.actions)}")
    return solve_backward(model, hamiltonian_generator(problem, model), problem.terminal_cost, problem.horizon, dt, a_max)


# =============================================================================
# Feedback laws
# =============================================================================


class FeedbackLaw:
    """u(t, x, a) over a finite action set; subclasses implement batch_index."""

    actions: Tuple[float, ...]
    # piecewise constant between time_knots (absolute times) and age_breaks
    piecewise_constant: bool = False
    time_knots: Tuple[float, ...] = ()
    age_breaks: Tuple[float, ...] = ()

    def batch_index(self, t, x: int, ages) -> np.ndarray:
        raise NotImplementedError

    def index(self, t: float, x: int, a: float) -> int:
        return int(self.batch_index(np.array([t]), x, np.array([a]))[0])

    def switch_times(self, x: int, t0: np.ndarray, t1: np.ndarray, age0: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Times in (t0[k], t1[k]) where the action in state x may change along a path
        aged age0[k] at t0[k]; returns (rows, times). Only meaningful for piecewise-constant laws.
        """
        t0, t1, age0 = (np.asarray(v, dtype=float) for v in (t0, t1, age0))
        rows_t, times_t = interior_points(np.asarray(self.time_knots, dtype=float), t0, t1)
        rows_a, ages = interior_points(np.asarray(self.age_breaks, dtype=float), age0, age0 + (t1 - t0))
        times_a = t0[rows_a] + (ages - age0[rows_a])
        return np.concatenate([rows_t, rows_a]), np.concatenate([times_t, times_a])

    def __call__(self, t: float, x: int, a: float) -> float:
        return self.actions[self.index(t, x, a)]


class ConstantFeedback(FeedbackLaw):
    piecewise_constant = True

    def __init__(self, actions: Sequence[float], action_index: int = 0):
        self.actions = tuple(actions)
        if not (0 <= action_index < len(self.actions)):
            raise DomainError(f"action index {action_index} out of range")
        self.action_index = action_index

    def batch_index(self, t, x, ages):
        return np.full(np.broadcast(np.atleast_1d(t), np.atleast_1d(ages)).shape, self.action_index, dtype=int)


class TabularFeedback(FeedbackLaw):
    """Action index piecewise constant in age, per state: indices[x][k] on [breaks[x][k], ...)."""

    piecewise_constant = True

    def __init__(self, actions: Sequence[float], breaks: Sequence[Sequence[float]], indices: Sequence[Sequence[int]]):
        self.actions = tuple(actions)
        self.breaks = [np.asarray(b, dtype=float) for b in breaks]
        self.indices = [np.asarray(i, dtype=int) for i in indices]
        for b, i in zip(self.breaks, self.indices):
            if len(b) != len(i) or b[0] != 0.0:
                raise DomainError("each state needs breaks starting at 0 and one index per break")
            if np.any(i < 0) or np.any(i >= len(self.actions)):
                raise DomainError("action index out of range")
        self.age_breaks = tuple(sorted({float(v) for b in self.breaks for v in b}))

    @classmethod
    def random(
        cls, actions: Sequence[float], n_states: int, rng: np.random.Generator, max_age: float, pieces: int = 3
    ) -> "TabularFeedback":
        breaks, indices = [], []
        for _ in range(n_states):
            inner = np.sort(rng.uniform(0.0, max_age, size=pieces - 1))
            breaks.append(np.concatenate([[0.0], inner]))
            indices.append(rng.integers(len(actions), size=pieces))
        return cls(actions, breaks, indices)

    def batch_index(self, t, x, ages):
        ages = np.atleast_1d(np.asarray(ages, dtype=float))
        seg = np.searchsorted(self.breaks[x], ages, side="right") - 1
        return self.indices[x][seg]


class GridFeedback(FeedbackLaw):
    """
    Node policy table A[i][x][j]: the action used on the grid cell [i·dt, (i+1)·dt)
    along the characteristic through age j·dt at time i·dt.
    """

    piecewise_constant = True

    def __init__(self, actions: Sequence[float], dt: float, table: np.ndarray, states: Sequence[str]):
        self.actions = tuple(actions)
        self.dt = float(dt)
        self.table = np.asarray(table, dtype=int)
        self.states = tuple(states)
        self.horizon = self.table.shape[0] * self.dt
        self.time_knots = tuple(float(t) for t in np.arange(self.table.shape[0] + 1) * self.dt)
        self._keys: Dict[int, np.ndarray] = {}

    @property
    def n_cells(self) -> int:
        return self.table.shape[0]

    @property
    def n_ages(self) -> int:
        return self.table.shape[2] - 1

    def batch_index(self, t, x, ages):
        t, ages = np.broadcast_arrays(np.atleast_1d(np.asarray(t, dtype=float)), np.atleast_1d(ages))
        if not (0 <= x < self.table.shape[1]):
            raise DomainError(f"unknown state index {x}")
        if np.any(t < -GRID_TOL) or np.any(t > self.horizon + GRID_TOL):
            raise DomainError(f"time outside [0, {self.horizon}]")
        if np.any(ages > self.n_ages * self.dt + GRID_TOL):
            raise DomainError(f"age beyond the policy grid ({self.n_ages * self.dt})")
        i = np.clip(np.floor(t / self.dt + GRID_TOL), 0, self.n_cells - 1).astype(int)
        j = np.clip(np.rint((ages + (i + 1) * self.dt - t) / self.dt) - 1, 0, self.n_ages).astype(int)
        return self.table[i, x, j]

    def _switch_keys(self, x: int) -> np.ndarray:
        # characteristics through (i·dt, (L+i)·dt), L in [-(N-1), J]; key = line·(N+1) + cell of each action change
        keys = self._keys.get(x)
        if keys is None:
            N, J = self.n_cells, self.n_ages
            lines = np.arange(-(N - 1), J + 1)
            cells = np.arange(N)
            acts = self.table[cells[None, :], x, np.clip(lines[:, None] + cells[None, :], 0, J)]
            line, cell = np.nonzero(acts[:, 1:] != acts[:, :-1])
            keys = (line * (N + 1) + cell + 1).astype(float)
            self._keys[x] = keys
        return keys

    def switch_times(self, x, t0, t1, age0):
        t0, t1, age0 = (np.asarray(v, dtype=float) for v in (t0, t1, age0))
        N = self.n_cells
        line = np.clip(np.rint((age0 - t0) / self.dt), -(N - 1), self.n_ages) + (N - 1)
        base = line * (N + 1)
        rows, keys = interior_points(self._switch_keys(x), base + t0 / self.dt, base + t1 / self.dt)
        return rows, (keys - base[rows]) * self.dt

    def to_rows(self):
        """(t, state, a, action) for every node."""
        for i in range(self.n_cells):
            for x, sid in enumerate(self.states):
                for j in range(self.n_ages + 1):
                    yield i * self.dt, sid, j * self.dt, self.actions[self.table[i, x, j]]

    def write_csv(self, path: Union[str, Path]) -> int:
        rows = 0
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "state", "a", "action"])
            for t, sid, a, u in self.to_rows():
                writer.writerow([repr(float(t)), sid, repr(float(a)), repr(float(u))])
                rows += 1
        return rows

    @classmethod
    def from_csv(cls, path: Union[str, Path], problem: ControlProblem, model: SemiMarkovModel) -> "GridFeedback":
        """Load a policy written by write_csv; the node lattice is inferred from the rows."""
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
        if not rows:
            raise InvalidModelError(str(path), "policy file has no rows")
        try:
            times = sorted({float(r["t"]) for r in rows})
            ages = sorted({float(r["a"]) for r in rows})
        except (KeyError, ValueError) as e:
            raise InvalidModelError(str(path), f"expected columns t, state, a, action ({e})") from e
        dt = times[1] - times[0] if len(times) > 1 else (ages[1] - ages[0] if len(ages) > 1 else None)
        if dt is None or dt <= 0:
            raise InvalidModelError(str(path), "cannot infer the grid step")
        table = np.full((len(times), model.n_states, len(ages)), -1, dtype=int)
        for n_row, r in enumerate(rows):
            path_row = f"{path}[{n_row}]"
            try:
                x = model.states.index(r["state"])
            except ValueError:
                raise InvalidModelError(path_row, f"unknown state {r['state']!r}") from None
            try:
                k = problem.action_index(float(r["action"]))
            except DomainError as e:
                raise InvalidModelError(path_row, str(e)) from None
            i = int(round(float(r["t"]) / dt))
            j = int(round(float(r["a"]) / dt))
            table[i, x, j] = k
        if np.any(table < 0):
            raise InvalidModelError(str(path), "policy file does not cover every node")
        return cls(problem.actions, dt, table, model.states)


class CallableFeedback(FeedbackLaw):
    """Wraps fn(t, x, a) -> action value."""

    def __init__(self, actions: Sequence[float], fn: Callable[[float, int, float], float]):
        self.actions = tuple(actions)
        self.fn = fn

    def batch_index(self, t, x, ages):
        t, ages = np.broadcast_arrays(np.atleast_1d(np.asarray(t, dtype=float)), np.atleast_1d(ages))
        out = np.empty(len(ages), dtype=int)
        for n, (ti, ai) in enumerate(zip(t, ages)):
            u = self.fn(float(ti), x, float(ai))
            matches = [k for k, v in enumerate(self.actions) if abs(v - u) <= 1e-12]
            if not matches:
                raise ContractViolationError(f"feedback returned {u}, not an action")
            out[n] = matches[0]
        return out


def extract_feedback(problem: ControlProblem, model: SemiMarkovModel, field: ValueField) -> GridFeedback:
    """
    Optimal feedback: argmin of the Hamiltonian at z_y = v(t, y, 0) − v(t, x, a).

    The action on each grid cell is the minimizer at the cell's upper node, the same
    one the backward step uses.
    """
    if abs(field.horizon - problem.horizon) > GRID_TOL * max(1.0, problem.horizon):
        raise DomainError(f"field horizon {field.horizon} differs from the problem horizon {problem.horizon}")
    N, J = field.n_steps, field.n_ages
    dt = field.dt
    K = model.n_states
    ages_next = (np.arange(J + 1) + 1) * dt
    table = np.empty((N, K, J + 1), dtype=int)
    v = field.values
    for i in range(N):
        nxt = v[i + 1]
        head = nxt[:, 0]
        shifted = np.concatenate([nxt[:, 1:], nxt[:, -1:]], axis=1)
        for x in range(K):
            z = head[None, :] - shifted[x][:, None]
            table[i, x] = hamiltonian_batch(problem, model, (i + 1) * dt, x, ages_next, z)[1]
    logger.debug(f"extract_feedback: policy table {table.shape}")
    return GridFeedback(problem.actions, dt, table, model.states)
