# -*- coding: utf-8 -*-
"""Trajectory sampling for semi-Markov models. See README.md."""

import concurrent.futures
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from tqdm import tqdm

from smctrl.config import RUN_CONFIG
from smctrl.errors import ContractViolationError, DomainError
from smctrl.logger_config import get_logger
from smctrl.model import AgePoint, SemiMarkovModel, invert_cumulative_hazard

logger = get_logger()

NO_JUMP = math.inf

ResultT = TypeVar("ResultT")


class Segment(NamedTuple):
    """Inter-jump piece of a trajectory: state held on [s0, s1) with age age0 at s0."""

    s0: float
    s1: float
    state: int
    age0: float


@dataclass(frozen=True)
class Trajectory:
    """Jump times and marks of one path on [0, horizon]."""

    start: AgePoint
    horizon: float
    jumps: Tuple[Tuple[float, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not (self.horizon > 0):
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "jumps", tuple((float(t), int(y)) for t, y in self.jumps))
        prev_time, prev_state = 0.0, self.start.state
        for time, mark in self.jumps:
            if not (prev_time < time <= self.horizon):
                raise DomainError(f"jump time {time} out of order or beyond horizon {self.horizon}")
            if mark == prev_state:
                raise DomainError(f"jump at {time} does not change the state")
            prev_time, prev_state = time, mark

    @property
    def times(self) -> List[float]:
        return [t for t, _ in self.jumps]

    @property
    def marks(self) -> List[int]:
        return [y for _, y in self.jumps]

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    def segments(self) -> List[Segment]:
        """Inter-jump pieces covering [0, horizon]."""
        pieces = []
        s0, state, age0 = 0.0, self.start.state, self.start.age
        for time, mark in self.jumps:
            pieces.append(Segment(s0, time, state, age0))
            s0, state, age0 = time, mark, 0.0
        if s0 < self.horizon or not pieces:
            pieces.append(Segment(s0, self.horizon, state, age0))
        return pieces

    def to_dict(self) -> Dict[str, Any]:
        return {
            "start": self.start.to_dict(),
            "horizon": self.horizon,
            "jumps": [{"time": t, "mark": y} for t, y in self.jumps],
        }


# ----------------------------------------------------------------------
# Random streams
# ----------------------------------------------------------------------


def path_rng(seed: int, path_id: int) -> np.random.Generator:
    """Generator for one path; depends only on (seed, path_id), not on scheduling."""
    if seed < 0 or path_id < 0:
        raise DomainError("seed and path_id must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path_id,)))


def map_chunks(
    fn: Callable[[int, int], ResultT],
    n_paths: int,
    workers: Optional[int] = None,
    progress: Optional[bool] = None,
    desc: str = "Simulating paths",
) -> List[ResultT]:
    """
    Apply `fn(lo, hi)` to consecutive path ranges, fanning chunks out over threads.

    Chunk boundaries depend only on the configured chunk size and results come back
    ordered by chunk, so the output is the same for any number of workers.
    """
    if n_paths < 1:
        raise DomainError(f"n_paths must be at least 1, got {n_paths}")
    workers = RUN_CONFIG["workers"] if workers is None else workers
    progress = RUN_CONFIG["progress"] if progress is None else progress
    chunk = RUN_CONFIG["chunk_size"]

    bounds = [(lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]
    logger.debug(f"{desc}: {n_paths} paths in {len(bounds)} chunks, {workers} workers")
    if workers <= 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in tqdm(bounds, desc=desc, disable=not progress)]

    results: Dict[int, ResultT] = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_chunk = {executor.submit(fn, lo, hi): k for k, (lo, hi) in enumerate(bounds)}
        for future in tqdm(
            concurrent.futures.as_completed(future_to_chunk),
            desc=desc,
            total=len(bounds),
            disable=not progress,
        ):
            results[future_to_chunk[future]] = future.result()
    return [results[k] for k in range(len(bounds))]


def map_paths(
    fn: Callable[[int, np.random.Generator], ResultT],
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
    progress: Optional[bool] = None,
    desc: str = "Simulating paths",
) -> List[ResultT]:
    """Apply `fn(path_id, rng)` to every path index; results are ordered by path index."""

    def run_chunk(lo: int, hi: int) -> List[ResultT]:
        return [fn(i, path_rng(seed, i)) for i in range(lo, hi)]

    return [r for part in map_chunks(run_chunk, n_paths, workers, progress, desc) for r in part]


class UniformStreams:
    """
    Per-path uniform draws for a batch of paths, read in blocks.

    Row k reads path_rng(seed, path_ids[k]) in order, so a path sees the same numbers
    as when it is simulated on its own.
    """

    def __init__(self, seed: int, path_ids: Sequence[int], block: int = 16):
        self._rngs = [path_rng(seed, int(i)) for i in path_ids]
        self._block = block
        self._buffer = np.empty((len(self._rngs), block))
        self._cursor = np.full(len(self._rngs), block)

    def draw(self, rows: np.ndarray) -> np.ndarray:
        """One uniform on [0, 1) for each (distinct) row."""
        rows = np.asarray(rows, dtype=int)
        for r in rows[self._cursor[rows] >= self._block]:
            self._buffer[r] = self._rngs[r].random(self._block)
            self._cursor[r] = 0
        out = self._buffer[rows, self._cursor[rows]]
        self._cursor[rows] += 1
        return out


# ----------------------------------------------------------------------
# Reference-law sampling
# ----------------------------------------------------------------------


def exponential_level(u):
    """Exp(1) level from a uniform on [0, 1) by inverse transform."""
    return -np.log1p(-u)


def pick_marks(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """
    Row-wise draw of a column ∝ weights[k] from uniforms u[k].

    The uniform is scaled by the last cumulative sum, so a zero-weight column is never
    returned, including on rounding at the top end.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    cumulative = np.cumsum(weights, axis=1)
    top = cumulative[:, -1]
    y = (cumulative <= (u * top)[:, None]).sum(axis=1)
    last = weights.shape[1] - 1 - np.argmax(weights[:, ::-1] > 0, axis=1)
    return np.minimum(y, last)


def sample_holding_time(model: SemiMarkovModel, x: int, a: float, rng: np.random.Generator) -> float:
    """Inverse transform: solve cumulative_hazard(x, a, S) = E with E ~ Exp(1); NO_JUMP if unreachable."""
    return invert_cumulative_hazard(model, x, a, float(exponential_level(rng.random())))


def sample_mark(model: SemiMarkovModel, x: int, jump_age: float, rng: np.random.Generator) -> int:
    """Post-jump state drawn from q̄(x, jump_age, ·)."""
    x = model.index(x)
    row = model.row_at(x, jump_age)
    if row.sum() <= 0:
        raise DomainError(f"no jump distribution for state {x} at age {jump_age}")
    return int(pick_marks(row, rng.random())[0])


def sample_first_jump(
    model: SemiMarkovModel, x: int, a: float, rng: np.random.Generator
) -> Tuple[float, Optional[int]]:
    """(T_1, X_{T_1}) under P^{x,a}, or (NO_JUMP, None)."""
    s = sample_holding_time(model, x, a, rng)
    if math.isinf(s):
        return NO_JUMP, None
    return s, sample_mark(model, x, a + s, rng)


def simulate_path(
    model: SemiMarkovModel, start: AgePoint, horizon: float, rng: np.random.Generator
) -> Trajectory:
    """One trajectory of the embedded chain (T_n, X_{T_n}) truncated at the horizon."""
    if not (horizon > 0):
        raise DomainError(f"horizon must be positive, got {horizon}")
    x = model.index(start.state)
    age = start.age
    now = 0.0
    jumps = []
    while True:
        s = sample_holding_time(model, x, age, rng)
        if math.isinf(s) or now + s > horizon:
            break
        now += s
        y = sample_mark(model, x, age + s, rng)
        jumps.append((now, y))
        x, age = y, 0.0
    return Trajectory(start, horizon, tuple(jumps))


def simulate_paths(
    model: SemiMarkovModel,
    start: AgePoint,
    horizon: float,
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
    progress: Optional[bool] = None,
) -> List[Trajectory]:
    """Batch of reference-law trajectories, path i drawn from path_rng(seed, i)."""

    def run_chunk(lo: int, hi: int) -> List[Trajectory]:
        return simulate_batch(model, start, horizon, range(lo, hi), seed).trajectories()

    parts = map_chunks(run_chunk, n_paths, workers=workers, progress=progress)
    return [traj for part in parts for traj in part]


# ----------------------------------------------------------------------
# Controlled sampling
# ----------------------------------------------------------------------


def simulate_controlled_path(
    model: SemiMarkovModel,
    start: AgePoint,
    horizon: float,
    rate_multiplier: Callable[[float, int, float, int, Any], float],
    feedback: Callable[[float, int, float], Any],
    t_offset: float,
    rng: np.random.Generator,
    c_r: float,
) -> Trajectory:
    """
    Trajectory whose intensity toward y is r(t_offset+s, x, a, y, u)·λ(x,a)·q̄(x,a,{y}).

    Candidates come from the dominating intensity c_r·λ; a candidate at pre-jump
    (x, a) is kept with probability Σ_y r_y q̄_y / c_r and its mark drawn ∝ r_y q̄_y.
    """
    if not (horizon > 0):
        raise DomainError(f"horizon must be positive, got {horizon}")
    x = model.index(start.state)
    n = model.n_states
    age = start.age
    now = 0.0
    jumps = []
    while True:
        s = invert_cumulative_hazard(model, x, age, float(exponential_level(rng.random())) / c_r)
        if math.isinf(s) or now + s > horizon:
            break
        now += s
        age += s
        t = t_offset + now
        u = feedback(t, x, age)
        row = model.row_at(x, age)
        weights = np.zeros(n)
        for y in np.flatnonzero(row):
            r = rate_multiplier(t, x, age, int(y), u)
            if not (0.0 <= r <= c_r):
                raise ContractViolationError(
                    f"rate multiplier {r} outside [0, {c_r}] at t={t}, state={x}, age={age}, target={y}"
                )
            weights[y] = r * row[y]
        if rng.random() * c_r >= weights.sum():
            continue
        y = int(pick_marks(weights, rng.random())[0])
        jumps.append((now, y))
        x, age = y, 0.0
    return Trajectory(start, horizon, tuple(jumps))


# ----------------------------------------------------------------------
# Batches
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathBatch:
    """
    Paths simulated together, stored as flat arrays.

    Segments are the inter-jump pieces [s0, s1) with the state held and the age at s0.
    Jumps carry the pre-jump state and age and the mark. The final point of path k
    is (end_state[k], end_age[k]).
    """

    start: AgePoint
    horizon: float
    n_paths: int
    seg_path: np.ndarray
    seg_s0: np.ndarray
    seg_s1: np.ndarray
    seg_state: np.ndarray
    seg_age0: np.ndarray
    jump_path: np.ndarray
    jump_time: np.ndarray
    jump_state: np.ndarray
    jump_age: np.ndarray
    jump_mark: np.ndarray
    end_state: np.ndarray
    end_age: np.ndarray

    @property
    def n_jumps(self) -> np.ndarray:
        return np.bincount(self.jump_path, minlength=self.n_paths)

    def trajectories(self) -> List[Trajectory]:
        order = np.argsort(self.jump_path, kind="stable")
        times = np.split(self.jump_time[order], np.cumsum(self.n_jumps)[:-1])
        marks = np.split(self.jump_mark[order], np.cumsum(self.n_jumps)[:-1])
        return [
            Trajectory(self.start, self.horizon, tuple(zip(t.tolist(), y.tolist()))) for t, y in zip(times, marks)
        ]


# jump_weights(t, x, ages) -> (n, n_states) controlled jump weights r·q̄ for paths in state x
JumpWeights = Callable[[np.ndarray, int, np.ndarray], np.ndarray]


def _run_batch(
    model: SemiMarkovModel,
    start: AgePoint,
    horizon: float,
    path_ids: Sequence[int],
    seed: int,
    c_r: float = 1.0,
    jump_weights: Optional[JumpWeights] = None,
    t_offset: float = 0.0,
) -> PathBatch:
    if not (horizon > 0):
        raise DomainError(f"horizon must be positive, got {horizon}")
    ids = np.asarray(path_ids, dtype=int)
    m, n = len(ids), model.n_states
    streams = UniformStreams(seed, ids)
    state = np.full(m, model.index(start.state))
    now = np.zeros(m)
    age = np.full(m, float(start.age))
    seg_start = np.zeros(m)
    seg_age = age.copy()
    segments: List[Tuple[np.ndarray, ...]] = []
    jumps: List[Tuple[np.ndarray, ...]] = []

    live = np.arange(m)
    while live.size:
        levels = exponential_level(streams.draw(live)) / c_r
        s = np.empty(live.size)
        for x in np.unique(state[live]):
            mask = state[live] == x
            s[mask] = model.invert_on(int(x), age[live[mask]], levels[mask])
        end = now[live] + s
        over = ~(end <= horizon)
        done = live[over]
        segments.append((done, seg_start[done], np.full(done.size, horizon), state[done], seg_age[done]))
        live, end, s = live[~over], end[~over], s[~over]
        if not live.size:
            break
        now[live] = end
        age[live] += s

        weights = np.empty((live.size, n))
        for x in np.unique(state[live]):
            mask = state[live] == x
            rows = live[mask]
            if jump_weights is None:
                weights[mask] = model.kernel_on(int(x), age[rows])
            else:
                weights[mask] = jump_weights(t_offset + now[rows], int(x), age[rows])
        if jump_weights is None:
            if np.any(weights.sum(axis=1) <= 0):
                raise DomainError("no jump distribution at a sampled jump age")
            jumping = live
        else:
            keep = streams.draw(live) * c_r < weights.sum(axis=1)
            jumping, weights = live[keep], weights[keep]
        if not jumping.size:
            continue
        marks = pick_marks(weights, streams.draw(jumping))
        segments.append((jumping, seg_start[jumping], now[jumping], state[jumping], seg_age[jumping]))
        jumps.append((jumping, now[jumping], state[jumping], age[jumping], marks))
        state[jumping] = marks
        age[jumping] = 0.0
        seg_start[jumping] = now[jumping]
        seg_age[jumping] = 0.0

    seg = [np.concatenate(cols) for cols in zip(*segments)]
    if jumps:
        jmp = [np.concatenate(cols) for cols in zip(*jumps)]
    else:
        jmp = [np.empty(0, dtype=int), np.empty(0), np.empty(0, dtype=int), np.empty(0), np.empty(0, dtype=int)]
    return PathBatch(
        start,
        horizon,
        m,
        *seg,
        *jmp,
        end_state=state,
        end_age=seg_age + (horizon - seg_start),
    )


def simulate_batch(
    model: SemiMarkovModel, start: AgePoint, horizon: float, path_ids: Sequence[int], seed: int
) -> PathBatch:
    """Reference-law paths path_ids drawn together; path i matches simulate_path(..., path_rng(seed, i))."""
    return _run_batch(model, start, horizon, path_ids, seed)


def simulate_controlled_batch(
    model: SemiMarkovModel,
    start: AgePoint,
    horizon: float,
    path_ids: Sequence[int],
    seed: int,
    jump_weights: JumpWeights,
    t_offset: float,
    c_r: float,
) -> PathBatch:
    """
    Controlled paths drawn together by thinning the dominating intensity c_r·λ.

    `jump_weights(t, x, ages)` returns r·q̄ toward every target; a candidate is kept
    with probability (row sum) / c_r.
    """
    return _run_batch(model, start, horizon, path_ids, seed, c_r=c_r, jump_weights=jump_weights, t_offset=t_offset)


# ----------------------------------------------------------------------
# Path evaluation
# ----------------------------------------------------------------------


def evaluate_state(traj: Trajectory, s: float) -> AgePoint:
    """(X_s, a_s), right-continuous in s."""
    if not (0.0 <= s <= traj.horizon):
        raise DomainError(f"s={s} outside [0, {traj.horizon}]")
    state, last, age0 = traj.start.state, 0.0, traj.start.age
    for time, mark in traj.jumps:
        if time > s:
            break
        state, last, age0 = mark, time, 0.0
    return AgePoint(state, age0 + (s - last))


def left_state(traj: Trajectory, s: float) -> AgePoint:
    """(X_{s−}, a_{s−}); at s = 0 this is the start point."""
    if not (0.0 <= s <= traj.horizon):
        raise DomainError(f"s={s} outside [0, {traj.horizon}]")
    state, last, age0 = traj.start.state, 0.0, traj.start.age
    for time, mark in traj.jumps:
        if time >= s:
            break
        state, last, age0 = mark, time, 0.0
    return AgePoint(state, age0 + (s - last))


def write_paths_csv(
    path: Union[str, Path], trajectories: Sequence[Trajectory], states: Sequence[str]
) -> int:
    """Write path_id, jump_index, time, mark rows; returns the number of jump rows."""
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["path_id", "jump_index", "time", "mark"])
        for path_id, traj in enumerate(trajectories):
            for jump_index, (time, mark) in enumerate(traj.jumps):
                writer.writerow([path_id, jump_index, repr(time), states[mark]])
                rows += 1
    return rows
