# -*- coding: utf-8 -*-
"""Monte Carlo estimates of the controlled cost: Girsanov reweighting and thinning. See README.md."""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from smctrl.control import ControlProblem, FeedbackLaw
from smctrl.errors import ContractViolationError, DomainError
from smctrl.logger_config import get_logger
from smctrl.model import AgePoint, SemiMarkovModel
from smctrl.mpp import integrate_time, interior_points
from smctrl.simulate import (
    PathBatch,
    Trajectory,
    evaluate_state,
    map_chunks,
    simulate_batch,
    simulate_controlled_batch,
)

logger = get_logger()

METHODS = ("weighted", "thinned")


@dataclass(frozen=True)
class CostEstimate:
    """Sample mean with standard error sd / √n."""

    mean: float
    std_error: float
    paths: int
    method: str
    seed: Optional[int] = None

    def ci(self, z: float = 3.0) -> Tuple[float, float]:
        return self.mean - z * self.std_error, self.mean + z * self.std_error

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "paths": self.paths,
            "method": self.method,
            "seed": self.seed,
        }


def _summarize(samples: np.ndarray, method: str, seed: int) -> CostEstimate:
    n = len(samples)
    std = float(samples.std(ddof=1)) if n > 1 else 0.0
    return CostEstimate(float(samples.mean()), std / math.sqrt(n), n, method, seed)


@dataclass(frozen=True)
class _Plan:
    """How time integrals along a path are computed for one (problem, feedback) pair."""

    degree: Optional[int]
    knots: np.ndarray
    age_breaks: np.ndarray


def _plan(problem: ControlProblem, feedback: FeedbackLaw, t_offset: float) -> _Plan:
    if problem.piecewise_constant and feedback.piecewise_constant:
        times = np.asarray(problem.time_breaks + tuple(feedback.time_knots), dtype=float) - t_offset
        ages = np.asarray(problem.age_breaks + tuple(feedback.age_breaks), dtype=float)
        return _Plan(0, np.unique(times[times > 0]), np.unique(ages))
    return _Plan(None, np.empty(0), np.empty(0))


def _check_horizon(problem: ControlProblem, t_offset: float) -> float:
    if not (0.0 <= t_offset < problem.horizon):
        raise DomainError(f"t_offset={t_offset} outside [0, {problem.horizon})")
    return problem.horizon - t_offset


def _running_cost(
    traj: Trajectory, problem: ControlProblem, feedback: FeedbackLaw, t_offset: float, model: SemiMarkovModel, plan: _Plan
) -> float:
    def cost(s, x, ages):
        t = t_offset + s
        return problem.controlled_costs(t, x, ages, feedback.batch_index(t, x, ages))

    return integrate_time(traj, cost, model, degree=plan.degree, knots=plan.knots, age_breaks=plan.age_breaks)


def _path_cost(
    traj: Trajectory, problem: ControlProblem, feedback: FeedbackLaw, t_offset: float, model: SemiMarkovModel, plan: _Plan
) -> float:
    end = evaluate_state(traj, traj.horizon)
    return _running_cost(traj, problem, feedback, t_offset, model, plan) + problem.terminal_cost(end.state, end.age)


def _weight(
    traj: Trajectory, problem: ControlProblem, feedback: FeedbackLaw, t_offset: float, model: SemiMarkovModel, plan: _Plan
) -> float:
    n = model.n_states

    def tilt(s, x, ages):
        t = t_offset + s
        r = problem.controlled_rates(t, x, ages, feedback.batch_index(t, x, ages), n)
        return ((1.0 - r) * model.rate_on(x, ages)).sum(axis=1)

    exponent = integrate_time(traj, tilt, model, degree=plan.degree, knots=plan.knots, age_breaks=plan.age_breaks)
    product = 1.0
    state, last, age0 = traj.start.state, 0.0, traj.start.age
    for time, mark in traj.jumps:
        t = t_offset + time
        age = age0 + (time - last)
        k = feedback.index(t, state, age)
        product *= float(problem.controlled_rates(t, state, age, k, n)[0, mark])
        if product == 0.0:
            return 0.0
        state, last, age0 = mark, time, 0.0
    return math.exp(exponent) * product


def girsanov_weight(
    traj: Trajectory,
    problem: ControlProblem,
    feedback: FeedbackLaw,
    t_offset: float,
    model: SemiMarkovModel,
) -> float:
    """
    exp(∫ Σ_y (1 − r) λ q̄ dσ) · Π_n r(t+T_n, X_{T_n−}, a_{T_n−}, X_{T_n}, u_{T_n})

    for a path drawn under the reference law; an empty product is 1.
    """
    return _weight(traj, problem, feedback, t_offset, model, _plan(problem, feedback, t_offset))


# ----------------------------------------------------------------------
# Batches
# ----------------------------------------------------------------------


def _segment_integrals(
    batch: PathBatch, problem: ControlProblem, feedback: FeedbackLaw, t_offset: float, model: SemiMarkovModel
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-path running cost and tilt exponent ∫ Σ_y (1 − r) λ q̄ for a piecewise-constant
    (problem, feedback) pair: every segment is cut where a table, a hazard or the action
    can change and each piece is evaluated at its midpoint.
    """
    n, K = batch.n_paths, model.n_states
    running = np.zeros(n)
    exponent = np.zeros(n)
    time_breaks = np.unique(np.asarray(problem.time_breaks, dtype=float) - t_offset)
    for x in np.unique(batch.seg_state):
        x = int(x)
        sel = batch.seg_state == x
        s0, s1, age0, path = batch.seg_s0[sel], batch.seg_s1[sel], batch.seg_age0[sel], batch.seg_path[sel]
        every = np.arange(len(s0))
        age_breaks = np.unique(np.concatenate([model.breaks(x), np.asarray(problem.age_breaks, dtype=float)]))
        rows_t, cuts_t = interior_points(time_breaks, s0, s1)
        rows_a, ages_a = interior_points(age_breaks, age0, age0 + (s1 - s0))
        rows_f, cuts_f = feedback.switch_times(x, t_offset + s0, t_offset + s1, age0)
        rows = np.concatenate([every, every, rows_t, rows_a, rows_f])
        cuts = np.concatenate([s0, s1, cuts_t, s0[rows_a] + (ages_a - age0[rows_a]), cuts_f - t_offset])
        cuts = np.clip(cuts, s0[rows], s1[rows])
        order = np.lexsort((cuts, rows))
        rows, cuts = rows[order], cuts[order]
        piece = (rows[1:] == rows[:-1]) & (cuts[1:] > cuts[:-1])
        if not piece.any():
            continue
        owner = rows[:-1][piece]
        h = (cuts[1:] - cuts[:-1])[piece]
        mid = cuts[:-1][piece] + 0.5 * h
        ages = age0[owner] + (mid - s0[owner])
        t = t_offset + mid
        k = feedback.batch_index(t, x, ages)
        running += np.bincount(path[owner], weights=h * problem.controlled_costs(t, x, ages, k), minlength=n)
        tilt = ((1.0 - problem.controlled_rates(t, x, ages, k, K)) * model.rate_on(x, ages)).sum(axis=1)
        exponent += np.bincount(path[owner], weights=h * tilt, minlength=n)
    return running, exponent


def _batch_weights(
    batch: PathBatch,
    problem: ControlProblem,
    feedback: FeedbackLaw,
    t_offset: float,
    model: SemiMarkovModel,
    exponent: np.ndarray,
) -> np.ndarray:
    """exp(exponent) times the product over jumps of r at the pre-jump point toward the mark."""
    product = np.ones(batch.n_paths)
    for x in np.unique(batch.jump_state):
        x = int(x)
        sel = batch.jump_state == x
        t = t_offset + batch.jump_time[sel]
        ages = batch.jump_age[sel]
        r = problem.controlled_rates(t, x, ages, feedback.batch_index(t, x, ages), model.n_states)
        np.multiply.at(product, batch.jump_path[sel], r[np.arange(len(ages)), batch.jump_mark[sel]])
    return np.where(product == 0.0, 0.0, np.exp(exponent) * product)


def _terminal_costs(batch: PathBatch, problem: ControlProblem) -> np.ndarray:
    out = np.empty(batch.n_paths)
    for x in np.unique(batch.end_state):
        sel = batch.end_state == x
        out[sel] = problem.terminal_costs(int(x), batch.end_age[sel])
    return out


def _batch_samples(
    batch: PathBatch,
    problem: ControlProblem,
    feedback: FeedbackLaw,
    t_offset: float,
    model: SemiMarkovModel,
    plan: _Plan,
    weighted: bool,
) -> Tuple[np.ndarray, np.ndarray]:
    """(weights, costs) per path; weights are 1 when `weighted` is off."""
    if plan.degree is None:
        trajectories = batch.trajectories()
        weights = np.ones(batch.n_paths)
        if weighted:
            weights = np.array([_weight(traj, problem, feedback, t_offset, model, plan) for traj in trajectories])
        costs = np.array(
            [
                _path_cost(traj, problem, feedback, t_offset, model, plan) if w != 0.0 else 0.0
                for traj, w in zip(trajectories, weights)
            ]
        )
        return weights, costs
    running, exponent = _segment_integrals(batch, problem, feedback, t_offset, model)
    weights = np.ones(batch.n_paths)
    if weighted:
        weights = _batch_weights(batch, problem, feedback, t_offset, model, exponent)
    return weights, running + _terminal_costs(batch, problem)


def _controlled_jump_weights(problem: ControlProblem, feedback: FeedbackLaw, model: SemiMarkovModel):
    def jump_weights(t, x, ages):
        rates = problem.controlled_rates(t, x, ages, feedback.batch_index(t, x, ages), model.n_states)
        rows = model.kernel_on(x, ages)
        bad = (rows > 0) & ~((rates >= 0.0) & (rates <= problem.c_r))
        if bad.any():
            n, y = np.argwhere(bad)[0]
            raise ContractViolationError(
                f"rate multiplier {rates[n, y]} outside [0, {problem.c_r}] at t={t[n]}, state={x}, age={ages[n]}, target={y}"
            )
        return np.where(rows > 0, rates * rows, 0.0)

    return jump_weights


# ----------------------------------------------------------------------
# Estimators
# ----------------------------------------------------------------------


def estimate_cost_weighted(
    problem: ControlProblem,
    model: SemiMarkovModel,
    start: AgePoint,
    t_offset: float,
    feedback: FeedbackLaw,
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
    progress: Optional[bool] = None,
) -> CostEstimate:
    """J(t, x, a, u) as the mean of weight × (running cost + terminal cost) over reference paths."""
    if n_paths < 2:
        raise DomainError("n_paths must be at least 2")
    horizon = _check_horizon(problem, t_offset)
    plan = _plan(problem, feedback, t_offset)

    def run_chunk(lo: int, hi: int) -> np.ndarray:
        batch = simulate_batch(model, start, horizon, range(lo, hi), seed)
        weights, costs = _batch_samples(batch, problem, feedback, t_offset, model, plan, weighted=True)
        return np.where(weights == 0.0, 0.0, weights * costs)

    samples = np.concatenate(map_chunks(run_chunk, n_paths, workers, progress, desc="Weighted estimate"))
    estimate = _summarize(samples, "weighted", seed)
    logger.info(f"weighted estimate: {estimate.mean:.6f} ± {estimate.std_error:.2e} ({n_paths} paths)")
    return estimate


def estimate_cost_thinned(
    problem: ControlProblem,
    model: SemiMarkovModel,
    start: AgePoint,
    t_offset: float,
    feedback: FeedbackLaw,
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
    progress: Optional[bool] = None,
) -> CostEstimate:
    """J(t, x, a, u) as the plain mean over paths simulated under the controlled intensity."""
    if n_paths < 2:
        raise DomainError("n_paths must be at least 2")
    horizon = _check_horizon(problem, t_offset)
    plan = _plan(problem, feedback, t_offset)
    jump_weights = _controlled_jump_weights(problem, feedback, model)

    def run_chunk(lo: int, hi: int) -> np.ndarray:
        batch = simulate_controlled_batch(
            model, start, horizon, range(lo, hi), seed, jump_weights, t_offset, problem.c_r
        )
        return _batch_samples(batch, problem, feedback, t_offset, model, plan, weighted=False)[1]

    samples = np.concatenate(map_chunks(run_chunk, n_paths, workers, progress, desc="Thinned estimate"))
    estimate = _summarize(samples, "thinned", seed)
    logger.info(f"thinned estimate: {estimate.mean:.6f} ± {estimate.std_error:.2e} ({n_paths} paths)")
    return estimate


def estimate_cost(
    method: str,
    problem: ControlProblem,
    model: SemiMarkovModel,
    start: AgePoint,
    t_offset: float,
    feedback: FeedbackLaw,
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
    progress: Optional[bool] = None,
) -> CostEstimate:
    if method == "weighted":
        fn = estimate_cost_weighted
    elif method == "thinned":
        fn = estimate_cost_thinned
    else:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
    return fn(problem, model, start, t_offset, feedback, n_paths, seed, workers=workers, progress=progress)


def mean_girsanov_weight(
    problem: ControlProblem,
    model: SemiMarkovModel,
    start: AgePoint,
    t_offset: float,
    feedback: FeedbackLaw,
    n_paths: int,
    seed: int,
    workers: Optional[int] = None,
) -> CostEstimate:
    """Mean of the weight itself over reference paths; 1 in expectation."""
    horizon = _check_horizon(problem, t_offset)
    plan = _plan(problem, feedback, t_offset)

    def run_chunk(lo: int, hi: int) -> np.ndarray:
        batch = simulate_batch(model, start, horizon, range(lo, hi), seed)
        if plan.degree is None:
            return np.array([_weight(traj, problem, feedback, t_offset, model, plan) for traj in batch.trajectories()])
        _, exponent = _segment_integrals(batch, problem, feedback, t_offset, model)
        return _batch_weights(batch, problem, feedback, t_offset, model, exponent)

    samples = np.concatenate(map_chunks(run_chunk, n_paths, workers, desc="Girsanov weights"))
    return _summarize(samples, "weight", seed)
