# -*- coding: utf-8 -*-
"""
Closed-form solution of the four-state intensity-control example. See README.md.

States x1 -> x2 -> {x3, x4}. From x2 the action u in {0, 1, 2} multiplies the rate
toward x3 by u and toward x4 by 2 - u, at running cost (alpha·u/2)·λ. Reaching x4
costs 1 at the horizon. With m = min(1, alpha):

    y1(s, t1) = m·(1 − exp(−∫_s^T λ(x2, σ − t1) dσ))
    y0(s)     = m·[(1 − e^{−Λ1(s,T)}) − ∫_s^T λ1(a+σ)·e^{−Λ1(s,σ)}·S2(T − σ) dσ]

where Λ1 integrates the hazard of x1 along the age and S2 is the survival of x2.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from smctrl.config import VERIFY_CONFIG
from smctrl.control import ControlProblem, extract_feedback, solve_hjb
from smctrl.errors import DomainError
from smctrl.logger_config import get_logger
from smctrl.model import AgePoint, SemiMarkovModel, cumulative_hazard, survival
from smctrl.montecarlo import CostEstimate, estimate_cost_thinned, estimate_cost_weighted

logger = get_logger()

STATES = ("x1", "x2", "x3", "x4")
X1, X2, X3, X4 = range(4)
ACTIONS = (0.0, 1.0, 2.0)
C_R = 2.0


@dataclass(frozen=True)
class ExampleConfig:
    """alpha > 0, horizon T, piecewise-constant hazards of x1 and x2, initial age in x1."""

    alpha: float = 2.0
    horizon: float = 1.0
    hazard_x1: Tuple[Tuple[float, ...], Tuple[float, ...]] = ((0.0,), (1.0,))
    hazard_x2: Tuple[Tuple[float, ...], Tuple[float, ...]] = ((0.0,), (1.0,))
    start_age: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not (self.horizon > 0):
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if not (self.start_age >= 0):
            raise DomainError(f"start_age must be nonnegative, got {self.start_age}")

    @property
    def m(self) -> float:
        return min(1.0, self.alpha)


def example_model(cfg: ExampleConfig) -> SemiMarkovModel:
    """x1 -> x2 with probability 1, x2 -> x3 or x4 with probability 1/2 each; x3, x4 absorbing."""
    b1, v1 = cfg.hazard_x1
    b2, v2 = cfg.hazard_x2
    rows_x1 = [[0.0, 1.0, 0.0, 0.0] for _ in b1]
    rows_x2 = [[0.0, 0.0, 0.5, 0.5] for _ in b2]
    zero = [[0.0, 0.0, 0.0, 0.0]]
    return SemiMarkovModel(
        STATES,
        [list(b1), list(b2), [0.0], [0.0]],
        [list(v1), list(v2), [0.0], [0.0]],
        [rows_x1, rows_x2, zero, zero],
    )


def example_problem_document(cfg: ExampleConfig) -> Dict[str, Any]:
    """Problem document for the example (tabulated r, l and g)."""
    rate_entries = []
    for k, u in enumerate(ACTIONS):
        rate_entries.append({"action": k, "from": "x2", "to": "x3", "values": [u]})
        rate_entries.append({"action": k, "from": "x2", "to": "x4", "values": [2.0 - u]})
    cost_entries = []
    for sid, (breaks, values) in (("x1", cfg.hazard_x1), ("x2", cfg.hazard_x2)):
        for k, u in enumerate(ACTIONS):
            cost_entries.append(
                {
                    "action": k,
                    "state": sid,
                    "breaks": list(breaks),
                    "values": [cfg.alpha * u / 2.0 * lam for lam in values],
                }
            )
    return {
        "actions": list(ACTIONS),
        "C_r": C_R,
        "horizon": cfg.horizon,
        "rate_multiplier": {"default": 1.0, "entries": rate_entries},
        "running_cost": {"default": 0.0, "entries": cost_entries},
        "terminal_cost": {"default": 0.0, "entries": [{"state": "x4", "values": [1.0]}]},
    }


def example_problem(cfg: ExampleConfig, model: Optional[SemiMarkovModel] = None) -> ControlProblem:
    model = example_model(cfg) if model is None else model
    return ControlProblem.from_document(example_problem_document(cfg), model)


# =============================================================================
# Closed forms
# =============================================================================


def _check_time(cfg: ExampleConfig, s: float):
    if not (0.0 <= s <= cfg.horizon):
        raise DomainError(f"s={s} outside [0, {cfg.horizon}]")


def oracle_y1(cfg: ExampleConfig, s: float, t1: float, model: Optional[SemiMarkovModel] = None) -> float:
    """Value in x2 at time s after the first jump at t1."""
    _check_time(cfg, s)
    if not (0.0 <= t1 <= s):
        raise DomainError(f"expected 0 <= t1 <= s, got t1={t1}, s={s}")
    model = example_model(cfg) if model is None else model
    return cfg.m * -math.expm1(-cumulative_hazard(model, X2, s - t1, cfg.horizon - s))


def _y0_breaks(cfg: ExampleConfig, s: float) -> np.ndarray:
    """σ in (s, T) where λ1(a + σ) or λ2(T − σ) changes."""
    T = cfg.horizon
    points = [b - cfg.start_age for b in cfg.hazard_x1[0]] + [T - b for b in cfg.hazard_x2[0]]
    inner = [p for p in points if s < p < T]
    return np.unique(np.asarray([s, T] + inner, dtype=float))


def oracle_y0(cfg: ExampleConfig, s: float, model: Optional[SemiMarkovModel] = None) -> float:
    """Value in x1 at time s, with the nested integral evaluated piece by piece in closed form."""
    _check_time(cfg, s)
    model = example_model(cfg) if model is None else model
    T, a = cfg.horizon, cfg.start_age
    jumped = -math.expm1(-cumulative_hazard(model, X1, a + s, T - s))
    nested = 0.0
    cuts = _y0_breaks(cfg, s)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        c1 = model.hazard_at(X1, a + mid)
        if c1 == 0.0:
            continue
        c2 = model.hazard_at(X2, T - mid)
        alive = math.exp(-cumulative_hazard(model, X1, a + s, lo - s))
        s2 = survival(model, X2, 0.0, T - lo)
        k = c1 - c2
        length = hi - lo
        piece = length if k == 0.0 else -math.expm1(-k * length) / k
        nested += c1 * alive * s2 * piece
    return float(cfg.m * (jumped - nested))


def oracle_y0_ode(cfg: ExampleConfig, s: float, model: Optional[SemiMarkovModel] = None) -> float:
    """y0 from its ODE dy0/dσ = −λ1(a+σ)·(y1(σ, σ) − y0(σ)), y0(T) = 0, integrated backward."""
    _check_time(cfg, s)
    model = example_model(cfg) if model is None else model
    a = cfg.start_age

    def rhs(sigma, y):
        return [-model.hazard_at(X1, a + sigma) * (oracle_y1(cfg, sigma, sigma, model) - y[0])]

    y = 0.0
    cuts = _y0_breaks(cfg, s)
    for lo, hi in zip(cuts[::-1][:-1], cuts[::-1][1:]):
        sol = solve_ivp(rhs, (lo, hi), [y], method="RK45", rtol=1e-10, atol=1e-12)
        y = float(sol.y[0, -1])
    return y


@dataclass(frozen=True)
class ExampleSolution:
    """Explicit (Y, Z) of the example as functions of time, first jump time and marks."""

    cfg: ExampleConfig
    model: SemiMarkovModel

    def y0(self, s: float) -> float:
        return oracle_y0(self.cfg, s, self.model)

    def y1(self, s: float, t1: float) -> float:
        return oracle_y1(self.cfg, s, t1, self.model)

    def y2(self, xi2: int) -> float:
        return 1.0 if xi2 == X4 else 0.0

    def z0(self, s: float, y: int) -> float:
        return self.y1(s, s) - self.y0(s) if y == X2 else 0.0

    def z1(self, s: float, t1: float, y: int) -> float:
        if y == X3:
            return self.y2(X3) - self.y1(s, t1)
        if y == X4:
            return self.y2(X4) - self.y1(s, t1)
        return 0.0

    def optimal_set(self, jump_count: int) -> Tuple[float, ...]:
        """Every optimal action; between the jumps at alpha = 1 the Hamiltonian is flat in u."""
        if jump_count == 1 and self.cfg.alpha == 1.0:
            return ACTIONS
        return (self.optimal_action(jump_count),)

    def optimal_action(self, jump_count: int) -> float:
        """
        2 between the first and second jump when alpha <= 1, 0 otherwise.

        At alpha = 1 this differs from extract_feedback, whose lowest-index tie-break
        picks 0; both lie in optimal_set.
        """
        if jump_count == 1 and self.cfg.alpha <= 1.0:
            return 2.0
        return 0.0


def oracle_full(cfg: ExampleConfig) -> ExampleSolution:
    return ExampleSolution(cfg, example_model(cfg))


# =============================================================================
# End-to-end check
# =============================================================================


@dataclass
class ExampleReport:
    """Rows of (quantity, value, reference, tolerance, passed) for the verify-example table."""

    alpha: float
    horizon: float
    dt: float
    paths: int
    seed: int
    oracle: float
    hjb: float
    weighted: Optional[CostEstimate] = None
    thinned: Optional[CostEstimate] = None
    rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row["passed"] for row in self.rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "horizon": self.horizon,
            "dt": self.dt,
            "paths": self.paths,
            "seed": self.seed,
            "oracle_y0": self.oracle,
            "hjb_v": self.hjb,
            "weighted": self.weighted.to_dict() if self.weighted else None,
            "thinned": self.thinned.to_dict() if self.thinned else None,
            "rows": self.rows,
            "passed": self.passed,
        }


def verify_example(
    alpha: float,
    T: float,
    dt: float,
    paths: int,
    seed: int,
    workers: Optional[int] = None,
    progress: Optional[bool] = None,
) -> ExampleReport:
    """Oracle y0(0) against the HJB value, and both Monte Carlo estimates under the extracted feedback."""
    cfg = ExampleConfig(alpha=alpha, horizon=T)
    model = example_model(cfg)
    problem = example_problem(cfg, model)
    reference = oracle_y0(cfg, 0.0, model)

    field_ = solve_hjb(problem, model, dt, a_max=0.0)
    value = float(field_.evaluate(0.0, X1, 0.0))
    report = ExampleReport(alpha, T, dt, paths, seed, reference, value)
    value_tol = VERIFY_CONFIG["value_tol"]
    report.rows.append(
        {
            "quantity": "HJB v(0,x1,0)",
            "value": value,
            "reference": reference,
            "tolerance": value_tol,
            "passed": bool(abs(value - reference) <= value_tol),
        }
    )

    if paths >= 2:
        feedback = extract_feedback(problem, model, field_)
        start = AgePoint(X1, 0.0)
        sigmas, slack = VERIFY_CONFIG["mc_sigmas"], VERIFY_CONFIG["mc_slack"]
        for name, estimator in (("weighted", estimate_cost_weighted), ("thinned", estimate_cost_thinned)):
            estimate = estimator(problem, model, start, 0.0, feedback, paths, seed, workers=workers, progress=progress)
            setattr(report, name, estimate)
            tolerance = sigmas * estimate.std_error + slack
            report.rows.append(
                {
                    "quantity": f"{name} J(u*)",
                    "value": estimate.mean,
                    "reference": value,
                    "tolerance": tolerance,
                    "passed": bool(abs(estimate.mean - value) <= tolerance),
                }
            )
    logger.info(f"verify-example alpha={alpha}: {'pass' if report.passed else 'FAIL'}")
    return report
