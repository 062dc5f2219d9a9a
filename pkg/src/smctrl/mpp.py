# -*- coding: utf-8 -*-
"""Integrals against the jump measure, its compensator and the compensated measure. See README.md."""

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from smctrl.config import RUN_CONFIG
from smctrl.errors import DomainError, QuadratureError
from smctrl.model import AgePoint, SemiMarkovModel, cumulative_hazard
from smctrl.simulate import Trajectory

# integrand(s, x, ages) -> values, vectorized over s and ages on one inter-jump segment
TimeIntegrand = Callable[[np.ndarray, int, np.ndarray], np.ndarray]
# batch(s, x, ages) -> array of shape (len(s), n_states), one column per mark y
MarkBatch = Callable[[np.ndarray, int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MarkField:
    """
    Predictable integrand H_s(y), evaluated at (s, pre-jump AgePoint, y).

    `degree` declares that the field is polynomial in s of at most that degree between
    consecutive `knots` (local times) and age breakpoints; such fields are integrated
    exactly. `batch` is an optional vectorized form returning one column per mark.
    """

    evaluator: Callable[[float, AgePoint, int], float]
    bound: Optional[float] = None
    degree: Optional[int] = None
    knots: Tuple[float, ...] = field(default_factory=tuple)
    batch: Optional[MarkBatch] = None

    def __call__(self, s: float, current: AgePoint, y: int) -> float:
        return float(self.evaluator(s, current, y))

    def matrix(self, s: np.ndarray, x: int, ages: np.ndarray, n_states: int) -> np.ndarray:
        if self.batch is not None:
            return np.broadcast_to(np.asarray(self.batch(s, x, ages), dtype=float), (len(s), n_states))
        out = np.empty((len(s), n_states))
        for i, (si, ai) in enumerate(zip(s, ages)):
            point = AgePoint(x, float(ai))
            for y in range(n_states):
                out[i, y] = self.evaluator(float(si), point, y)
        return out

    def squared(self) -> "MarkField":
        batch = None if self.batch is None else (lambda s, x, a: np.square(self.batch(s, x, a)))
        return MarkField(
            evaluator=lambda s, p, y: self.evaluator(s, p, y) ** 2,
            bound=None if self.bound is None else self.bound**2,
            degree=None if self.degree is None else 2 * self.degree,
            knots=self.knots,
            batch=batch,
        )

    @classmethod
    def constant(cls, c: float) -> "MarkField":
        return cls(
            evaluator=lambda s, p, y: c,
            bound=abs(c),
            degree=0,
            batch=lambda s, x, a: np.full((len(s), 1), c),
        )

    @classmethod
    def table(cls, values: Sequence[Sequence[float]]) -> "MarkField":
        """Field depending only on (pre-jump state, mark): values[x][y]."""
        arr = np.asarray(values, dtype=float)
        return cls(
            evaluator=lambda s, p, y: arr[p.state, y],
            bound=float(np.abs(arr).max()) if arr.size else 0.0,
            degree=0,
            batch=lambda s, x, a: np.broadcast_to(arr[x], (len(s), arr.shape[1])),
        )

    @classmethod
    def indicator(cls, targets: Sequence[int], n_states: int) -> "MarkField":
        """1 when the mark lies in `targets`."""
        values = np.zeros((n_states, n_states))
        values[:, list(targets)] = 1.0
        return cls.table(values)


def _window(traj: Trajectory, start: float, stop: Optional[float]) -> Tuple[float, float]:
    stop = traj.horizon if stop is None else stop
    if not (0.0 <= start <= stop <= traj.horizon):
        raise DomainError(f"window ({start}, {stop}] not inside [0, {traj.horizon}]")
    return start, stop


@functools.lru_cache(maxsize=32)
def _gauss_nodes(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return leggauss(n)


def segment_pieces(
    model: SemiMarkovModel,
    x: int,
    s0: float,
    age0: float,
    lo: float,
    hi: float,
    knots: Sequence[float],
    age_breaks: Sequence[float] = (),
) -> np.ndarray:
    """Cut points of [lo, hi] at knots and at local times where the age crosses a breakpoint."""
    knots = np.asarray(knots, dtype=float)
    crossings = s0 + (np.concatenate([model.breaks(x), np.asarray(age_breaks, dtype=float)]) - age0)
    inner = np.concatenate([knots, crossings])
    inner = inner[(inner > lo) & (inner < hi)]
    return np.unique(np.concatenate([[lo, hi], inner]))


def interior_points(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Every sorted value strictly inside (lo[k], hi[k]), for all k at once.

    Returns (rows, points): points[n] lies in the interval of row rows[n].
    """
    values = np.asarray(values, dtype=float)
    first = np.searchsorted(values, lo, side="right")
    last = np.searchsorted(values, hi, side="left")
    counts = np.maximum(last - first, 0)
    rows = np.repeat(np.arange(len(counts)), counts)
    offsets = np.arange(rows.size) - np.repeat(np.cumsum(counts) - counts, counts)
    return rows, values[np.repeat(first, counts) + offsets]


def integrate_time(
    traj: Trajectory,
    integrand: TimeIntegrand,
    model: SemiMarkovModel,
    degree: Optional[int] = None,
    knots: Sequence[float] = (),
    start: float = 0.0,
    stop: Optional[float] = None,
    tol: Optional[float] = None,
    age_breaks: Sequence[float] = (),
) -> float:
    """
    ∫_start^stop integrand(s, X_s, a_s) ds along the trajectory.

    With `degree` declared, each piece between knots, jumps and age breakpoints is
    integrated by Gauss-Legendre with enough nodes to be exact. Otherwise each piece
    goes to scipy.integrate.quad; a missed tolerance or any QUADPACK warning raises
    QuadratureError.
    """
    start, stop = _window(traj, start, stop)
    tol = RUN_CONFIG["quad_tol"] if tol is None else tol
    limit = RUN_CONFIG["quad_limit"]
    total = 0.0
    for seg in traj.segments():
        lo, hi = max(seg.s0, start), min(seg.s1, stop)
        if hi <= lo:
            continue
        cuts = segment_pieces(model, seg.state, seg.s0, seg.age0, lo, hi, knots, age_breaks)
        if degree is not None:
            xi, w = _gauss_nodes(degree // 2 + 1)
            mid = 0.5 * (cuts[1:] + cuts[:-1])
            half = 0.5 * (cuts[1:] - cuts[:-1])
            s = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
            weights = (half[:, None] * w[None, :]).ravel()
            values = np.asarray(integrand(s, seg.state, seg.age0 + (s - seg.s0)), dtype=float)
            total += float(np.dot(weights, values))
            continue
        for a, b in zip(cuts[:-1], cuts[1:]):

            def scalar(s, seg=seg):
                return float(integrand(np.array([s]), seg.state, np.array([seg.age0 + (s - seg.s0)]))[0])

            result = integrate.quad(scalar, a, b, epsabs=tol, epsrel=0.0, limit=limit, full_output=1)
            value, err = result[0], result[1]
            # a fourth element is QUADPACK's warning message
            if len(result) > 3 or err > tol:
                raise QuadratureError(err, tol, result[3] if len(result) > 3 else None)
            total += value
    return total


def integrate_p(traj: Trajectory, field: MarkField, start: float = 0.0, stop: Optional[float] = None) -> float:
    """Σ over jumps T_n in (start, stop] of field(T_n, pre-jump AgePoint, X_{T_n})."""
    start, stop = _window(traj, start, stop)
    total = 0.0
    state, last, age0 = traj.start.state, 0.0, traj.start.age
    for time, mark in traj.jumps:
        if start < time <= stop:
            total += field(time, AgePoint(state, age0 + (time - last)), mark)
        state, last, age0 = mark, time, 0.0
    return total


def integrate_compensator(
    traj: Trajectory,
    field: MarkField,
    model: SemiMarkovModel,
    start: float = 0.0,
    stop: Optional[float] = None,
) -> float:
    """∫ Σ_y field(s, (X_s, a_s), y) λ(X_s, a_s) q̄(X_s, a_s, {y}) ds over the window."""
    n = model.n_states

    def density(s: np.ndarray, x: int, ages: np.ndarray) -> np.ndarray:
        rates = model.rate_on(x, ages)
        return (field.matrix(s, x, ages, n) * rates).sum(axis=1)

    return integrate_time(traj, density, model, degree=field.degree, knots=field.knots, start=start, stop=stop)


def integrate_q(
    traj: Trajectory,
    field: MarkField,
    model: SemiMarkovModel,
    start: float = 0.0,
    stop: Optional[float] = None,
) -> float:
    """Compensated integral ∫ H dq = ∫ H dp − ∫ H dcompensator."""
    return integrate_p(traj, field, start, stop) - integrate_compensator(traj, field, model, start, stop)


def path_hazard_mass(traj: Trajectory, model: SemiMarkovModel) -> float:
    """Hazard accumulated along the path, Σ over segments of the cumulative hazard."""
    return math.fsum(
        cumulative_hazard(model, seg.state, seg.age0, seg.s1 - seg.s0) for seg in traj.segments()
    )
