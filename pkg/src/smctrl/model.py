# -*- coding: utf-8 -*-
"""Semi-Markov model data and closed-form jump-law quantities. See README.md."""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from smctrl.errors import DomainError, InvalidModelError
from smctrl.schemas import ModelDocument, parse_document

ROW_SUM_TOL = 1e-12

StateId = str


@dataclass(frozen=True)
class AgePoint:
    """A state index together with the time already spent in it."""

    state: int
    age: float

    def __post_init__(self):
        if not (self.age >= 0.0):
            raise DomainError(f"age must be nonnegative, got {self.age}")

    def to_dict(self) -> Dict[str, Any]:
        return {"state": self.state, "age": self.age}


class SemiMarkovModel:
    """
    Finite-state semi-Markov model with piecewise-constant hazards and jump rows.

    For state k, `breaks[k]` = [b_0=0, b_1, ..., b_m] and `values[k]` = [λ_0, ..., λ_m],
    with λ_i holding on [b_i, b_{i+1}) and λ_m on [b_m, ∞). `rows[k]` has one probability
    row over states per segment. Adjacent segments with equal hazard value and equal row
    are merged on construction, so a refined description yields an identical model.

    Instances are immutable and safe to share across threads.
    """

    def __init__(
        self,
        states: Sequence[StateId],
        breaks: Sequence[Sequence[float]],
        values: Sequence[Sequence[float]],
        rows: Sequence[Sequence[Sequence[float]]],
        hazard_bound: Optional[float] = None,
    ):
        states = [str(s) for s in states]
        if not states:
            raise InvalidModelError("states", "at least one state is required")
        if len(set(states)) != len(states):
            raise InvalidModelError("states", "state identifiers must be unique")
        n = len(states)
        if not (len(breaks) == len(values) == len(rows) == n):
            raise InvalidModelError("hazard", "one hazard and one kernel entry per state is required")

        self._states: List[StateId] = states
        self._index: Dict[StateId, int] = {s: k for k, s in enumerate(states)}
        self._breaks: List[np.ndarray] = []
        self._values: List[np.ndarray] = []
        self._rows: List[np.ndarray] = []
        self._cum: List[np.ndarray] = []

        for k, sid in enumerate(states):
            b, v, q = self._validate_state(k, sid, breaks[k], values[k], rows[k])
            b, v, q = _merge_segments(b, v, q)
            for arr in (b, v, q):
                arr.flags.writeable = False
            self._breaks.append(b)
            self._values.append(v)
            self._rows.append(q)
            # cum[i] = integral of the hazard over [0, b_i]
            cum = np.zeros(len(b))
            if len(b) > 1:
                cum[1:] = np.cumsum(v[:-1] * np.diff(b))
            cum.flags.writeable = False
            self._cum.append(cum)

        largest = max(float(v.max()) for v in self._values)
        if hazard_bound is None:
            hazard_bound = largest
        if not math.isfinite(hazard_bound) or hazard_bound < largest:
            raise InvalidModelError(
                "hazard_bound", f"declared bound {hazard_bound} is below the largest hazard value {largest}"
            )
        self._hazard_bound = float(hazard_bound)

    # ------------------------------------------------------------------
    # Construction helpers
    # ------------------------------------------------------------------

    def _validate_state(self, k, sid, breaks, values, rows):
        n = len(self._states)
        b = np.asarray(breaks, dtype=float)
        v = np.asarray(values, dtype=float)
        if b.ndim != 1 or len(b) == 0 or b[0] != 0.0:
            raise InvalidModelError(f"hazard.{sid}.breaks", "breakpoints must start at 0")
        if not np.all(np.isfinite(b)) or np.any(np.diff(b) <= 0):
            raise InvalidModelError(f"hazard.{sid}.breaks", "breakpoints must be finite and strictly increasing")
        if v.shape != b.shape:
            raise InvalidModelError(f"hazard.{sid}.values", "one value per breakpoint is required")
        for i, val in enumerate(v):
            if not math.isfinite(val) or val < 0:
                raise InvalidModelError(f"hazard.{sid}.values[{i}]", "hazard values must be finite and nonnegative")

        q = np.asarray(rows, dtype=float)
        if q.shape != (len(b), n):
            raise InvalidModelError(
                f"kernel.{sid}", f"expected {len(b)} rows of length {n}, got shape {list(q.shape)}"
            )
        for i in range(len(b)):
            row = q[i]
            path = f"kernel.{sid}[{i}]"
            if not np.all(np.isfinite(row)) or np.any(row < 0):
                raise InvalidModelError(path, "row entries must be finite and nonnegative")
            if row[k] != 0.0:
                raise InvalidModelError(path, "self-transition probability must be 0")
            total = float(row.sum())
            if total == 0.0 and v[i] == 0.0:
                continue
            if abs(total - 1.0) > ROW_SUM_TOL:
                raise InvalidModelError(path, f"row sums to {total!r}, expected 1")
        return b, v, q

    @classmethod
    def from_document(cls, doc: Union[ModelDocument, Dict[str, Any]]) -> "SemiMarkovModel":
        """Build a model from a parsed (or raw) model document; missing entries mean zero hazard."""
        if not isinstance(doc, ModelDocument):
            doc = parse_document(ModelDocument, doc)
        known = set(doc.states)
        for key in list(doc.hazard) + list(doc.kernel):
            if key not in known:
                raise InvalidModelError(f"hazard.{key}" if key in doc.hazard else f"kernel.{key}", "unknown state")
        n = len(doc.states)
        breaks, values, rows = [], [], []
        for sid in doc.states:
            spec = doc.hazard.get(sid)
            b = spec.breaks if spec is not None else [0.0]
            v = spec.values if spec is not None else [0.0]
            q = doc.kernel.get(sid)
            if q is None:
                if any(val != 0.0 for val in v):
                    raise InvalidModelError(f"kernel.{sid}", "kernel rows are required where the hazard is positive")
                q = [[0.0] * n for _ in b]
            breaks.append(b)
            values.append(v)
            rows.append(q)
        return cls(doc.states, breaks, values, rows, hazard_bound=doc.hazard_bound)

    def to_document(self) -> Dict[str, Any]:
        return {
            "states": list(self._states),
            "hazard": {
                sid: {"breaks": self._breaks[k].tolist(), "values": self._values[k].tolist()}
                for k, sid in enumerate(self._states)
            },
            "kernel": {sid: self._rows[k].tolist() for k, sid in enumerate(self._states)},
            "hazard_bound": self._hazard_bound,
        }

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------

    @property
    def states(self) -> List[StateId]:
        return list(self._states)

    @property
    def n_states(self) -> int:
        return len(self._states)

    @property
    def hazard_bound(self) -> float:
        """Declared bound C_λ on every hazard value."""
        return self._hazard_bound

    @property
    def jump_rate_bound(self) -> float:
        """sup over (x, a) of λ(x,a)·q̄(x,a,K)."""
        return max(float(np.max(v * q.sum(axis=1))) for v, q in zip(self._values, self._rows))

    def index(self, state: Union[int, StateId]) -> int:
        """Index of a state given by index or identifier."""
        if isinstance(state, (int, np.integer)) and not isinstance(state, bool):
            return self._check(int(state))
        try:
            return self._index[str(state)]
        except KeyError:
            raise DomainError(f"unknown state {state!r}") from None

    def _check(self, x: int) -> int:
        if not (0 <= x < len(self._states)):
            raise DomainError(f"unknown state index {x}")
        return x

    def breaks(self, x: int) -> np.ndarray:
        return self._breaks[self._check(x)]

    def values(self, x: int) -> np.ndarray:
        return self._values[self._check(x)]

    def rows(self, x: int) -> np.ndarray:
        return self._rows[self._check(x)]

    def segment(self, x: int, a: float) -> int:
        return int(np.searchsorted(self._breaks[self._check(x)], a, side="right")) - 1

    def hazard_at(self, x: int, a: float) -> float:
        i = self.segment(x, a)
        return float(self._values[x][i])

    def row_at(self, x: int, a: float) -> np.ndarray:
        i = self.segment(x, a)
        return self._rows[x][i]

    def hazard_on(self, x: int, ages: np.ndarray) -> np.ndarray:
        """λ(x, ·) evaluated on an array of ages."""
        idx = np.searchsorted(self._breaks[self._check(x)], ages, side="right") - 1
        return self._values[x][idx]

    def kernel_on(self, x: int, ages: np.ndarray) -> np.ndarray:
        """q̄(x, ·, ·) evaluated on an array of ages, shape (len(ages), n_states)."""
        idx = np.searchsorted(self._breaks[self._check(x)], ages, side="right") - 1
        return self._rows[x][idx]

    def rate_on(self, x: int, ages: np.ndarray) -> np.ndarray:
        """λ(x,a)·q̄(x,a,{y}) on an array of ages, shape (len(ages), n_states)."""
        idx = np.searchsorted(self._breaks[self._check(x)], ages, side="right") - 1
        return self._values[x][idx][:, None] * self._rows[x][idx]

    def invert_on(self, x: int, ages: np.ndarray, levels: np.ndarray) -> np.ndarray:
        """Vectorized invert_cumulative_hazard for one state: local times reaching each level, inf when unreachable."""
        b, v, cum = self._breaks[self._check(x)], self._values[x], self._cum[x]
        ages = np.asarray(ages, dtype=float)
        levels = np.asarray(levels, dtype=float)
        i0 = np.searchsorted(b, ages, side="right") - 1
        target = cum[i0] + v[i0] * (ages - b[i0]) + levels
        i1 = np.maximum(np.searchsorted(cum, target, side="left") - 1, i0)
        # the last segment carries the tail mass; an empty tail is unreachable
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(v[i1] > 0, b[i1] + (target - cum[i1]) / v[i1] - ages, np.inf)
        out = np.maximum(s, 0.0)
        out[levels == 0.0] = 0.0
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SemiMarkovModel):
            return NotImplemented
        return (
            self._states == other._states
            and self._hazard_bound == other._hazard_bound
            and all(np.array_equal(a, b) for a, b in zip(self._breaks, other._breaks))
            and all(np.array_equal(a, b) for a, b in zip(self._values, other._values))
            and all(np.array_equal(a, b) for a, b in zip(self._rows, other._rows))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"SemiMarkovModel(states={self._states!r})"


def _merge_segments(b: np.ndarray, v: np.ndarray, q: np.ndarray):
    keep = [0]
    for i in range(1, len(b)):
        j = keep[-1]
        if v[i] != v[j] or not np.array_equal(q[i], q[j]):
            keep.append(i)
    keep = np.asarray(keep)
    return b[keep].copy(), v[keep].copy(), q[keep].copy()


def _check_nonneg(name: str, value: float):
    if not (value >= 0.0):
        raise DomainError(f"{name} must be nonnegative, got {value}")


# ----------------------------------------------------------------------
# Jump-law quantities
# ----------------------------------------------------------------------


def cumulative_hazard(model: SemiMarkovModel, x: int, a: float, s: float) -> float:
    """∫_a^{a+s} λ(x, r) dr, exact over the piecewise-constant segments (s may be inf)."""
    x = model.index(x)
    _check_nonneg("a", a)
    _check_nonneg("s", s)
    b, v, cum = model._breaks[x], model._values[x], model._cum[x]
    i0 = model.segment(x, a)
    if math.isinf(s):
        if v[-1] > 0:
            return math.inf
        if i0 == len(b) - 1:
            return 0.0
        return float(v[i0] * (b[i0 + 1] - a) + (cum[-1] - cum[i0 + 1]))
    if s == 0.0:
        return 0.0
    end = a + s
    i1 = model.segment(x, end)
    if i0 == i1:
        return float(v[i0] * s)
    return float(v[i0] * (b[i0 + 1] - a) + (cum[i1] - cum[i0 + 1]) + v[i1] * (end - b[i1]))


def survival(model: SemiMarkovModel, x: int, a: float, s: float) -> float:
    """P^{x,a}(T_1 > s)."""
    return math.exp(-cumulative_hazard(model, x, a, s))


def distribution_H(model: SemiMarkovModel, x: int, s: float) -> float:
    """H(x, s) = 1 − exp(−∫_0^s λ(x, r) dr); s = inf gives the probability of ever jumping."""
    return -math.expm1(-cumulative_hazard(model, x, 0.0, s))


def no_jump_probability(model: SemiMarkovModel, x: int, a: float) -> float:
    """P^{x,a}(T_1 = ∞)."""
    return survival(model, x, a, math.inf)


def kernel_Q(
    model: SemiMarkovModel,
    x: int,
    a: float,
    target_set: Iterable[Union[int, StateId]],
    c: float,
    d: float,
) -> float:
    """
    Q(x, a, A × (c, d)): probability that the first jump lands in A at a local time in (c, d).

    Each age segment contributes q̄_i(A)·S(a → u0)·(1 − exp(−λ_i·(u1 − u0))).
    """
    x = model.index(x)
    _check_nonneg("a", a)
    if not (0.0 <= c < d):
        raise DomainError(f"expected 0 <= c < d, got c={c}, d={d}")
    targets = sorted({model.index(y) for y in target_set})
    if not targets:
        return 0.0
    b, v, q = model._breaks[x], model._values[x], model._rows[x]
    mass = q[:, targets].sum(axis=1)

    total = 0.0
    u0 = a + c
    u_end = a + d
    i = model.segment(x, u0)
    while u0 < u_end:
        seg_end = b[i + 1] if i + 1 < len(b) else math.inf
        u1 = min(seg_end, u_end)
        if v[i] > 0 and mass[i] > 0:
            alive = survival(model, x, a, u0 - a)
            if math.isinf(u1):
                total += mass[i] * alive
            else:
                total += mass[i] * alive * -math.expm1(-v[i] * (u1 - u0))
        if math.isinf(u1):
            break
        u0 = u1
        i += 1
    return float(total)


def invert_cumulative_hazard(model: SemiMarkovModel, x: int, a: float, level: float) -> float:
    """The s with cumulative_hazard(x, a, s) = level, or inf when the remaining mass falls short."""
    x = model.index(x)
    _check_nonneg("level", level)
    if level == 0.0:
        return 0.0
    b, v = model._breaks[x], model._values[x]
    i = model.segment(x, a)
    elapsed = 0.0
    pos = a
    remaining = level
    while True:
        seg_end = b[i + 1] if i + 1 < len(b) else math.inf
        if v[i] > 0:
            mass = v[i] * (seg_end - pos)
            if remaining <= mass:
                return elapsed + remaining / v[i]
            remaining -= mass
        if math.isinf(seg_end):
            return math.inf
        elapsed += seg_end - pos
        pos = seg_end
        i += 1


def load_model(path: Union[str, Path]) -> SemiMarkovModel:
    """Read and validate a model JSON document."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidModelError("", f"{path}: invalid JSON ({e})") from e
    return SemiMarkovModel.from_document(data)
