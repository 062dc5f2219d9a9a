# -*- coding: utf-8 -*-
"""Pydantic models for the JSON documents smctrl reads and writes. See README.md."""

from typing import Any, Dict, List, Optional, Type, TypeVar, Union

from pydantic import BaseModel, Field, ValidationError

from smctrl.errors import InvalidModelError

# -----------------------------------------------------------------------------
# Input: semi-Markov model
# -----------------------------------------------------------------------------


class HazardSpec(BaseModel):
    """Piecewise-constant hazard of one state: values[k] holds on [breaks[k], breaks[k+1])."""

    breaks: List[float] = Field(..., description="Age breakpoints, starting at 0 and strictly increasing")
    values: List[float] = Field(..., description="Hazard value per age segment")

    model_config = {"extra": "forbid"}


class ModelDocument(BaseModel):
    """Input: states, per-state hazards and per-segment jump rows."""

    states: List[str] = Field(..., description="Ordered state identifiers")
    hazard: Dict[str, HazardSpec] = Field(default_factory=dict, description="Hazard per state; missing means zero")
    kernel: Dict[str, List[List[float]]] = Field(
        default_factory=dict,
        description="Per state, one probability row over states for each hazard segment",
    )
    hazard_bound: Optional[float] = Field(default=None, description="Declared bound C_lambda on all hazard values")

    model_config = {"extra": "forbid"}


# -----------------------------------------------------------------------------
# Input: control problem
# -----------------------------------------------------------------------------


class PiecewiseEntry(BaseModel):
    """A table piecewise constant in age, optionally also in time.

    Without time_breaks, values is one number per age segment. With time_breaks,
    values is one such list per time segment.
    """

    breaks: List[float] = Field(default_factory=lambda: [0.0], description="Age breakpoints")
    time_breaks: Optional[List[float]] = Field(default=None, description="Time breakpoints, starting at 0")
    values: Union[List[float], List[List[float]]] = Field(..., description="Table values")

    model_config = {"extra": "forbid", "populate_by_name": True}


class RateEntry(PiecewiseEntry):
    """Rate multiplier r for one (action, from-state, to-state)."""

    action: Optional[int] = Field(default=None, description="Action index; all actions when omitted")
    source: str = Field(..., alias="from", description="Pre-jump state")
    target: str = Field(..., alias="to", description="Post-jump state")


class CostEntry(PiecewiseEntry):
    """Running cost l for one (action, state)."""

    action: Optional[int] = Field(default=None, description="Action index; all actions when omitted")
    state: str = Field(..., description="State the cost applies in")


class TerminalEntry(PiecewiseEntry):
    """Terminal cost g for one state (age dependence only)."""

    state: str = Field(..., description="State the terminal cost applies in")


class RateTable(BaseModel):
    default: float = Field(default=1.0, description="Multiplier where no entry matches")
    entries: List[RateEntry] = Field(default_factory=list)

    model_config = {"extra": "forbid"}


class CostTable(BaseModel):
    default: float = Field(default=0.0, description="Cost where no entry matches")
    entries: List[CostEntry] = Field(default_factory=list)

    model_config = {"extra": "forbid"}


class TerminalTable(BaseModel):
    default: float = Field(default=0.0, description="Terminal cost where no entry matches")
    entries: List[TerminalEntry] = Field(default_factory=list)

    model_config = {"extra": "forbid"}


class ProblemDocument(BaseModel):
    """Input: action set, rate multiplier, costs and horizon."""

    actions: List[float] = Field(..., description="Finite ordered action set U")
    c_r: float = Field(..., alias="C_r", description="Declared bound on the rate multiplier (> 1)")
    horizon: float = Field(..., gt=0.0, description="Time horizon T")
    rate_multiplier: RateTable = Field(default_factory=RateTable)
    running_cost: CostTable = Field(default_factory=CostTable)
    terminal_cost: TerminalTable = Field(default_factory=TerminalTable)

    model_config = {"extra": "forbid", "populate_by_name": True}


# -----------------------------------------------------------------------------
# Output documents
# -----------------------------------------------------------------------------


class EstimateDocument(BaseModel):
    """estimate.json: one Monte Carlo cost estimate."""

    mean: float
    std_error: float
    paths: int
    method: str
    seed: int
    config_hash: str
    start: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"extra": "forbid"}


class RunManifestDocument(BaseModel):
    """Manifest written next to every output file."""

    subcommand: str
    arguments: Dict[str, Any]
    inputs: Dict[str, str] = Field(default_factory=dict, description="Input path -> sha256")
    outputs: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    versions: Dict[str, str] = Field(default_factory=dict)
    config_hash: str
    created_at: str

    model_config = {"extra": "forbid"}


DocumentT = TypeVar("DocumentT", bound=BaseModel)


def _format_location(loc: tuple) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path


def parse_document(cls: Type[DocumentT], data: Any) -> DocumentT:
    """Validate `data` against `cls`; failures become InvalidModelError with the offending path."""
    try:
        return cls.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise InvalidModelError(_format_location(tuple(first["loc"])), first["msg"]) from e
