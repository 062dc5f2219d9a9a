# -*- coding: utf-8 -*-
"""Shared fixtures: the worked example, random models and problems, seeded generators."""

import math

import numpy as np
import pytest

from smctrl.control import ControlProblem
from smctrl.model import SemiMarkovModel
from smctrl.oracle import ExampleConfig, example_model, example_problem


def random_rows(rng: np.random.Generator, n_states: int, x: int, pieces: int) -> list:
    """One probability row per piece with zero diagonal."""
    rows = []
    for _ in range(pieces):
        row = rng.dirichlet(np.ones(n_states - 1))
        rows.append(np.insert(row, x, 0.0).tolist())
    # renormalise so the row sum is 1 to within the validation tolerance
    return [(np.asarray(r) / math.fsum(r)).tolist() for r in rows]


def build_random_model(
    rng: np.random.Generator,
    n_states: int = 3,
    max_pieces: int = 3,
    max_age: float = 1.5,
    max_rate: float = 2.0,
    zero_tail: bool = False,
) -> SemiMarkovModel:
    """Piecewise-constant hazards with random breakpoints and rows."""
    states = [f"s{k}" for k in range(n_states)]
    breaks, values, rows = [], [], []
    for x in range(n_states):
        pieces = int(rng.integers(1, max_pieces + 1))
        inner = np.sort(rng.uniform(0.05, max_age, size=pieces - 1))
        b = np.concatenate([[0.0], inner])
        v = rng.uniform(0.1, max_rate, size=pieces)
        if zero_tail:
            v[-1] = 0.0
        breaks.append(b.tolist())
        values.append(v.tolist())
        rows.append(random_rows(rng, n_states, x, pieces))
    return SemiMarkovModel(states, breaks, values, rows)


def build_random_problem(
    rng: np.random.Generator,
    model: SemiMarkovModel,
    horizon: float = 1.0,
    n_actions: int = 3,
    c_r: float = 2.0,
) -> ControlProblem:
    """Tabulated problem with r in [0, c_r], bounded costs and an age-dependent terminal cost."""
    n = model.n_states
    rate_entries, cost_entries, terminal_entries = [], [], []
    for k in range(n_actions):
        for x in range(n):
            for y in range(n):
                if x != y:
                    rate_entries.append(
                        {
                            "action": k,
                            "from": model.states[x],
                            "to": model.states[y],
                            "breaks": [0.0, 0.5],
                            "values": rng.uniform(0.0, c_r, size=2).tolist(),
                        }
                    )
            cost_entries.append({"action": k, "state": model.states[x], "values": [float(rng.uniform(0.0, 1.0))]})
    for x in range(n):
        terminal_entries.append({"state": model.states[x], "breaks": [0.0, 0.7], "values": rng.uniform(0, 1, 2).tolist()})
    doc = {
        "actions": list(range(n_actions)),
        "C_r": c_r,
        "horizon": horizon,
        "rate_multiplier": {"default": 1.0, "entries": rate_entries},
        "running_cost": {"default": 0.0, "entries": cost_entries},
        "terminal_cost": {"default": 0.0, "entries": terminal_entries},
    }
    return ControlProblem.from_document(doc, model)


def two_state_model(rate: float = 1.0) -> SemiMarkovModel:
    """Two states swapping at a constant rate."""
    return SemiMarkovModel(["a", "b"], [[0.0], [0.0]], [[rate], [rate]], [[[0.0, 1.0]], [[1.0, 0.0]]])


def zero_model(n_states: int = 2) -> SemiMarkovModel:
    states = [f"z{k}" for k in range(n_states)]
    return SemiMarkovModel(states, [[0.0]] * n_states, [[0.0]] * n_states, [[[0.0] * n_states]] * n_states)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def example_cfg():
    return ExampleConfig(alpha=2.0, horizon=1.0)


@pytest.fixture
def worked_model(example_cfg):
    return example_model(example_cfg)


@pytest.fixture
def worked_problem(example_cfg, worked_model):
    return example_problem(example_cfg, worked_model)


@pytest.fixture
def random_model():
    return build_random_model


@pytest.fixture
def random_problem():
    return build_random_problem


@pytest.fixture
def swap_model():
    return two_state_model


@pytest.fixture
def no_jump_model():
    return zero_model
