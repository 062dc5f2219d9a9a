# -*- coding: utf-8 -*-
"""Tests for the closed-form worked example and its end-to-end check."""

import json
import math

import numpy as np
import pytest

from smctrl import DomainError, extract_feedback, solve_hjb
from smctrl.config import VERIFY_CONFIG
from smctrl.oracle import (
    X1,
    X2,
    X3,
    X4,
    ExampleConfig,
    example_model,
    example_problem,
    oracle_full,
    oracle_y0,
    oracle_y0_ode,
    oracle_y1,
    verify_example,
)

PIECEWISE = ExampleConfig(
    alpha=0.7,
    horizon=1.5,
    hazard_x1=((0.0, 0.3), (1.0, 2.5)),
    hazard_x2=((0.0, 0.5), (0.5, 3.0)),
    start_age=0.1,
)


class TestClosedForms:

    def test_reference_values(self, example_cfg):
        """α = 2, λ ≡ 1, T = 1: y1(0, 0) = 1 − 1/e and y0(0) = 1 − 2/e."""
        assert oracle_y1(example_cfg, 0.0, 0.0) == pytest.approx(0.6321206, abs=1e-7)
        assert oracle_y0(example_cfg, 0.0) == pytest.approx(0.2642411, abs=1e-7)

    def test_vanish_at_horizon(self, example_cfg):
        """Both values are 0 at s = T."""
        assert oracle_y1(example_cfg, 1.0, 0.4) == 0.0
        assert oracle_y0(example_cfg, 1.0) == 0.0

    def test_scaling_in_alpha(self):
        """Values scale with min(1, α)."""
        big, small = ExampleConfig(alpha=2.0), ExampleConfig(alpha=0.5)
        assert oracle_y0(small, 0.3) == pytest.approx(0.5 * oracle_y0(big, 0.3), rel=1e-14)
        assert oracle_y1(small, 0.3, 0.1) == pytest.approx(0.5 * oracle_y1(big, 0.3, 0.1), rel=1e-14)
        assert oracle_y0(ExampleConfig(alpha=1.0), 0.3) == oracle_y0(ExampleConfig(alpha=3.0), 0.3)

    def test_monotone_in_alpha(self):
        """y0(0) is nondecreasing in α."""
        values = [oracle_y0(ExampleConfig(alpha=a), 0.0) for a in (0.1, 0.4, 0.9, 1.0, 2.5)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("s", [0.0, 0.2, 0.55, 1.0, 1.4])
    def test_ode_matches_closed_form(self, s):
        """Piecewise hazards: closed form and ODE agree to 1e-8."""
        assert oracle_y0(PIECEWISE, s) == pytest.approx(oracle_y0_ode(PIECEWISE, s), abs=1e-8)

    def test_y1_depends_on_time_since_jump(self):
        """With age-dependent λ2, y1 changes with t1 at fixed s."""
        assert oracle_y1(PIECEWISE, 0.8, 0.0) != pytest.approx(oracle_y1(PIECEWISE, 0.8, 0.6))

    def test_domain(self, example_cfg):
        """Times outside [0, T] and t1 > s are rejected."""
        with pytest.raises(DomainError):
            oracle_y0(example_cfg, 1.2)
        with pytest.raises(DomainError):
            oracle_y1(example_cfg, 0.3, 0.5)
        with pytest.raises(DomainError):
            ExampleConfig(alpha=0.0)


class TestExampleSolution:

    def test_z_identities(self, example_cfg):
        """Z after the first jump differs by exactly 1 between x4 and x3."""
        sol = oracle_full(example_cfg)
        for s, t1 in ((0.3, 0.1), (0.9, 0.5)):
            assert sol.z1(s, t1, X4) - sol.z1(s, t1, X3) == pytest.approx(1.0, abs=1e-15)
            assert sol.z1(s, t1, X1) == 0.0
        assert sol.z0(0.4, X2) == pytest.approx(sol.y1(0.4, 0.4) - sol.y0(0.4))
        assert sol.z0(0.4, X3) == 0.0
        assert sol.y2(X4) == 1.0 and sol.y2(X3) == 0.0

    @pytest.mark.parametrize("alpha, action", [(0.5, 2.0), (1.0, 2.0), (2.0, 0.0)])
    def test_optimal_action(self, alpha, action):
        """u* = 2 between the jumps when α <= 1, else 0; always 0 before the first jump."""
        sol = oracle_full(ExampleConfig(alpha=alpha))
        assert sol.optimal_action(1) == action
        assert sol.optimal_action(0) == 0.0
        assert action in sol.optimal_set(1)

    def test_tie_at_alpha_one(self):
        """At α = 1 every action is optimal; the grid policy picks the lowest and stays in the set."""
        cfg = ExampleConfig(alpha=1.0)
        sol = oracle_full(cfg)
        assert sol.optimal_set(1) == (0.0, 1.0, 2.0)
        assert sol.optimal_set(0) == (0.0,)
        model = example_model(cfg)
        problem = example_problem(cfg, model)
        policy = extract_feedback(problem, model, solve_hjb(problem, model, 0.05, 0.0))
        chosen = {problem.actions[k] for k in np.unique(policy.table[:, X2, :])}
        assert chosen <= set(sol.optimal_set(1))
        assert sol.optimal_action(1) in sol.optimal_set(1)


class TestAgainstHJB:

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_constant_hazards(self, alpha):
        """v(0, x1, 0) within 10·dt of y0(0)."""
        cfg = ExampleConfig(alpha=alpha)
        model = example_model(cfg)
        dt = 0.01
        field = solve_hjb(example_problem(cfg, model), model, dt, 0.0)
        assert abs(field(0.0, X1, 0.0) - oracle_y0(cfg, 0.0)) <= 10 * dt

    def test_piecewise_hazards(self):
        """Age-dependent hazards: x1 and x2 values along the grid within 10·dt."""
        model = example_model(PIECEWISE)
        dt = 0.01
        field = solve_hjb(example_problem(PIECEWISE, model), model, dt, PIECEWISE.start_age)
        a0 = PIECEWISE.start_age
        for s in (0.0, 0.5, 1.0):
            assert abs(field(s, X1, a0 + s) - oracle_y0(PIECEWISE, s)) <= 10 * dt
        for s, t1 in ((0.5, 0.2), (1.2, 0.4)):
            assert abs(field(s, X2, s - t1) - oracle_y1(PIECEWISE, s, t1)) <= 10 * dt


class TestVerifyExample:

    def test_small_run(self):
        """A reduced run passes and reports three rows."""
        report = verify_example(2.0, 1.0, 0.01, 2000, seed=1)
        assert report.passed, report.to_dict()
        assert [row["quantity"] for row in report.rows] == ["HJB v(0,x1,0)", "weighted J(u*)", "thinned J(u*)"]
        assert report.oracle == pytest.approx(1 - 2 / math.e)
        assert report.to_dict()["passed"] is True

    def test_no_paths(self):
        """paths < 2 skips the Monte Carlo rows."""
        report = verify_example(0.5, 1.0, 0.02, 0, seed=0)
        assert len(report.rows) == 1 and report.weighted is None

    def test_failure_is_reported(self, monkeypatch):
        """A value outside tolerance marks the row and the report as failed."""
        monkeypatch.setitem(VERIFY_CONFIG, "value_tol", 1e-9)
        report = verify_example(2.0, 1.0, 0.1, 0, seed=0)
        assert not report.passed
        assert report.rows[0]["passed"] is False
        assert report.rows[0]["tolerance"] == 1e-9

    def test_report_is_plain_json(self):
        """Values and flags are builtin floats and bools, so the report serializes."""
        report = verify_example(2.0, 1.0, 0.05, 50, seed=2)
        assert type(report.oracle) is float and type(report.hjb) is float
        assert all(type(row["passed"]) is bool for row in report.rows)
        assert json.loads(json.dumps(report.to_dict()))["passed"] is report.passed

    def test_closed_forms_are_floats(self):
        """oracle_y0 and oracle_y1 return builtin floats."""
        assert type(oracle_y0(PIECEWISE, 0.2)) is float
        assert type(oracle_y1(PIECEWISE, 0.8, 0.3)) is float
