#!/usr/bin/env python3
"""
Tests for run summaries and method comparison
"""

import pytest
import json

import numpy as np

import sys
sys.path.insert(0, '..')

from rich.console import Console

from chain_model import ForceLaw, State, three_bar_pendulum
from config import ToleranceConfig
from constraint_schedule import ConstraintSchedule, LockEvent
from metrics import (
    CompareReport, compare_runs, max_deviation, render_compare, render_summary, summarize,
)
from simulate import Trajectory, run_scenario

Q0 = np.full(3, np.pi / 6)


def short_run(method="minimal", events=((0.02, 2), (0.04, 3))):
    sched = ConstraintSchedule(events=tuple(LockEvent(t, j) for t, j in events), n=3)
    return run_scenario(three_bar_pendulum(), ForceLaw(), sched, State(0.0, Q0, np.zeros(3)),
                        0.06, 1e-3, transition_method=method, sample_stride=5, name="short")


@pytest.fixture(scope="module")
def runs():
    return {m: short_run(m) for m in ("general", "partitioned", "redundant", "minimal", "naive")}


class TestSummarize:
    """Test RunSummary"""

    def test_events_and_phases(self, runs):
        summary = summarize(runs["minimal"])
        assert [e.joint for e in summary.events] == [2, 3]
        assert len(summary.phases) == 3
        assert [p.locked for p in summary.phases] == [[], [2], [2, 3]]
        assert summary.phases[1].t_start == summary.events[0].time
        assert summary.phases[0].t_end == summary.events[0].time

    def test_consistent_run_passes(self, runs):
        summary = summarize(runs["minimal"])
        checks = summary.checks()
        assert all(checks.values()), checks
        assert summary.consistent
        assert summary.max_lock_deviation == 0.0

    def test_kinetic_drop_matches_energy_jump(self, runs):
        for e in summarize(runs["general"]).events:
            assert -e.energy_jump == pytest.approx(e.kinetic_drop, rel=1e-9, abs=1e-10)

    def test_naive_fails_momentum_check(self, runs):
        summary = summarize(runs["naive"])
        assert not summary.consistent
        assert not summary.checks()["momentum_continuous"]
        assert not summary.passed()

    def test_custom_tolerances(self, runs):
        summary = summarize(runs["naive"])
        assert summary.checks(ToleranceConfig(momentum_jump=1e6))["momentum_continuous"]

    def test_free_run(self):
        summary = summarize(short_run(events=()))
        assert summary.events == []
        assert len(summary.phases) == 1
        assert summary.max_momentum_jump == 0.0

    def test_save(self, runs, tmp_path):
        path = summarize(runs["minimal"]).save(tmp_path / "summary.json")
        data = json.loads(path.read_text())
        assert data["summary"]["method"] == "minimal"
        assert len(data["summary"]["events"]) == 2
        assert data["summary"]["checks"]["momentum_continuous"] is True


class TestCompare:
    """Test cross-method comparison"""

    def test_max_deviation_self(self, runs):
        assert max_deviation(runs["minimal"], runs["minimal"]) == 0.0

    def test_max_deviation_shape_mismatch(self, runs):
        with pytest.raises(ValueError):
            max_deviation(runs["minimal"], Trajectory(n=3))

    def test_consistent_methods_within_gate(self, runs):
        consistent = {m: runs[m] for m in ("general", "partitioned", "redundant", "minimal")}
        report = compare_runs(consistent, gate=1e-7, scenario="short")
        assert report.passed
        assert report.consistent_max <= 1e-7
        assert report.system_sizes["minimal"] == [4, 3]
        assert report.system_sizes["general"] == [4, 5]

    def test_naive_exempt_from_gate(self, runs):
        report = compare_runs({m: runs[m] for m in ("minimal", "naive")}, gate=1e-7)
        assert report.passed
        assert report.deviation("minimal", "naive") > 1e-7
        assert report.consistent_max == 0.0

    def test_deviation_lookup_symmetric(self):
        report = CompareReport(scenario="s", methods=["a", "b"], deviations={"a|b": 0.5}, gate=1.0)
        assert report.deviation("b", "a") == 0.5
        assert report.deviation("a", "a") == 0.0

    def test_to_dict(self, runs):
        report = compare_runs({m: runs[m] for m in ("general", "minimal")}, gate=1e-7, scenario="short")
        data = report.to_dict()
        assert data["methods"] == ["general", "minimal"]
        assert set(data["deviations"]) == {"general|minimal"}
        assert data["passed"] is True


class TestRender:
    """Rich rendering smoke tests"""

    def test_render_summary(self, runs):
        console = Console(record=True, width=160)
        render_summary(summarize(runs["minimal"]), console)
        text = console.export_text()
        assert "Run summary" in text
        assert "momentum_continuous ok" in text

    def test_render_compare(self, runs):
        console = Console(record=True, width=160)
        report = compare_runs({m: runs[m] for m in ("general", "minimal", "naive")}, gate=1e-7)
        render_compare(report, console)
        assert "PASS" in console.export_text()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
