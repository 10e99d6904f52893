#!/usr/bin/env python3
"""
Tests for formulations, RK4 and the event-driven simulation loop
"""

import pytest
import numpy as np

import sys
sys.path.insert(0, '..')

from chain_model import ForceLaw, State, mass_matrix, three_bar_pendulum, unconstrained_accel
from constraint_schedule import ConstraintSchedule, LockEvent, PhaseConstraints, ScheduleError
from logger import SimLogger
from metrics import max_deviation, summarize
from projection_kernels import Partition, choose_partition, orthogonal_complement
from scenario import load_scenario
import simulate
from simulate import (
    Formulation, NumericalError, Trajectory,
    accel_index1, accel_projected, accel_voronets, diagnostics_row, event_steps,
    lift_voronets, projected_residual, read_csv, rk4_step, run_scenario, write_csv,
)
from transition import TransitionMethod

Q0 = np.full(3, np.pi / 6)


def locked_phase(columns, q):
    events = [LockEvent(0.0, c + 1, lock_value=float(q[c])) for c in columns]
    return PhaseConstraints.from_events(events, len(q))


def three_r_schedule():
    return ConstraintSchedule(events=(LockEvent(0.8, 2), LockEvent(1.3, 3)), n=3)


class GoldenRuns:
    """Full 3R runs computed on first use and shared by the module"""

    def __init__(self):
        self.model = three_bar_pendulum()
        self._cache = {}

    def get(self, method="minimal", formulation="voronets_minimal") -> Trajectory:
        key = (method, formulation)
        if key not in self._cache:
            self._cache[key] = run_scenario(
                self.model, ForceLaw(), three_r_schedule(), State(0.0, Q0, np.zeros(3)),
                2.0, 1e-4, formulation, method, sample_stride=10, name="3r_locking",
            )
        return self._cache[key]


@pytest.fixture(scope="module")
def golden():
    return GoldenRuns()


@pytest.fixture
def model():
    return three_bar_pendulum()


@pytest.fixture
def rng():
    return np.random.default_rng(99)


class TestFormulations:
    """Cross-checks between index-1, projected and minimal formulations"""

    def test_unconstrained_phase(self, model, rng):
        s = State(0.0, rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        phase = PhaseConstraints.from_events([], 3)
        expected = unconstrained_accel(model, ForceLaw(), s)
        qdd, lam = accel_index1(model, ForceLaw(), phase, s)
        assert np.allclose(qdd, expected, atol=1e-10)
        assert lam.shape == (0,)
        assert np.allclose(accel_projected(model, ForceLaw(), phase, s), expected, atol=1e-10)
        sdd = accel_voronets(model, ForceLaw(), phase, choose_partition(phase.J, 3), s)
        assert np.allclose(sdd, expected, atol=1e-10)

    @pytest.mark.parametrize("columns", [[1], [0], [2], [1, 2], [0, 2]])
    def test_locked_phases_agree(self, model, rng, columns):
        for _ in range(10):
            q = rng.uniform(-np.pi, np.pi, 3)
            qd = rng.uniform(-2, 2, 3)
            qd[columns] = 0.0
            s = State(0.0, q, qd)
            phase = locked_phase(columns, q)
            part = choose_partition(phase.J, 3)
            qdd1, _ = accel_index1(model, ForceLaw(), phase, s)
            qdd2 = accel_projected(model, ForceLaw(), phase, s)
            qdd3 = lift_voronets(model, phase, part, s, accel_voronets(model, ForceLaw(), phase, part, s))
            scale = max(1.0, np.max(np.abs(qdd1)))
            assert np.max(np.abs(qdd1 - qdd2)) <= 1e-9 * scale
            assert np.max(np.abs(qdd1 - qdd3)) <= 1e-9 * scale
            assert np.max(np.abs(qdd1[columns])) <= 1e-12 * scale
            assert projected_residual(model, ForceLaw(), phase, s, qdd2) <= 1e-9 * scale

    def test_applied_and_other_forces_enter_all_formulations(self, model, rng):
        forces = ForceLaw(
            applied=lambda q, qd, t: np.array([3.0, -1.0, 0.5]),
            other=lambda qd, q, t: 0.2 * qd,
        )
        s = State(0.0, rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        expected = unconstrained_accel(model, forces, s)
        phase = PhaseConstraints.from_events([], 3)
        part = choose_partition(phase.J, 3)
        assert np.allclose(accel_index1(model, forces, phase, s)[0], expected, atol=1e-10)
        assert np.allclose(accel_projected(model, forces, phase, s), expected, atol=1e-10)
        assert np.allclose(accel_voronets(model, forces, phase, part, s), expected, atol=1e-10)
        assert not np.allclose(expected, unconstrained_accel(model, ForceLaw(), s))

    def test_voronets_reduced_coordinates(self, model):
        s = State(0.0, Q0, np.array([0.3, 0.0, -0.2]))
        phase = locked_phase([1], Q0)
        part = choose_partition(phase.J, 3)
        assert part.independent == (0, 2)
        sdd = accel_voronets(model, ForceLaw(), phase, part, s)
        assert sdd.shape == (2,)

    def test_formulation_aliases(self):
        assert Formulation.parse("index1") is Formulation.INDEX1_DAE
        assert Formulation.parse("projected") is Formulation.PROJECTED_ODE
        assert Formulation.parse("voronets") is Formulation.VORONETS_MINIMAL
        assert Formulation.parse("voronets_minimal") is Formulation.VORONETS_MINIMAL
        with pytest.raises(ValueError):
            Formulation.parse("euler")


class TestRK4:
    """Test the fixed-step integrator"""

    def test_linear_motion(self):
        s = State(0.0, np.array([1.0, -2.0]), np.array([0.5, 0.25]))
        out = rk4_step(lambda t, q, qd: np.zeros_like(q), s, 0.1)
        assert np.allclose(out.q, [1.05, -1.975], rtol=0.0, atol=1e-14)
        assert np.array_equal(out.qd, s.qd)
        assert out.t == pytest.approx(0.1)

    def test_harmonic_oscillator_one_period(self):
        dt = 1e-3
        steps = int(round(2.0 * np.pi / dt))
        s = State(0.0, np.array([1.0]), np.array([0.0]))
        for k in range(1, steps + 1):
            s = rk4_step(lambda t, q, qd: -q, s, dt, k * dt)
        t = steps * dt
        assert s.t == t
        assert abs(s.q[0] - np.cos(t)) <= 1e-10
        assert abs(s.qd[0] + np.sin(t)) <= 1e-10

    def test_fourth_order_convergence(self):
        def error(dt):
            s = State(0.0, np.array([1.0]), np.array([0.0]))
            steps = int(round(2.0 / dt))
            for k in range(1, steps + 1):
                s = rk4_step(lambda t, q, qd: -q, s, dt, k * dt)
            return abs(s.q[0] - np.cos(2.0))

        e1, e2, e3 = error(0.1), error(0.05), error(0.025)
        assert e1 / e2 == pytest.approx(16.0, rel=0.2)
        assert e2 / e3 == pytest.approx(16.0, rel=0.2)

    def test_non_finite_derivative(self):
        s = State(0.0, np.zeros(1), np.zeros(1))
        with pytest.raises(NumericalError):
            rk4_step(lambda t, q, qd: np.array([np.nan]), s, 0.1)

    def test_step_size_positive(self):
        s = State(0.0, np.zeros(1), np.zeros(1))
        with pytest.raises(ValueError):
            rk4_step(lambda t, q, qd: -q, s, 0.0)


class TestDiagnostics:
    """Test per-sample diagnostics"""

    def test_free_momentum_is_full(self, model):
        s = State(0.0, Q0, np.array([0.1, 0.2, 0.3]))
        phase = PhaseConstraints.from_events([], 3)
        row = diagnostics_row(model, phase, choose_partition(phase.J, 3), s)
        assert np.allclose(row.momentum, mass_matrix(model, Q0) @ s.qd, atol=1e-12)
        assert row.drift == 0.0

    def test_locked_momentum_dimension(self, model):
        s = State(0.0, Q0, np.array([0.1, 0.0, 0.3]))
        phase = locked_phase([1], Q0)
        row = diagnostics_row(model, phase, choose_partition(phase.J, 3), s)
        assert row.momentum.shape == (2,)
        assert row.independent == (0, 2)
        assert np.isnan(row.momentum_full()[1])
        assert row.drift == 0.0

    def test_drift_reports_rate_violation(self, model):
        s = State(0.0, Q0, np.array([0.1, 0.5, 0.3]))
        phase = locked_phase([1], Q0)
        row = diagnostics_row(model, phase, choose_partition(phase.J, 3), s)
        assert row.drift == pytest.approx(0.5)


class TestEventGrid:
    """Test event placement on the integration grid"""

    def test_on_grid(self):
        steps = event_steps(three_r_schedule(), 0.0, 1e-4, 20000)
        assert steps == {8000: 0, 13000: 1}

    def test_off_grid(self):
        sched = ConstraintSchedule(events=(LockEvent(0.85001, 2),), n=3)
        with pytest.raises(ScheduleError):
            event_steps(sched, 0.0, 1e-4, 20000)

    def test_after_end(self):
        with pytest.raises(ScheduleError):
            event_steps(three_r_schedule(), 0.0, 1e-4, 10000)


class TestThreeBarLocking:
    """Joint locking of the planar 3-bar pendulum released from rest"""

    def test_event_rows(self, golden):
        traj = golden.get()
        pairs = traj.event_rows()
        assert len(pairs) == 2
        assert [pre.t for pre, _ in pairs] == pytest.approx([0.8, 1.3], abs=1e-12)
        for pre, post in pairs:
            assert pre.t == post.t
            assert post.momentum.shape == pre.momentum.shape
        assert pairs[0][1].momentum.shape == (2,)
        assert pairs[1][1].momentum.shape == (1,)

    def test_momentum_continuous(self, golden):
        traj = golden.get()
        for pre, post in traj.event_rows():
            assert np.max(np.abs(post.momentum - pre.momentum)) <= 1e-8
        assert all(rec.momentum_jump <= 1e-8 for rec in traj.events)

    def test_energy_drops_at_events(self, golden):
        traj = golden.get()
        for rec in traj.events:
            assert rec.kinetic_drop > 0.0
            assert rec.energy_after < rec.energy_before
            assert rec.energy_before - rec.energy_after == pytest.approx(rec.kinetic_drop, rel=1e-9)

    def test_phase_energy_drift(self, golden):
        summary = summarize(golden.get())
        assert len(summary.phases) == 3
        for phase in summary.phases:
            assert phase.energy_drift <= 1e-6

    def test_locked_coordinates_frozen(self, golden):
        traj = golden.get()
        t, q = traj.times, traj.q
        lock2, lock3 = traj.events[0].lock_value, traj.events[1].lock_value
        assert np.all(q[t > 0.8 - 1e-9, 1] == lock2)
        assert np.all(q[t > 1.3 - 1e-9, 2] == lock3)
        assert np.all(traj.qd[t > 1.3 + 1e-9][:, 1:] == 0.0)

    def test_summary_passes(self, golden):
        assert summarize(golden.get()).passed()

    def test_minimal_and_redundant_identical(self, golden):
        assert max_deviation(golden.get("minimal"), golden.get("redundant")) <= 1e-8

    def test_all_consistent_methods_agree(self, golden):
        reference = golden.get("minimal")
        for method in ("general", "partitioned", "redundant"):
            assert max_deviation(reference, golden.get(method)) <= 1e-7

    @pytest.mark.parametrize("formulation", ["index1_dae", "projected_ode"])
    def test_formulations_agree_over_run(self, golden, formulation):
        assert max_deviation(golden.get(), golden.get("minimal", formulation)) <= 1e-7

    def test_full_run_within_wall_time_budget(self, golden):
        traj = golden.get()
        assert traj.times[-1] == pytest.approx(2.0)
        assert traj.wall_time < 10.0

    def test_naive_control_diverges(self, golden):
        naive = golden.get("naive")
        assert naive.formulation == Formulation.INDEX1_DAE.value
        first = naive.events[0]
        assert first.momentum_jump > 1e-3
        assert not summarize(naive).passed()
        terminal = np.max(np.abs(naive.q[-1] - golden.get().q[-1]))
        assert terminal > 1e-3


class TestRunScenario:
    """Shorter runs exercising loop details"""

    def test_free_pendulum_conserves_energy(self, model):
        sched = ConstraintSchedule(events=(), n=3)
        traj = run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 2.0, 1e-4,
                            sample_stride=100)
        assert traj.events == []
        E = traj.total_energy
        assert (E.max() - E.min()) / E[0] <= 1e-6
        assert traj.times[-1] == pytest.approx(2.0)

    def test_deterministic(self, model):
        sched = ConstraintSchedule(events=(LockEvent(0.05, 2),), n=3)
        runs = [
            run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.1, 1e-3)
            for _ in range(2)
        ]
        assert np.array_equal(runs[0].q, runs[1].q)
        assert np.array_equal(runs[0].qd, runs[1].qd)
        assert np.array_equal(runs[0].momentum, runs[1].momentum, equal_nan=True)

    def test_applied_impulse(self, model):
        sched = ConstraintSchedule(events=(LockEvent(0.05, 2),), n=3)
        U = np.array([5.0, 0.0, -3.0])
        base = run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.1, 1e-3)
        kicked = run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.1, 1e-3,
                              impulses=[U])
        pre, post = kicked.event_rows()[0]
        assert np.allclose(post.momentum - pre.momentum, U[[0, 2]], atol=1e-8)
        assert kicked.events[0].momentum_jump <= 1e-8
        assert not np.allclose(base.q[-1], kicked.q[-1])

    def test_event_at_start(self, model):
        sched = ConstraintSchedule(events=(LockEvent(0.0, 1),), n=3)
        traj = run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.array([0.4, 0.0, 0.0])),
                            0.02, 1e-3)
        assert traj.rows[0].event and traj.rows[1].event
        assert np.all(traj.q[:, 0] == Q0[0])

    def test_logger_records_events(self, model):
        logger = SimLogger(quiet=True)
        sched = ConstraintSchedule(events=(LockEvent(0.02, 2), LockEvent(0.04, 3)), n=3)
        run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.05, 1e-3,
                     logger=logger, name="short")
        summary = logger.get_summary()
        assert summary["events"] == 2
        assert summary["transitions"] == 2
        assert summary["runs_completed"] == 1

    def test_off_grid_event_rejected(self, model):
        sched = ConstraintSchedule(events=(LockEvent(0.0505, 2),), n=3)
        with pytest.raises(ScheduleError):
            run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.1, 1e-3)

    def test_off_grid_end_time_rejected(self, model):
        sched = ConstraintSchedule(events=(), n=3)
        with pytest.raises(ValueError, match="not on the integration grid"):
            run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.01049, 1e-3)

    def test_preset_lock_value_matching_state(self, model):
        sched = ConstraintSchedule(events=(LockEvent(0.05, 2),), n=3)
        base = run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.1, 1e-3)
        value = base.events[0].lock_value
        preset = ConstraintSchedule(events=(LockEvent(0.05, 2, lock_value=value),), n=3)
        traj = run_scenario(model, ForceLaw(), preset, State(0.0, Q0, np.zeros(3)), 0.1, 1e-3)
        assert traj.events[0].lock_value == value
        assert np.array_equal(traj.q, base.q)

    def test_preset_lock_value_mismatch(self, model):
        sched = ConstraintSchedule(events=(LockEvent(0.05, 2, lock_value=0.0),), n=3)
        with pytest.raises(ScheduleError, match="Preset lock value"):
            run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.1, 1e-3)

    @pytest.mark.parametrize("formulation", list(Formulation))
    def test_complement_built_once_per_phase(self, model, monkeypatch, formulation):
        calls = []

        def counting(J, part):
            calls.append(part)
            return orthogonal_complement(J, part)

        monkeypatch.setattr(simulate, "orthogonal_complement", counting)
        sched = ConstraintSchedule(events=(LockEvent(0.02, 2), LockEvent(0.04, 3)), n=3)
        traj = run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.06, 1e-3,
                            formulation, sample_stride=1)
        assert len(traj.events) == 2
        assert len(calls) == 3

    def test_schedule_size_must_match(self, model):
        with pytest.raises(ScheduleError):
            run_scenario(model, ForceLaw(), ConstraintSchedule(events=(), n=2),
                         State(0.0, Q0, np.zeros(3)), 0.1, 1e-3)

    def test_six_link_cascade(self):
        sc = load_scenario("6r_cascade")
        traj = run_scenario(sc.model, sc.force_law(), sc.to_schedule(), sc.initial_state(),
                            sc.t_end, sc.dt, sc.formulation, sc.transition)
        summary = summarize(traj)
        assert len(summary.events) == 3
        assert [e.joint for e in summary.events] == [1, 2, 3]
        assert summary.passed()


class TestCsv:
    """Test trajectory CSV output"""

    def test_round_trip(self, model, tmp_path):
        sched = ConstraintSchedule(events=(LockEvent(0.03, 2),), n=3)
        traj = run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.06, 1e-3,
                            sample_stride=5)
        path = write_csv(traj, tmp_path / "out.csv")
        header = path.read_text().splitlines()[0].split(",")
        assert header == traj.columns()
        back = read_csv(path)
        assert len(back) == len(traj)
        assert np.array_equal(back.times, traj.times)
        assert np.array_equal(back.q, traj.q)
        assert np.array_equal(back.qd, traj.qd)
        assert np.array_equal(back.momentum, traj.momentum, equal_nan=True)
        assert np.array_equal(back.total_energy, traj.total_energy)
        assert [r.event for r in back.rows] == [r.event for r in traj.rows]

    def test_locked_momentum_columns_empty(self, model, tmp_path):
        sched = ConstraintSchedule(events=(LockEvent(0.01, 2),), n=3)
        traj = run_scenario(model, ForceLaw(), sched, State(0.0, Q0, np.zeros(3)), 0.02, 1e-3)
        lines = write_csv(traj, tmp_path / "out.csv").read_text().splitlines()
        last = lines[-1].split(",")
        assert last[traj.columns().index("p_2")] == ""
        assert last[traj.columns().index("p_1")] != ""


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
