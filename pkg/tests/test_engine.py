import numpy as np
import pytest

from piag.engine import (DelaySchedule, aggregated_gradient, init_table, piag_step,
                         read_trace_csv, run_piag, schedule_refresh_set)
from piag.errors import DivergenceError, InputError, StalenessError
from piag.problems import (ComponentFunction, CompositeProblem, make_logistic_instance,
                           make_quadratic_instance)
from piag.prox import Regularizer
from piag.reference import solve_reference
from piag.theory import theorem1_step_size


def scalar_problem(curvatures, centers=None, reg=None):
    centers = centers or [0.0] * len(curvatures)
    comps = [ComponentFunction.quadratic([a], [c]) for a, c in zip(curvatures, centers)]
    mu = float(np.mean(curvatures))
    return CompositeProblem(comps, reg or Regularizer(), mu)


def test_init_table_single():
    t = init_table(scalar_problem([1.0]), [2.0])
    np.testing.assert_array_equal(t.grads, [[2.0]])
    np.testing.assert_array_equal(t.tau, [0])


def test_init_table_two_components():
    t = init_table(scalar_problem([1.0, 3.0]), [1.0])
    np.testing.assert_array_equal(t.grads[:, 0], [1.0, 3.0])
    assert t.running_sum[0] == 4.0


def test_init_table_running_sum_consistent():
    p = make_logistic_instance(9, 5, 1.0, seed=1)
    t = init_table(p, np.linspace(-1, 1, 5))
    assert np.max(np.abs(t.running_sum - t.grads.sum(axis=0))) <= 1e-14
    with pytest.raises(InputError):
        init_table(p, np.zeros(4))


def test_aggregated_gradient_examples():
    t = init_table(scalar_problem([1.0]), [2.0])
    assert aggregated_gradient(t)[0] == 2.0
    p = scalar_problem([1.0, 3.0])
    t = init_table(p, [1.0])
    t.refresh(np.array([0]), p.component_grads([0], np.array([2.0])), 1)
    assert aggregated_gradient(t)[0] == 2.5
    t = init_table(p, [0.0])
    np.testing.assert_array_equal(aggregated_gradient(t), [0.0])


def test_step_reduces_to_gradient_descent():
    p = scalar_problem([1.0])
    t = init_table(p, [1.0])
    x1, d, refreshed = piag_step(p, t, DelaySchedule("full-refresh", 0), np.array([1.0]), 1 / 3, 0)
    assert x1[0] == pytest.approx(2 / 3, abs=1e-15)
    assert d[0] == pytest.approx(-1.0, abs=1e-15)
    np.testing.assert_array_equal(refreshed, [0])


def test_step_with_l1_soft_threshold():
    p = scalar_problem([1.0], [3.0], Regularizer("l1", lam=1.0))
    t = init_table(p, [0.0])
    x1, d, _ = piag_step(p, t, DelaySchedule("full-refresh", 0), np.array([0.0]), 1.0, 0)
    assert x1[0] == 2.0 and d[0] == 2.0


def test_step_direction_identity():
    p = make_quadratic_instance(4, 3, 1.0, 5.0, 2, Regularizer("elastic-net", lam=0.3, lam2=0.1))
    t = init_table(p, np.ones(3))
    x = np.ones(3)
    eta = 0.05
    sched = DelaySchedule("random-bounded", 3, seed=1)
    rng = np.random.default_rng(0)
    for k in range(200):
        x_next, d, _ = piag_step(p, t, sched, x, eta, k, rng)
        assert np.max(np.abs((x + eta * d) - x_next)) <= 4 * np.finfo(float).eps * max(1, np.abs(x).max())
        x = x_next


def test_schedule_examples():
    assert list(schedule_refresh_set(DelaySchedule("cyclic", 2), 7, np.zeros(3))) == [1]
    adv = DelaySchedule("adversarial-deadline", 2)
    assert list(schedule_refresh_set(adv, 5, np.array([2, 0, 2]))) == [0, 2]
    assert list(schedule_refresh_set(DelaySchedule("full-refresh", 0), 5, np.zeros(4))) == [0, 1, 2, 3]
    rb = schedule_refresh_set(DelaySchedule("random-bounded", 1), 3, np.array([1, 0, 0, 1]),
                              np.random.default_rng(0))
    assert {0, 3} <= set(rb) and len(rb) in (2, 3)


@pytest.mark.parametrize("kind,K,m", [("random-bounded", 1, 2), ("random-bounded", 3, 7),
                                      ("adversarial-deadline", 4, 5), ("cyclic", 5, 6),
                                      ("full-refresh", 0, 3)])
def test_staleness_bound_over_long_run(kind, K, m):
    p = make_quadratic_instance(m, 2, 1.0, 2.0, 0)
    sched = DelaySchedule(kind, K, seed=4)
    t = init_table(p, np.zeros(2))
    rng = np.random.default_rng(sched.seed)
    x = np.zeros(2)
    last_refresh = np.zeros(m, dtype=int)
    for k in range(1000):
        x, _, refreshed = piag_step(p, t, sched, x, 0.01, k, rng)
        last_refresh[refreshed] = k
        assert np.max(k - last_refresh) <= K
        np.testing.assert_array_equal(t.tau, last_refresh)


def test_random_bounded_k1_refreshes_every_other_iteration():
    p = make_quadratic_instance(2, 2, 1.0, 2.0, 0)
    ref = solve_reference(p)
    tr = run_piag(p, DelaySchedule("random-bounded", 1, seed=9), np.ones(2), 0.01, ref.F_floor, 1000)
    assert tr.max_staleness.max() <= 1


def test_cyclic_staleness_is_m_minus_1():
    p = make_quadratic_instance(5, 3, 1.0, 4.0, 1)
    ref = solve_reference(p)
    tr = run_piag(p, DelaySchedule("cyclic", 4), np.ones(3), 0.01, ref.F_floor, 300)
    assert tr.max_staleness.max() == 4
    with pytest.raises(InputError):
        run_piag(p, DelaySchedule("cyclic", 3), np.ones(3), 0.01, ref.F_floor, 10)


def test_staleness_violation_raises():
    p = make_quadratic_instance(3, 2, 1.0, 2.0, 0)
    t = init_table(p, np.zeros(2))
    sched = DelaySchedule("cyclic", 0)
    piag_step(p, t, sched, np.zeros(2), 0.1, 0)
    with pytest.raises(StalenessError):
        piag_step(p, t, sched, np.zeros(2), 0.1, 1)


def test_run_1d_quadratic_converges_within_budget():
    p = scalar_problem([1.0], [0.0])
    eta = theorem1_step_size(1.0, 1.0, 0)
    tr = run_piag(p, DelaySchedule("full-refresh", 0), [1.0], eta, 0.0, 1000, epsilon=1e-10)
    assert np.all(np.diff(tr.F) < 0)
    assert tr.F[-1] <= 1e-10
    # closed form: F_k = 0.5 * (1 - eta)^(2k)
    k = np.arange(tr.F.size)
    np.testing.assert_allclose(tr.F, 0.5 * (2 / 3) ** (2 * k), rtol=1e-12, atol=1e-300)


def test_run_from_optimum_stays_put():
    p = make_quadratic_instance(4, 3, 1.0, 10.0, 3, Regularizer("l1", lam=0.2))
    ref = solve_reference(p)
    tr = run_piag(p, DelaySchedule("random-bounded", 2, 1), ref.x_star, 0.01, ref.F_floor, 200)
    assert np.all(np.abs(tr.F) <= 1e-12)
    assert np.all(tr.d_norm_sq <= 1e-24)


def test_k0_zero_reg_is_gradient_descent():
    p = make_logistic_instance(6, 4, 1.0, 2, L_target=5.0)
    eta = 0.1
    tr = run_piag(p, DelaySchedule("full-refresh", 0), np.ones(4), eta, 0.0, 300,
                  record_iterates=True)
    xs = tr.iterates
    for k in range(300):
        gd = xs[k] - eta * p.grad_f(xs[k])
        assert np.max(np.abs(xs[k + 1] - gd)) <= 1e-12


def test_single_component_matches_proximal_gradient():
    p = make_quadratic_instance(1, 4, 1.0, 3.0, 5, Regularizer("l1", lam=0.5))
    eta = 0.2
    for kind in ("random-bounded", "adversarial-deadline", "cyclic", "full-refresh"):
        tr = run_piag(p, DelaySchedule(kind, 0), np.full(4, 2.0), eta, 0.0, 50,
                      record_iterates=True)
        x = np.full(4, 2.0)
        a, c = p.components[0].params["curvature"], p.components[0].params["center"]
        for k in range(50):
            y = x - eta * a * (x - c)
            x = np.sign(y) * np.maximum(np.abs(y) - eta * 0.5, 0)
            assert np.max(np.abs(tr.iterates[k + 1] - x)) <= 1e-14


def test_traces_are_deterministic():
    p = make_logistic_instance(7, 5, 1.0, 4, L_target=10.0, regularizer=Regularizer("l1", lam=0.1))
    args = (p, DelaySchedule("random-bounded", 3, seed=8), np.ones(5), 0.01, 0.0, 500)
    a, b = run_piag(*args), run_piag(*args)
    assert a.F.tobytes() == b.F.tobytes()
    assert a.d_norm_sq.tobytes() == b.d_norm_sq.tobytes()
    assert a.x_final.tobytes() == b.x_final.tobytes()


def test_running_sum_drift_stays_small():
    p = make_logistic_instance(16, 5, 1.0, 4, L_target=10.0)
    t = init_table(p, np.ones(5))
    x = np.ones(5)
    sched = DelaySchedule("random-bounded", 8, 2)
    rng = np.random.default_rng(2)
    for k in range(3000):
        x, _, _ = piag_step(p, t, sched, x, 0.005, k, rng)
    assert t.resync() < 1e-10


def test_divergence_guard():
    p = make_quadratic_instance(3, 2, 1.0, 10.0, 0)
    ref = solve_reference(p)
    with pytest.raises(DivergenceError, match="unstable"):
        run_piag(p, DelaySchedule("full-refresh", 0), np.ones(2), 5.0, ref.F_floor, 1000)


def test_x0_outside_box_rejected():
    p = make_quadratic_instance(2, 2, 1.0, 2.0, 0, Regularizer("box-indicator", lower=0, upper=1))
    with pytest.raises(InputError):
        run_piag(p, DelaySchedule("full-refresh", 0), np.array([2.0, 0.5]), 0.1, 0.0, 10)


def test_trace_csv_round_trip(tmp_path):
    p = make_quadratic_instance(3, 2, 1.0, 4.0, 0)
    ref = solve_reference(p)
    tr = run_piag(p, DelaySchedule("random-bounded", 2, 1), np.ones(2), 0.05, ref.F_floor, 40)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,F_k,d_norm_sq,eta,max_staleness"
    assert len(lines) == tr.iterations + 2
    back = read_trace_csv(path, K=2)
    assert back.F.tobytes() == tr.F.tobytes()
    assert back.d_norm_sq.tobytes() == tr.d_norm_sq.tobytes()
    np.testing.assert_array_equal(back.max_staleness, tr.max_staleness)
    assert back.eta == tr.eta
