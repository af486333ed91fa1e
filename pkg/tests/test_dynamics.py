"""Tests for the closed-form surfaces and toy descent simulators."""

import numpy as np
import pytest
from scipy.special import expit

from mlgssl.dynamics import (
    SURFACE_COLUMNS,
    SURFACE_KINDS,
    export_surface,
    linear_gradient,
    lsw_gradient_magnitudes,
    quadratic_form_residual,
    simulate_contraction,
    simulate_linear_dynamics,
    sl_gradient_magnitude,
    surface_grid,
    write_contraction_csv,
    write_linear_csv,
)


# ---------------------------------------------------------------- surfaces


def test_sl_magnitude_balanced_point():
    # s_pos = s_neg, m = 0, gamma = 1: sigma(0) = 1/2.
    assert sl_gradient_magnitude(0.3, 0.3, m=0.0, gamma=1.0) == pytest.approx(0.5, abs=1e-15)


def test_sl_magnitude_closed_form_matches_direct_sigmoid():
    rng = np.random.default_rng(0)
    sp = rng.uniform(0.0, 1.0, size=50)
    sn = rng.uniform(0.0, 1.0, size=50)
    got = sl_gradient_magnitude(sp, sn, m=0.2, gamma=3.0)
    want = 3.0 * expit(3.0 * (sn - sp + 0.2))
    np.testing.assert_allclose(got, want, rtol=1e-15)


def test_sl_magnitude_saturated_tail_vanishes():
    # s_pos - s_neg far beyond the margin: logistic tail ~ exp(-gamma * 0.9).
    val = sl_gradient_magnitude(1.0, 0.0, m=0.1, gamma=40.0)
    assert val < 1e-12


def test_sl_plateau_penalizes_both_points_nearly_equally():
    # Two points deep in the high-gradient plateau at m = 0.25 draw
    # near-equal gradient; the agreement tightens as gamma grows.
    b1 = (0.8, 0.8)
    b2 = (0.6, 0.5)
    for gamma, bound in ((8.0, 0.15), (30.0, 0.02)):
        v1 = float(sl_gradient_magnitude(*b1, m=0.25, gamma=gamma))
        v2 = float(sl_gradient_magnitude(*b2, m=0.25, gamma=gamma))
        assert abs(v1 - v2) / max(v1, v2) < bound


def test_lsw_magnitudes_frozen_point():
    mag_pos, mag_neg = lsw_gradient_magnitudes(0.8, 0.8, m=0.15, gamma=1.5)
    assert float(mag_pos) == pytest.approx(0.43297060211079536, rel=1e-13)
    assert float(mag_neg) == pytest.approx(1.7318824084431814, rel=1e-13)
    # ratio is s_neg / (1 - s_pos) exactly: 0.8 / 0.2.
    assert float(mag_neg / mag_pos) == pytest.approx(4.0, rel=1e-13)


def test_lsw_magnitudes_vanish_on_their_optimum_edges():
    sn_axis = np.linspace(0.0, 1.0, 11)
    _, mag_neg = lsw_gradient_magnitudes(np.full(11, 0.4), np.zeros(11), m=0.2, gamma=2.0)
    np.testing.assert_array_equal(mag_neg, 0.0)
    mag_pos, _ = lsw_gradient_magnitudes(np.ones(11), sn_axis, m=0.2, gamma=2.0)
    np.testing.assert_array_equal(mag_pos, 0.0)


def test_lsw_prioritizes_large_negative_score():
    # At (0.8, 0.8) the negative pull dominates the positive one.
    mag_pos, mag_neg = lsw_gradient_magnitudes(0.8, 0.8, m=0.15, gamma=1.5)
    assert mag_neg > mag_pos


def test_surface_grid_shapes_and_closed_form():
    for kind in SURFACE_KINDS:
        sp, sn, val = surface_grid(kind, m=0.15, gamma=1.5, resolution=7)
        assert sp.shape == (7,) and sn.shape == (7,) and val.shape == (7, 7)
        np.testing.assert_allclose(sp, np.linspace(0.0, 1.0, 7), rtol=0, atol=0)
    sp, sn, val = surface_grid("sl", m=0.0, gamma=1.0, resolution=3)
    # center of the 3x3 grid: s_pos = s_neg = 0.5 -> 0.5.
    assert val[1, 1] == pytest.approx(0.5, abs=1e-15)


def test_surface_grid_orientation():
    # values[i, j] = f(s_pos[i], s_neg[j]): the lsw_neg surface is zero on
    # the s_neg = 0 column, not the s_pos = 0 row.
    _, _, val = surface_grid("lsw_neg", m=0.15, gamma=1.5, resolution=5)
    np.testing.assert_array_equal(val[:, 0], 0.0)
    assert np.all(val[0, 1:] > 0.0)
    _, _, vpos = surface_grid("lsw_pos", m=0.15, gamma=1.5, resolution=5)
    np.testing.assert_array_equal(vpos[-1, :], 0.0)


def test_surface_grid_validation():
    with pytest.raises(ValueError, match="kind"):
        surface_grid("nope", m=0.1, gamma=1.0, resolution=3)
    with pytest.raises(ValueError, match="resolution"):
        surface_grid("sl", m=0.1, gamma=1.0, resolution=1)


def test_export_surface_round_trip(tmp_path):
    path = tmp_path / "sl.csv"
    export_surface("sl", m=0.0, gamma=1.0, resolution=3, path=path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == SURFACE_COLUMNS
    assert len(lines) == 1 + 9
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    # s_pos is the outer loop.
    np.testing.assert_allclose(rows[:3, 0], 0.0, atol=0)
    np.testing.assert_allclose(rows[:, 1], np.tile([0.0, 0.5, 1.0], 3), atol=0)
    # values round-trip exactly through repr and match re-evaluation.
    want = sl_gradient_magnitude(rows[:, 0], rows[:, 1], m=0.0, gamma=1.0)
    np.testing.assert_array_equal(rows[:, 2], want)
    assert rows[4, 2] == 0.5


def test_export_surface_lsw_neg_corner(tmp_path):
    path = tmp_path / "neg.csv"
    export_surface("lsw_neg", m=0.15, gamma=1.5, resolution=3, path=path)
    rows = [ln.split(",") for ln in path.read_text(encoding="utf-8").splitlines()[1:]]
    corner = [r for r in rows if float(r[0]) == 1.0 and float(r[1]) == 0.0]
    assert len(corner) == 1 and float(corner[0][2]) == 0.0


# ------------------------------------------------------- quadratic identity


def test_quadratic_residual_hand_case():
    # per-level Delta'' = 0.09 + 0.09 - 0.045 = 0.135; both routes sum to 0.54.
    sp = np.full(4, 0.7)
    sn = np.full(4, 0.3)
    assert float(quadratic_form_residual(sp, sn, m=0.15)) < 1e-15
    gated = (np.maximum(sn + 0.15, 0) * (sn - 0.15)
             - np.maximum(1.15 - sp, 0) * (sp - 0.85)).sum()
    assert gated == pytest.approx(0.54, abs=1e-15)


def test_quadratic_residual_ideal_point():
    # s_pos = 1, s_neg = 0: both routes give -8 m^2.
    for m in (0.1, 0.15, 0.3):
        sp, sn = np.ones(4), np.zeros(4)
        assert float(quadratic_form_residual(sp, sn, m=m)) < 1e-15
        gated = (np.maximum(sn + m, 0) * (sn - m)
                 - np.maximum(1 + m - sp, 0) * (sp - (1 - m))).sum()
        assert gated == pytest.approx(-8 * m ** 2, abs=1e-15)


def test_quadratic_residual_random_sweep():
    rng = np.random.default_rng(7)
    sp = rng.uniform(0.0, 1.0, size=(10_000, 4))
    sn = rng.uniform(0.0, 1.0, size=(10_000, 4))
    for m in (0.10, 0.15, 0.20, 0.25, 0.30):
        res = quadratic_form_residual(sp, sn, m=m)
        assert res.shape == (10_000,)
        assert float(res.max()) < 1e-12


# ------------------------------------------------------------- contraction


def test_contraction_frozen_first_factor():
    run = simulate_contraction(np.full(8, 0.5), m=0.15, gamma=1.5, eta=0.1, steps=5)
    # Z_0 = 8 * 0.25 - 8 * 0.15^2 = 1.82.
    assert run.c[0] == pytest.approx(0.7183678488459724, rel=1e-14)


def test_contraction_matches_scalar_recurrence():
    # With all coordinates equal, the 8-dim run reduces to a scalar recurrence
    # computed here without the simulator.
    m, gamma, eta = 0.15, 1.5, 0.1
    run = simulate_contraction(np.full(8, 0.5), m=m, gamma=gamma, eta=eta, steps=50)
    e = 0.5
    for t in range(50):
        c = 1.0 - 2.0 * eta * gamma * expit(gamma * (8.0 * e * e - 8.0 * m * m))
        assert run.c[t] == pytest.approx(c, rel=1e-13)
        e *= c
        np.testing.assert_allclose(run.e[t + 1], e, rtol=1e-12)


def test_contraction_ratios_equal_across_coordinates():
    rng = np.random.default_rng(3)
    e0 = rng.uniform(0.05, 1.0, size=8)
    run = simulate_contraction(e0, m=0.2, gamma=2.0, eta=0.2, steps=200)
    for t in range(run.steps):
        r = run.ratios[t]
        assert np.all(np.isfinite(r))
        assert float(r.max() - r.min()) < 1e-10
        assert abs(float(r[0]) - float(run.c[t])) < 1e-10


def test_contraction_squared_distance_recurrence():
    run = simulate_contraction(np.linspace(0.1, 0.8, 8), m=0.15, gamma=1.5,
                               eta=0.3, steps=100)
    assert np.all(run.c > 0.0) and np.all(run.c < 1.0)
    np.testing.assert_allclose(run.d[1:], run.c ** 2 * run.d[:-1], rtol=1e-10)
    assert np.all(np.diff(run.d) < 0.0)


def test_contraction_reaches_tolerance():
    run = simulate_contraction(np.full(8, 0.9), m=0.15, gamma=1.5, eta=0.3,
                               steps=10_000, stop_tol=1e-6)
    assert run.d[-1] < 1e-6
    assert run.steps < 10_000


def test_contraction_zero_start_is_fixed_point():
    run = simulate_contraction(np.zeros(8), m=0.15, gamma=1.5, eta=0.1, steps=3)
    np.testing.assert_array_equal(run.e, np.zeros((4, 8)))
    assert np.all(np.isnan(run.ratios))


def test_contraction_validation():
    with pytest.raises(ValueError, match="shape"):
        simulate_contraction(np.zeros(7), m=0.1, gamma=1.0, eta=0.1, steps=1)
    with pytest.raises(ValueError, match="finite"):
        simulate_contraction(np.full(8, np.nan), m=0.1, gamma=1.0, eta=0.1, steps=1)
    with pytest.raises(ValueError, match="gamma"):
        simulate_contraction(np.zeros(8), m=0.1, gamma=0.0, eta=0.1, steps=1)
    with pytest.raises(ValueError, match="eta"):
        simulate_contraction(np.zeros(8), m=0.1, gamma=1.0, eta=0.5, steps=1)
    with pytest.raises(ValueError, match="eta"):
        simulate_contraction(np.zeros(8), m=0.1, gamma=1.0, eta=0.0, steps=1)
    with pytest.raises(ValueError, match="steps"):
        simulate_contraction(np.zeros(8), m=0.1, gamma=1.0, eta=0.1, steps=-1)


def test_contraction_random_property_sweep():
    # algebraic invariants hold for any admissible (e0, m, gamma, eta) draw.
    rng = np.random.default_rng(11)
    for _ in range(100):
        e0 = rng.uniform(0.0, 1.0, size=8)
        m = rng.uniform(0.05, 0.45)
        gamma = rng.uniform(0.5, 4.0)
        eta = rng.uniform(0.1, 0.9) / (2.0 * gamma)
        run = simulate_contraction(e0, m=m, gamma=gamma, eta=eta, steps=300)
        assert np.all((run.c > 0.0) & (run.c < 1.0))
        assert np.all(np.diff(run.d) < 0.0)
        np.testing.assert_allclose(run.d[1:], run.c ** 2 * run.d[:-1], rtol=1e-10)
        finite = np.isfinite(run.ratios)
        spread = np.where(finite, run.ratios, run.c[:, None]) - run.c[:, None]
        assert float(np.abs(spread).max()) < 1e-10


def test_contraction_random_starts_reach_tolerance():
    # at moderate (m, gamma) the asymptotic factor stays well below one,
    # so every start lands under 1e-6 within the step budget.
    rng = np.random.default_rng(12)
    for _ in range(20):
        e0 = rng.uniform(0.0, 1.0, size=8)
        eta = rng.uniform(0.1, 0.9) / 3.0
        run = simulate_contraction(e0, m=0.15, gamma=1.5, eta=eta,
                                   steps=10_000, stop_tol=1e-6)
        assert run.d[-1] < 1e-6


# ---------------------------------------------------------- linear dynamics


def test_linear_gradient_direction_is_state_independent():
    rng = np.random.default_rng(5)
    beta = np.array([1.0, 2.0, 0.5, 1.5])
    ref = np.concatenate([beta, beta])
    ref = ref / np.linalg.norm(ref)
    for _ in range(100):
        g = linear_gradient(rng.uniform(0.0, 1.0, size=8), beta, m=0.15, gamma=1.5)
        np.testing.assert_allclose(g / np.linalg.norm(g), ref, atol=1e-12)


def test_linear_gradient_closed_form():
    beta = np.array([1.0, 1.0, 1.0, 1.0])
    e = np.zeros(8)
    e[0] = 1.0
    g = linear_gradient(e, beta, m=0.15, gamma=1.5)
    # S = (e1 + e5 - 1 + m) + 3 * (-1 + m) = 0.15 - 2.55 = -2.4
    want = 1.5 * expit(1.5 * -2.4) * np.ones(8)
    np.testing.assert_allclose(g, want, rtol=1e-14)


def test_linear_gradient_validation():
    with pytest.raises(ValueError):
        linear_gradient(np.zeros(7), np.ones(4), m=0.1, gamma=1.0)
    with pytest.raises(ValueError):
        linear_gradient(np.zeros(8), np.ones(3), m=0.1, gamma=1.0)


def test_linear_counterexample_breaks_collinearity():
    # e0 = [1,0,...,0] is not collinear with [beta; beta]; one step turns on
    # the other coordinates, so e1 is no scalar multiple of e0.
    e0 = np.zeros(8)
    e0[0] = 1.0
    run = simulate_linear_dynamics(e0, np.ones(4), m=0.15, gamma=1.5, eta=0.1, steps=3)
    assert run.e[1][4] != 0.0
    assert run.angles[0] > 1e-3
    cos = np.dot(run.e[1], run.e[0]) / (np.linalg.norm(run.e[1]) * np.linalg.norm(run.e[0]))
    assert 1.0 - abs(cos) > 1e-6


def test_linear_zero_beta_never_moves():
    run = simulate_linear_dynamics(np.full(8, 0.4), np.zeros(4), m=0.15,
                                   gamma=1.5, eta=0.1, steps=5)
    np.testing.assert_array_equal(run.e, np.full((6, 8), 0.4))
    assert np.all(run.angles == 0.0)
    np.testing.assert_array_equal(run.direction, np.zeros(8))


def test_linear_collinear_start_stays_collinear():
    # Starting on the gradient ray, steps only rescale the state.
    beta = np.array([1.0, 2.0, 0.5, 1.5])
    e0 = np.concatenate([beta, beta])
    run = simulate_linear_dynamics(e0, beta, m=0.15, gamma=1.5, eta=0.01, steps=4)
    assert np.all(run.angles < 1e-9)


def test_linear_validation():
    with pytest.raises(ValueError, match="shape"):
        simulate_linear_dynamics(np.zeros(5), np.ones(4), m=0.1, gamma=1.0,
                                 eta=0.1, steps=1)
    with pytest.raises(ValueError, match="positive"):
        simulate_linear_dynamics(np.zeros(8), np.ones(4), m=0.1, gamma=1.0,
                                 eta=0.0, steps=1)


# ------------------------------------------------------------- CSV writers


def test_contraction_csv_format(tmp_path):
    run = simulate_contraction(np.full(8, 0.5), m=0.15, gamma=1.5, eta=0.1, steps=3)
    path = tmp_path / "run.csv"
    write_contraction_csv(run, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "step," + ",".join(f"e{i}" for i in range(1, 9)) + ",d,c"
    assert len(lines) == 1 + 4
    first = lines[1].split(",")
    assert first[0] == "0"
    assert [float(x) for x in first[1:9]] == [0.5] * 8
    assert float(first[9]) == 2.0
    assert float(first[10]) == pytest.approx(0.7183678488459724, rel=1e-14)
    assert lines[-1].split(",")[10] == ""


def test_linear_csv_format(tmp_path):
    e0 = np.zeros(8)
    e0[0] = 1.0
    run = simulate_linear_dynamics(e0, np.ones(4), m=0.15, gamma=1.5, eta=0.1, steps=2)
    path = tmp_path / "lin.csv"
    write_linear_csv(run, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "step," + ",".join(f"e{i}" for i in range(1, 9)) + ",angle_to_prev"
    assert len(lines) == 1 + 3
    assert lines[1].split(",")[9] == ""
    assert float(lines[2].split(",")[9]) == pytest.approx(run.angles[0], rel=1e-15)
