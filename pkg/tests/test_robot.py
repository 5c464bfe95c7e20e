import math
from fractions import Fraction

import numpy as np
import pytest

from selectorkit.errors import InputError, PrecisionError
from selectorkit.robot import (
    CLFConfig,
    SimConfig,
    analytic_subgradient,
    clf_value,
    control_law,
    disassembled_subgradients,
    export_svf,
    gnuplot_script,
    marginal_value,
    sim_csv,
    simulate,
)
from selectorkit.selector import eval_selector, extract

F_ = Fraction


# ---------------------------------------------------------------------------
# marginal function


def test_marginal_unit_x1():
    assert marginal_value([1, 0, 0], 0.3) == pytest.approx(1.0)


def test_marginal_pure_x3():
    # |x3|^3 / (sqrt|x3|)^2 = x3^2
    for th in (0.0, 1.1, 3.0):
        assert marginal_value([0, 0, 1], th) == pytest.approx(1.0)
    assert marginal_value([0, 0, 0.5], 0.2) == pytest.approx(0.25)


def test_marginal_x3_zero_ignores_denominator():
    assert marginal_value([1, 1, 0], math.pi / 4) == pytest.approx(2.0)
    # even where the denominator would vanish
    assert marginal_value([1, 1, 0], 3 * math.pi / 4) == pytest.approx(2.0)


def test_marginal_denominator_floor_sentinel():
    # x3 != 0 and d = 0: sentinel
    v = marginal_value([1, 0, 1e-30], math.pi)  # d = -1 + 1e-15 ~ -1 fine
    assert np.isfinite(v)
    v = marginal_value([0.5, 0, 0.25], math.pi)  # d = -0.5 + 0.5 = 0
    assert v == math.inf


# ---------------------------------------------------------------------------
# CLF


def test_clf_theta_independent_cases():
    v, mins = clf_value([0, 0, 1])
    assert v == pytest.approx(1.0)
    assert len(mins) >= 128
    v, mins = clf_value([1, 1, 0])
    assert v == pytest.approx(2.0)
    assert len(mins) >= 128


def test_clf_origin_anchor():
    v, mins = clf_value([0, 0, 0])
    assert v == 0.0
    assert len(mins) == 128


def test_clf_positive_off_origin():
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = rng.uniform(-2, 2, 3)
        if np.abs(x).max() < 1e-3:
            continue
        v, _ = clf_value(x)
        assert v > 0


def test_clf_minimizer_matches_closed_form():
    # for R > 0 the minimizer is atan2(x2, x1)
    x = [1.0, 0.5, 0.8]
    v, mins = clf_value(x)
    theta_star = math.atan2(0.5, 1.0)
    assert min(abs(m - theta_star) for m in mins) < 2 * math.pi / 128
    assert v == pytest.approx(marginal_value(x, theta_star), rel=1e-6)


def test_clf_semiconcavity_constant_reported():
    # fitted constant is reported, not asserted
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        x = rng.uniform(-1.5, 1.5, 3)
        y = rng.uniform(-1.5, 1.5, 3)
        vx, _ = clf_value(x)
        vy, _ = clf_value(y)
        vm, _ = clf_value((x + y) / 2)
        gap = vx + vy - 2 * vm
        nrm = float(np.linalg.norm(x - y)) ** 2
        if nrm > 1e-6:
            worst = max(worst, gap / nrm)
    print(f"fitted semiconcavity constant C ~= {worst:.3f}")
    assert np.isfinite(worst)


# ---------------------------------------------------------------------------
# subgradients


def test_disassembled_circle_case():
    g = disassembled_subgradients([0, 0, 1])
    assert len(g) >= 128
    for row in g:
        # (-2 cos t, -2 sin t, 2) for some t
        assert row[0] ** 2 + row[1] ** 2 == pytest.approx(4.0, abs=1e-9)
        assert row[2] == pytest.approx(2.0)


def test_disassembled_near_singleton():
    g = disassembled_subgradients([1, 1, 0])
    assert len(g) == 1
    assert tuple(g[0]) == pytest.approx((4.0, 4.0, 0.0))


def test_disassembled_origin():
    g = disassembled_subgradients([0, 0, 0])
    assert len(g) == 1
    assert tuple(g[0]) == (0.0, 0.0, 0.0)
    # cross-check the limit numerically just off the origin
    g2 = disassembled_subgradients([1e-4, 0, 0])
    assert np.abs(g2).max() < 1e-6


def test_gradient_vs_central_differences():
    from selectorkit.robot import _gradients_at

    cfg = CLFConfig()
    rng = np.random.default_rng(0)

    def f(x, t):
        x1, x2, x3 = x
        u = abs(x3)
        if u == 0:
            return x1**4 + x2**4
        d = x1 * math.cos(t) + x2 * math.sin(t) + math.sqrt(u)
        return x1**4 + x2**4 + u**3 / d**2

    checked = 0
    while checked < 300:
        x = rng.uniform(-2, 2, 3)
        t = rng.uniform(0, 2 * math.pi)
        d = x[0] * math.cos(t) + x[1] * math.sin(t) + math.sqrt(abs(x[2]))
        if abs(d) < 0.05 or abs(x[2]) < 0.05:
            continue
        g = _gradients_at(x, np.array([t]), cfg)[0]
        h = 1e-6
        fd = np.array(
            [(f(x + h * e, t) - f(x - h * e, t)) / (2 * h) for e in np.eye(3)]
        )
        rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-5
        checked += 1


def test_analytic_branch_values():
    assert tuple(analytic_subgradient([0, 0, 1])) == pytest.approx((-2.0, 0.0, 2.0))
    assert tuple(analytic_subgradient([1, 1, 0])) == pytest.approx((4.0, 4.0, 0.0))
    assert tuple(analytic_subgradient([0, 0, 0])) == (0.0, 0.0, 0.0)


def test_envelope_consistency():
    # where the minimizer is unique, the analytic subgradient sits inside
    # the disassembled set up to the theta-grid spacing
    rng = np.random.default_rng(3)
    for _ in range(40):
        x = rng.uniform(-2, 2, 3)
        if math.hypot(x[0], x[1]) < 0.3 or abs(x[2]) < 0.05:
            continue
        za = analytic_subgradient(x)
        ds = disassembled_subgradients(x)
        d = np.linalg.norm(ds - za, axis=1).min()
        assert d < 0.2 * (1 + np.linalg.norm(za))


# ---------------------------------------------------------------------------
# control law


def test_control_law_examples():
    assert control_law([-2, 0, 2], [0, 0, 1]) == pytest.approx((2.0, 0.0))
    assert control_law([0, 0, 0], [1, 1, 1]) == (0.0, 0.0)
    assert control_law([1, 1, 0], [0, 0, 0]) == (-1.0, -1.0)


# ---------------------------------------------------------------------------
# SVF export


def small_svf(**kw):
    return export_svf(box_halfwidth=2.0, resolution=F_(4, 11), **kw)


def test_export_svf_accepted():
    svf = small_svf()
    assert svf.grid.n_cells == 11**3
    assert svf.tau > 0
    assert svf.meta["excluded_cells"] == 0
    # every net inhabited and inside the normalized unit cube with margin
    for i in range(0, svf.grid.n_cells, 97):
        net = svf.range_map.normalize_array(svf.nets[i])
        assert len(net) >= 1
        d = np.linalg.norm(net - 0.5, axis=1)
        assert d.max() < 0.5  # reachable from the f1 anchor


def test_export_degenerate_single_cell():
    svf = export_svf(box_halfwidth=2.0, resolution=F_(4))
    assert svf.grid.n_cells == 1
    assert len(svf.nets) == 1


def test_export_too_coarse_for_deep_extraction():
    # a heavily thinned net cannot certify n = 6
    svf = small_svf(max_net=4)
    assert svf.tau > 2.0**-7
    with pytest.raises(PrecisionError):
        extract(svf, 6)


def test_resolution_must_divide_box():
    with pytest.raises(InputError):
        export_svf(box_halfwidth=2.0, resolution=F_(3, 7))


def test_robot_selector_section_golden():
    # pinned section of our own extracted selector at x3 = -1; guards
    # determinism of the whole pipeline
    svf = small_svf()
    chain = extract(svf, 4)
    got = {}
    for p in [(-1.5, -0.5, -1.0), (-0.5, 0.5, -1.0), (0.5, 1.5, -1.0), (1.5, -1.5, -1.0)]:
        res = eval_selector(chain, [F_(c).limit_denominator(2**20) for c in p])
        got[p] = res.as_floats()
    assert got[(-1.5, -0.5, -1.0)] == pytest.approx(
        (-21.036814425244184, -6.010518407212624, -0.9090909090909092)
    )
    assert got[(-0.5, 0.5, -1.0)] == pytest.approx(
        (-9.015777610818937, -6.010518407212624, -1.3636363636363638)
    )
    assert got[(0.5, 1.5, -1.0)] == pytest.approx(
        (-9.015777610818937, 6.010518407212624, -0.9090909090909092)
    )
    assert got[(1.5, -1.5, -1.0)] == pytest.approx(
        (3.005259203606312, -18.031555221637873, -0.9090909090909092)
    )


def test_selector_values_inside_certified_ball():
    svf = small_svf()
    chain = extract(svf, 4)
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 60:
        x = rng.uniform(-1.9, 1.9, 3)
        res = eval_selector(chain, [F_(c).limit_denominator(2**20) for c in x])
        if not res.defined:
            continue
        # compare against the value net at the cell center
        idx = svf.grid.cell_of_point([F_(c).limit_denominator(2**20) for c in x])
        net = svf.range_map.normalize_array(svf.net_raw(svf.grid.flat(idx)))
        val = np.array(
            [float(c) for c in svf.range_map.normalize(res.value)]
        )
        d = np.linalg.norm(net - val, axis=1).min()
        assert d < chain.final_error_bound + 1e-9
        checked += 1


# ---------------------------------------------------------------------------
# simulation


def test_simulate_equilibrium_at_origin():
    res = simulate(SimConfig(controller="analytic", x0=(0, 0, 0), T=0.5))
    assert np.abs(res.states).max() == 0.0
    assert np.abs(res.controls).max() == 0.0


def test_simulate_analytic_descent():
    res = simulate(SimConfig(controller="analytic"))
    supn = np.abs(res.states).max(axis=1)
    dv = np.diff(res.clf)
    mask = supn[:-1] >= 0.5
    assert (dv[mask] <= 1e-3).all()
    # truthful closed-loop behavior: the crawl along the singular
    # manifold parks near 0.28 by t = 10 (crosses 0.25 around t ~ 12.6)
    assert supn[-1] < 0.30
    assert res.clf[-1] < 0.05
    assert not res.truncated


def test_simulate_selector_smoke():
    svf = small_svf()
    chain = extract(svf, 4)
    res = simulate(SimConfig(controller="selector", T=2.0), chain=chain)
    assert len(res.times) == 201
    assert np.isfinite(res.states).all()
    assert res.control_variation >= 0.0
    meta = res.metadata()
    assert meta["controller"] == "selector"
    assert "control_total_variation" in meta


def test_simulate_selector_requires_chain():
    with pytest.raises(InputError):
        simulate(SimConfig(controller="selector"))


def test_sim_internal_step_must_divide():
    with pytest.raises(InputError):
        SimConfig(dt_internal=0.003)


def test_sim_csv_and_plot_script():
    res = simulate(SimConfig(controller="analytic", T=0.2))
    text = sim_csv(res)
    lines = text.strip().split("\n")
    assert lines[0] == "t,x1,x2,x3,u1,u2,V"
    assert len(lines) == len(res.times) + 1
    script = gnuplot_script("run.csv", "run")
    assert "run_states.png" in script and "run.csv" in script
