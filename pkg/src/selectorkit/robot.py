"""Three-wheel robot case study: nonholonomic integrator stabilization.

The model is xdot = g1(x) u1 + g2(x) u2 with g1 = (1, 0, -x2),
g2 = (0, 1, x1).  No smooth control Lyapunov function exists, so the
controller works with the marginal function

    F(x, theta) = x1^4 + x2^4 + |x3|^3 / (x1 cos t + x2 sin t + sqrt|x3|)^2

whose minimum over theta is the CLF V.  Gradients of F at the
near-minimizers form the disassembled subdifferential, a set-valued
map; the control is u = -(<zeta, g1>, <zeta, g2>) for a subgradient
zeta taken either from the closed-form branch expression or from a
measurable selector extracted from the subgradient SVF.

Simulations run zero-order-hold control at 10 ms with explicit Euler
substeps.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._threads import ordered_map
from .errors import InputError
from .selector import SelectorChain, eval_selector
from .setalg import BasicSet
from .svf import GridSpec, SampledSVF, symmetric_range_box


@dataclass(frozen=True)
class CLFConfig:
    """Discretization knobs for the marginal-function minimization."""

    theta_grid: int = 128
    refine_levels: int = 3
    denom_floor: float = 1e-6
    argmin_tol: float = 1e-4  # acceptance band is argmin_tol * (1 + V)

    def __post_init__(self):
        if self.denom_floor <= 0 or self.argmin_tol <= 0:
            raise InputError("denom_floor and argmin_tol must be positive")


DEFAULT_CLF = CLFConfig()


def _thetas(cfg: CLFConfig) -> np.ndarray:
    return np.linspace(0.0, 2.0 * np.pi, cfg.theta_grid, endpoint=False)


def marginal_value(x: Sequence[float], theta: float, cfg: CLFConfig = DEFAULT_CLF) -> float:
    """F(x, theta); +inf sentinel when the denominator degenerates."""
    return float(marginal_values(x, np.array([float(theta)]), cfg)[0])


def marginal_values(x, thetas: np.ndarray, cfg: CLFConfig = DEFAULT_CLF) -> np.ndarray:
    x1, x2, x3 = (float(c) for c in x)
    u = abs(x3)
    poly = x1**4 + x2**4
    if u == 0.0:
        # the |x3|^3 term vanishes identically
        return np.full_like(thetas, poly, dtype=float)
    d = x1 * np.cos(thetas) + x2 * np.sin(thetas) + np.sqrt(u)
    out = np.full_like(thetas, np.inf, dtype=float)
    ok = np.abs(d) >= cfg.denom_floor
    out[ok] = poly + u**3 / d[ok] ** 2
    return out


def clf_value(x, cfg: CLFConfig = DEFAULT_CLF) -> tuple[float, np.ndarray]:
    """V(x) = min_theta F(x, theta) and the near-minimizer grid angles."""
    thetas = _thetas(cfg)
    if all(float(c) == 0.0 for c in x):
        return 0.0, thetas
    vals = marginal_values(x, thetas, cfg)
    finite = np.isfinite(vals)
    if not finite.any():
        return np.inf, thetas[:0]
    best_i = int(np.argmin(vals))
    v_best = float(vals[best_i])
    theta_best = float(thetas[best_i])
    width = 2.0 * np.pi / cfg.theta_grid
    for _ in range(cfg.refine_levels):
        local = theta_best + np.linspace(-width, width, 9)
        lv = marginal_values(x, local, cfg)
        j = int(np.argmin(lv))
        if np.isfinite(lv[j]) and lv[j] < v_best:
            v_best, theta_best = float(lv[j]), float(local[j])
        width /= 4.0
    band = cfg.argmin_tol * (1.0 + v_best)
    minimizers = thetas[finite & (vals <= v_best + band)]
    # the refined minimizer may undercut every base-grid angle by more
    # than the band; it is a genuine argmin member either way
    theta_best = float(np.mod(theta_best, 2.0 * np.pi))
    if not np.any(np.isclose(minimizers, theta_best)):
        minimizers = np.sort(np.append(minimizers, theta_best))
    return v_best, minimizers


def _gradients_at(x, thetas: np.ndarray, cfg: CLFConfig) -> np.ndarray:
    """Analytic dF/dx at the given angles (rows), sentinel rows dropped."""
    x1, x2, x3 = (float(c) for c in x)
    u = abs(x3)
    s = np.sign(x3)
    p1, p2 = 4.0 * x1**3, 4.0 * x2**3
    if u == 0.0:
        g = np.zeros((len(thetas), 3))
        g[:, 0], g[:, 1] = p1, p2
        return _dedupe_rows(g)
    ct, st = np.cos(thetas), np.sin(thetas)
    d = x1 * ct + x2 * st + np.sqrt(u)
    ok = np.abs(d) >= cfg.denom_floor
    ct, st, d = ct[ok], st[ok], d[ok]
    g = np.empty((int(ok.sum()), 3))
    g[:, 0] = p1 - 2.0 * u**3 * ct / d**3
    g[:, 1] = p2 - 2.0 * u**3 * st / d**3
    g[:, 2] = s * (3.0 * u**2 / d**2 - u**2.5 / d**3)
    return _dedupe_rows(g)


def _dedupe_rows(g: np.ndarray) -> np.ndarray:
    seen = set()
    keep = []
    for i, row in enumerate(g):
        key = tuple(np.round(row, 12))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return g[keep]


def disassembled_subgradients(x, cfg: CLFConfig = DEFAULT_CLF) -> np.ndarray:
    """dF/dx at every near-minimizer theta; empty when all angles degenerate."""
    _, minimizers = clf_value(x, cfg)
    if len(minimizers) == 0:
        return np.empty((0, 3))
    return _gradients_at(x, minimizers, cfg)


def analytic_subgradient(x, cfg: CLFConfig = DEFAULT_CLF) -> np.ndarray:
    """The closed-form branch subgradient.

    Away from the x3 axis the minimizer is theta* = atan2(x2, x1) (it
    maximizes the squared denominator), giving the envelope gradient;
    on the axis the branch falls back to theta = 0.
    """
    x1, x2, _x3 = (float(c) for c in x)
    if x1 * x1 + x2 * x2 > cfg.denom_floor**2:
        theta = float(np.arctan2(x2, x1))
    else:
        theta = 0.0
    g = _gradients_at(x, np.array([theta]), cfg)
    if len(g) == 0:
        return np.zeros(3)
    return g[0]


def control_law(zeta, x) -> tuple[float, float]:
    """u = -(<zeta, g1>, <zeta, g2>) for the integrator's input fields."""
    z1, z2, z3 = (float(c) for c in zeta)
    x1, x2 = float(x[0]), float(x[1])
    return (-(z1 - x2 * z3), -(z2 + x1 * z3))


# ---------------------------------------------------------------------------
# subgradient SVF export


def export_svf(
    box_halfwidth: float = 2.0,
    resolution: Fraction | float = Fraction(1, 8),
    cfg: CLFConfig = DEFAULT_CLF,
    max_net: int = 12,
    range_pad: float = 2.0,
) -> SampledSVF:
    """Sampled SVF of the disassembled subdifferential over [-b, b]^3.

    `resolution` is the cell width.  Value nets are the subgradients at
    the near-minimizer angles, evenly thinned to max_net entries; tau
    combines the theta-refinement deviation with the neighbor-cell
    estimate.  Cells whose angles all degenerate are excluded and
    counted in the metadata.
    """
    from .rational import as_fraction

    b = as_fraction(box_halfwidth)
    h = as_fraction(resolution)
    n_axis = (2 * b) / h
    if n_axis.denominator != 1:
        raise InputError("resolution must divide the box width")
    n_axis = int(n_axis)
    grid = GridSpec(BasicSet.closed_box([-b] * 3, [b] * 3), (n_axis,) * 3)
    centers = grid.centers_array()

    full_nets = []
    excluded = []
    for i, g in enumerate(
        ordered_map(lambda c: disassembled_subgradients(c, cfg), centers)
    ):
        if len(g) == 0:
            excluded.append(i)
            full_nets.append(np.zeros((1, 3)))
            continue
        full_nets.append(g)
    mask = np.ones(len(centers), dtype=bool)
    mask[excluded] = False

    allv = np.concatenate([n for i, n in enumerate(full_nets) if mask[i]])
    range_map = symmetric_range_box(allv, pad=range_pad)

    # tau declares the pointwise net quality: the covering radius lost to
    # thinning, plus the deviation of the theta grid from a doubled one;
    # the cell-center decision convention is conservative and recorded
    # separately (the subdifferential jumps near the x3 axis, so no
    # constant bounds its spatial variation there)
    nets = []
    tau_thin = 0.0
    for i, g in enumerate(full_nets):
        kept, radius = _thin_net(g, max_net, range_map)
        nets.append(kept)
        if mask[i]:
            tau_thin = max(tau_thin, radius)
    svf = SampledSVF(grid, range_map, tuple(nets), 0.0, mask=mask)

    tau_theta = _theta_refinement_tau(svf, centers, cfg, max_net)
    tau = tau_thin + tau_theta
    spatial = _directed_spatial_tau(svf, grid, cfg)
    return SampledSVF(
        grid,
        range_map,
        tuple(nets),
        tau,
        meta={
            "excluded_cells": len(excluded),
            "tau_thin": tau_thin,
            "tau_theta": tau_theta,
            "spatial_deviation": spatial,
            "max_net": max_net,
            "theta_grid": cfg.theta_grid,
            "resolution": float(h),
        },
        mask=mask,
    )


def _thin_net(g: np.ndarray, max_net: int, range_map) -> tuple[np.ndarray, float]:
    """Evenly thin a net, returning the normalized covering radius lost."""
    if len(g) <= max_net:
        return g, 0.0
    idx = np.unique(np.linspace(0, len(g) - 1, max_net).round().astype(int))
    kept = g[idx]
    dropped = np.delete(g, idx, axis=0)
    kept_n = range_map.normalize_array(kept)
    drop_n = range_map.normalize_array(dropped)
    d = np.linalg.norm(drop_n[:, None, :] - kept_n[None, :, :], axis=-1)
    return kept, float(d.min(axis=1).max())


def _directed_spatial_tau(svf: SampledSVF, grid: GridSpec, cfg: CLFConfig) -> float:
    """Directed deviation of center nets into off-center value sets.

    The chain certificate needs every center-net point to stay close to
    F(x) across its own cell, which is the one-sided deviation: the
    other direction (F(x) reaching far from the net) is genuinely large
    where the subdifferential jumps from a circle to a point near the
    x3 axis, but never enters the certificate.
    """
    centers = grid.centers_array()
    w = np.array([float(c) for c in grid.widths()])
    stride = max(grid.n_cells // 256, 1)
    sampled = list(range(0, grid.n_cells, stride))
    # bias toward cells with set-valued nets, where variation concentrates
    sampled += [i for i in range(grid.n_cells) if svf.active(i) and len(svf.nets[i]) > 2][::4]
    corners = np.array(
        [[dx, dy, dz] for dx in (-0.5, 0.5) for dy in (-0.5, 0.5) for dz in (-0.5, 0.5)]
    )
    worst = 0.0
    for i in sorted(set(sampled)):
        if not svf.active(i):
            continue
        net_n = svf.range_map.normalize_array(svf.nets[i])
        for off in corners[::2]:
            x = centers[i] + off * w
            g = disassembled_subgradients(x, cfg)
            if len(g) == 0:
                continue
            g_n = svf.range_map.normalize_array(g)
            d = np.linalg.norm(net_n[:, None, :] - g_n[None, :, :], axis=-1)
            worst = max(worst, float(d.min(axis=1).max()))
    return worst


def _theta_refinement_tau(
    svf: SampledSVF, centers: np.ndarray, cfg: CLFConfig, max_net: int
) -> float:
    """Deviation of the declared nets from a doubled-theta-grid pass."""
    fine_cfg = CLFConfig(
        theta_grid=2 * cfg.theta_grid,
        refine_levels=cfg.refine_levels,
        denom_floor=cfg.denom_floor,
        argmin_tol=cfg.argmin_tol,
    )
    stride = max(len(centers) // 128, 1)
    worst = 0.0
    for i in range(0, len(centers), stride):
        if not svf.active(i):
            continue
        fine = disassembled_subgradients(centers[i], fine_cfg)
        if len(fine) == 0:
            continue
        coarse_n = svf.range_map.normalize_array(svf.nets[i])
        fine_n = svf.range_map.normalize_array(fine)
        d = np.linalg.norm(fine_n[:, None, :] - coarse_n[None, :, :], axis=-1)
        worst = max(worst, float(d.min(axis=1).max()))
    return worst


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class SimConfig:
    dt_control: float = 0.01
    dt_internal: float = 0.001
    T: float = 10.0
    x0: tuple[float, float, float] = (1.0, 1.0, 1.0)
    controller: str = "analytic"  # "analytic" | "selector"
    working_halfwidth: float = 2.0
    clf: CLFConfig = field(default_factory=CLFConfig)

    def __post_init__(self):
        n = round(self.dt_control / self.dt_internal)
        if abs(n * self.dt_internal - self.dt_control) > 1e-12:
            raise InputError("dt_internal must divide dt_control")
        if self.controller not in ("analytic", "selector"):
            raise InputError(f"unknown controller {self.controller!r}")


@dataclass
class SimResult:
    times: np.ndarray
    states: np.ndarray  # (N+1, 3)
    controls: np.ndarray  # (N+1, 2)
    clf: np.ndarray  # V(x(t))
    control_variation: float  # total variation of u, 1-norm
    witness_hits: int  # selector evals answered Undefined(inside witness)
    truncated: bool
    config: SimConfig

    def metadata(self) -> dict:
        return {
            "controller": self.config.controller,
            "dt_control": self.config.dt_control,
            "dt_internal": self.config.dt_internal,
            "T": self.config.T,
            "x0": list(self.config.x0),
            "denom_floor": self.config.clf.denom_floor,
            "argmin_tol": self.config.clf.argmin_tol,
            "theta_grid": self.config.clf.theta_grid,
            "control_total_variation": self.control_variation,
            "witness_hits": self.witness_hits,
            "truncated": self.truncated,
            "terminal_state": [float(c) for c in self.states[-1]],
            "terminal_sup_norm": float(np.abs(self.states[-1]).max()),
            "terminal_clf": float(self.clf[-1]),
        }


def simulate(cfg: SimConfig, chain: SelectorChain | None = None) -> SimResult:
    """Zero-order-hold closed loop on the nonholonomic integrator.

    The selector controller evaluates the chain at each sampling
    instant and holds the previous control on Undefined answers
    (witness hits).  States escaping the working box truncate the run.
    """
    if cfg.controller == "selector" and chain is None:
        raise InputError("selector controller needs an extracted chain")
    n_steps = round(cfg.T / cfg.dt_control)
    substeps = round(cfg.dt_control / cfg.dt_internal)

    x = np.array(cfg.x0, dtype=float)
    times = [0.0]
    states = [x.copy()]
    controls = []
    vs = [clf_value(x, cfg.clf)[0]]
    u = (0.0, 0.0)
    witness_hits = 0
    truncated = False

    for k in range(n_steps):
        if cfg.controller == "analytic":
            zeta = analytic_subgradient(x, cfg.clf)
            u = control_law(zeta, x)
        else:
            res = eval_selector(chain, [float(c) for c in x])
            if res.defined:
                u = control_law(res.as_floats(), x)
            else:
                witness_hits += 1  # hold previous control
        controls.append(u)
        for _ in range(substeps):
            x1, x2, _ = x
            x = x + cfg.dt_internal * np.array(
                [u[0], u[1], -x2 * u[0] + x1 * u[1]]
            )
        times.append((k + 1) * cfg.dt_control)
        states.append(x.copy())
        vs.append(clf_value(x, cfg.clf)[0])
        if np.abs(x).max() > cfg.working_halfwidth:
            truncated = True
            break

    controls.append(u)
    arr_u = np.array(controls)
    tv = float(np.abs(np.diff(arr_u, axis=0)).sum())
    return SimResult(
        times=np.array(times),
        states=np.array(states),
        controls=arr_u,
        clf=np.array(vs),
        control_variation=tv,
        witness_hits=witness_hits,
        truncated=truncated,
        config=cfg,
    )


def sim_csv(result: SimResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x1", "x2", "x3", "u1", "u2", "V"])
    for j, t in enumerate(result.times):
        w.writerow(
            [repr(float(t))]
            + [repr(float(c)) for c in result.states[j]]
            + [repr(float(c)) for c in result.controls[j]]
            + [repr(float(result.clf[j]))]
        )
    return buf.getvalue()


def gnuplot_script(csv_name: str, out_prefix: str) -> str:
    """Companion plot script for the simulation CSV."""
    return "\n".join(
        [
            "set datafile separator ','",
            "set key autotitle columnhead",
            f"set output '{out_prefix}_states.png'",
            "set terminal pngcairo size 900,600",
            f"plot '{csv_name}' using 1:2 with lines, '' using 1:3 with lines, "
            "'' using 1:4 with lines",
            f"set output '{out_prefix}_controls.png'",
            f"plot '{csv_name}' using 1:5 with lines, '' using 1:6 with lines",
            f"set output '{out_prefix}_clf.png'",
            f"plot '{csv_name}' using 1:7 with lines",
        ]
    )
