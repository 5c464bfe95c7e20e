"""Constructive measurable-selector extraction to precision 2**-n.

The extractor builds piecewise-constant approximants f_2 .. f_n.  At
level k a regular mesh of pitch 2**-(k+1) is laid over the normalized
range; a point x keeps mesh value r when r is within 2**-k of F(x) and
within 2**-(k-1) of the previous approximant, and ties go to the
lowest mesh index via the countable reduction in row-major order.

Two engines share this logic.  The exact engine handles cellwise SVFs
with rational arithmetic end to end; the grid engine handles sampled
SVFs on their cell grid with declared slack tau folded into every
certificate (acceptance threshold 2**-k + 2*tau, certified error
2**-k + 3*tau).

The initial approximant is the real-space zero vector expressed in
normalized coordinates.  Its feasibility at the first constructed
level (every value set must come within 1/2 of it) is not guaranteed
by the construction and is checked at runtime; failures abort with the
uncovered region.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .domain import make_witness
from .errors import CoverageError, InputError, PrecisionError
from .rational import as_fraction, rational_from_json, rational_to_json
from .setalg import (
    BasicSet,
    GeneralizedBasicSet,
    SetSequence,
    gbs_from_json,
    gbs_to_json,
)
from .svf import (
    CellwiseSVF,
    GridSpec,
    RepresentableSVF,
    SampledSVF,
    cellwise_svf_from_json,
    cellwise_svf_to_json,
    grid_plane_witness,
)


# ---------------------------------------------------------------------------
# mesh


def regular_mesh(k: int, beta: int) -> list[tuple[Fraction, ...]]:
    """All points of pitch 2**-(k+1) in [0,1]**beta, lexicographic."""
    if k < 2:
        raise InputError("mesh level must be at least 2")
    if beta < 1:
        raise InputError("range dimension must be positive")
    pitch = Fraction(1, 2 ** (k + 1))
    n = 2 ** (k + 1) + 1
    axis = [pitch * i for i in range(n)]
    out: list[tuple[Fraction, ...]] = []

    def rec(prefix):
        if len(prefix) == beta:
            out.append(tuple(prefix))
            return
        for v in axis:
            rec(prefix + [v])

    rec([])
    return out


def mesh_pitch(k: int) -> Fraction:
    return Fraction(1, 2 ** (k + 1))


# ---------------------------------------------------------------------------
# chain data


@dataclass(frozen=True)
class StepCertificate:
    level: int
    mesh_pitch: Fraction
    error_bound: Fraction  # mesh part, 2**-k
    slack: float  # sampled slack folded into the bound (0 exact)
    step_gap: Fraction  # |f_k - f_{k-1}| bound, 2**-(k-1)
    witness_budget: Fraction
    n_pieces: int
    dom_measure: Fraction


@dataclass(frozen=True)
class ExactStep:
    """Approximant as disjoint generalized sets with mesh values."""

    level: int
    pieces: tuple[tuple[GeneralizedBasicSet, tuple[Fraction, ...]], ...]
    certificate: StepCertificate

    def value_at(self, x) -> tuple[Fraction, ...] | None:
        for q, r in self.pieces:
            if q.contains(x):
                return r
        return None

    def carrier(self, dim: int) -> GeneralizedBasicSet:
        return GeneralizedBasicSet.of(
            [p for q, _ in self.pieces for p in q.parts], dim=dim
        )

    def export_pieces(self):
        return self.pieces


@dataclass(frozen=True)
class GridStep:
    """Approximant on the sampled SVF's cell grid.

    winner[i] is the flat mesh index of the value on grid cell i, or -1
    where the approximant is undefined.
    """

    level: int
    winner: np.ndarray = field(repr=False)
    grid: GridSpec
    certificate: StepCertificate

    def covered_cells(self) -> int:
        return int((self.winner >= 0).sum())


@dataclass
class SelectorChain:
    """The extracted sequence f_1..f_n with per-step certificates."""

    svf: RepresentableSVF
    n: int
    dom_budget: Fraction
    f1_value: tuple[Fraction, ...]
    steps: list  # ExactStep | GridStep, levels 2..n
    engine: str  # "exact" | "grid"
    _witness_cache: dict = field(default_factory=dict, repr=False)

    @property
    def beta(self) -> int:
        return self.svf.beta

    @property
    def final_error_bound(self) -> float:
        cert = self.steps[-1].certificate
        return float(cert.error_bound) + cert.slack

    def mesh_value(self, level: int, flat: int) -> tuple[Fraction, ...]:
        pitch = mesh_pitch(level)
        n = 2 ** (level + 1) + 1
        digits = []
        for _ in range(self.beta):
            digits.append(flat % n)
            flat //= n
        digits.reverse()
        return tuple(pitch * d for d in digits)

    def value_at_normalized(self, x, level: int | None = None):
        step = self.steps[-1] if level is None else self.steps[level - 2]
        if isinstance(step, ExactStep):
            return step.value_at(x)
        idx = step.grid.cell_of_point(x)
        if idx is None:
            return None
        w = int(step.winner[step.grid.flat(idx)])
        if w < 0:
            return None
        return self.mesh_value(step.level, w)

    def final_witness(self, eps) -> GeneralizedBasicSet:
        eps = as_fraction(eps)
        key = (eps, len(self.steps))
        if key in self._witness_cache:
            return self._witness_cache[key]
        if self.engine == "grid":
            m = grid_plane_witness(self.svf.grid, eps)
        else:
            carrier = self.steps[-1].carrier(self.svf.domain_box.dim)
            seq = SetSequence.of(
                [GeneralizedBasicSet.of([p], dim=carrier.dim) for p in carrier.parts],
                "rowmajor",
            )
            m = make_witness(seq, self.svf.domain_box, eps, coverage="closure")
        self._witness_cache[key] = m
        return m

    def export_pieces(self, level: int | None = None):
        """Pieces of one step as (GeneralizedBasicSet, normalized value)."""
        step = self.steps[-1] if level is None else self.steps[level - 2]
        if isinstance(step, ExactStep):
            return list(step.pieces)
        return _grid_pieces(self, step)


@dataclass(frozen=True)
class EvalResult:
    """Selector evaluation: a range value or a typed Undefined."""

    value: tuple[Fraction, ...] | None
    reason: str | None = None  # "inside_witness" | "outside_domain"

    INSIDE_WITNESS = "inside_witness"
    OUTSIDE_DOMAIN = "outside_domain"

    @property
    def defined(self) -> bool:
        return self.value is not None

    def as_floats(self) -> tuple[float, ...] | None:
        return None if self.value is None else tuple(float(c) for c in self.value)


# ---------------------------------------------------------------------------
# extraction entry point


def extract(
    F: RepresentableSVF, n: int, dom_budget=Fraction(1, 16)
) -> SelectorChain:
    """Run the extraction to level n (certified error 2**-n plus slack)."""
    if n < 2:
        raise InputError("extraction level must be at least 2")
    dom_budget = as_fraction(dom_budget)
    if dom_budget <= 0:
        raise InputError("domain-loss budget must be positive")
    if F.kind == "sampled" and F.tau > float(Fraction(1, 2 ** (n + 1))):
        raise PrecisionError(
            f"sampled slack tau={F.tau:.4g} exceeds 2**-(n+1)={2.0**-(n+1):.4g}; "
            "refine the sampling grid"
        )
    f1 = F.range_map.normalize([0] * F.beta)
    engine = "exact" if F.kind == "cellwise" else "grid"
    chain = SelectorChain(F, n, dom_budget, f1, [], engine)
    for k in range(2, n + 1):
        budget = dom_budget * Fraction(1, 2 ** (n - k + 1))
        if chain.engine == "exact":
            step = _exact_step(chain, F, k, budget)
        else:
            step = _grid_step(chain, F, k, budget)
        chain.steps.append(step)
    return chain


def extraction_step(f_prev, F: CellwiseSVF, k: int, budget=None) -> "ExactStep":
    """One exact-engine step from an explicit previous approximant.

    `f_prev` is an ExactStep, or None to start from the constant f_1.
    Exposed for the desk examples and the brute-force oracle
    comparison; `extract` drives the same code.
    """
    chain = SelectorChain(
        F, k, Fraction(1, 16), F.range_map.normalize([0] * F.beta), [], "exact"
    )
    if isinstance(f_prev, ExactStep):
        chain.steps = [f_prev]
    budget = as_fraction(budget) if budget is not None else Fraction(1, 2 ** (k + 2))
    return _exact_step(chain, F, k, budget)


# ---------------------------------------------------------------------------
# exact engine


def _prev_pieces_exact(chain: SelectorChain, F: CellwiseSVF):
    if chain.steps:
        return list(chain.steps[-1].pieces)
    whole = GeneralizedBasicSet.of([c for c, _ in F.cells], dim=F.alpha)
    return [(whole, chain.f1_value)]


def _exact_step(chain: SelectorChain, F: CellwiseSVF, k: int, budget) -> ExactStep:
    mesh = regular_mesh(k, F.beta)
    eps_k = Fraction(1, 2**k)
    gap_k = Fraction(1, 2 ** (k - 1))
    prev = _prev_pieces_exact(chain, F)

    # atoms: cell x previous-piece intersections (pairwise disjoint)
    atoms = []  # (cell_idx, prev_idx, GeneralizedBasicSet)
    for ci, (cell, _) in enumerate(F.cells):
        cell_g = GeneralizedBasicSet.of([cell], dim=F.alpha)
        for pi, (q, _) in enumerate(prev):
            inter = cell_g.intersect(q)
            if not inter.is_empty:
                atoms.append((ci, pi, inter))

    # mesh acceptance against the value sets and against the previous step
    cell_ok: list[list[bool]] = []
    e2 = eps_k * eps_k
    for ci in range(len(F.cells)):
        vals = F.normalized_values(ci)
        ok = []
        for r in mesh:
            d2 = min(p.dist2_point(r) for p in vals.parts)
            ok.append(d2 < e2)
        cell_ok.append(ok)
    g2 = gap_k * gap_k
    prev_ok: list[list[bool]] = []
    for _, v in prev:
        ok = []
        for r in mesh:
            d2 = sum((a - b) * (a - b) for a, b in zip(r, v))
            ok.append(d2 < g2)
        prev_ok.append(ok)

    # winner per atom: lowest mesh index passing both tests
    winners: dict[int, list[GeneralizedBasicSet]] = {}
    for ci, pi, region in atoms:
        got = None
        for i in range(len(mesh)):
            if cell_ok[ci][i] and prev_ok[pi][i]:
                got = i
                break
        if got is None:
            raise CoverageError(
                f"no mesh point at level {k} serves cell {ci} from piece {pi}; "
                "the value set lies outside the previous approximant's reach",
                region=region,
            )
        winners.setdefault(got, []).append(region)

    pieces = tuple(
        (
            GeneralizedBasicSet.of(
                [p for g in winners[i] for p in g.parts], dim=F.alpha
            ),
            mesh[i],
        )
        for i in sorted(winners)
    )
    dom_measure = sum(
        (q.measure() for q, _ in pieces), Fraction(0)
    )
    cert = StepCertificate(
        level=k,
        mesh_pitch=mesh_pitch(k),
        error_bound=eps_k,
        slack=0.0,
        step_gap=gap_k,
        witness_budget=as_fraction(budget),
        n_pieces=len(pieces),
        dom_measure=dom_measure,
    )
    return ExactStep(level=k, pieces=pieces, certificate=cert)


# ---------------------------------------------------------------------------
# grid engine


def _grid_step(chain: SelectorChain, F: SampledSVF, k: int, budget) -> GridStep:
    beta = F.beta
    pitch = 2.0 ** -(k + 1)
    n_axis = 2 ** (k + 1) + 1
    eps_accept = 2.0**-k + 2.0 * F.tau
    gap = 2.0 ** -(k - 1)
    nets = F.normalized_nets()
    n_cells = F.grid.n_cells

    if chain.steps:
        prev_vals = _winner_coords(chain.steps[-1], beta)
        prev_ok = chain.steps[-1].winner >= 0
    else:
        prev_vals = np.tile(
            np.array([float(c) for c in chain.f1_value]), (n_cells, 1)
        )
        prev_ok = np.ones(n_cells, dtype=bool)
    if F.mask is not None:
        prev_ok = prev_ok & F.mask

    # any admissible mesh point lies within `gap` of the previous
    # value, so enumerating the lattice ball around it in lexicographic
    # order preserves the lowest-index-wins tie-break; the previous value
    # sits at most half a pitch from its nearest node
    ratio = gap / pitch  # always 4
    reach = int(np.floor(ratio + 0.5))
    rng = np.arange(-reach, reach + 1)
    grids = np.meshgrid(*([rng] * beta), indexing="ij")
    offsets = np.stack([g.reshape(-1) for g in grids], axis=-1)  # lex order
    slack_to_node = np.maximum(np.abs(offsets) - 0.5, 0.0)
    offsets = offsets[(slack_to_node**2).sum(axis=1) < ratio * ratio]

    strides = np.array(
        [n_axis ** (beta - 1 - j) for j in range(beta)], dtype=np.int64
    )
    winner = np.full(n_cells, -1, dtype=np.int64)
    accept2 = eps_accept * eps_accept
    gap2 = gap * gap

    if "_padded_nets" not in F.meta:
        m_max = max(len(n) for n in nets)
        padded = np.empty((n_cells, m_max, beta))
        for flat, net in enumerate(nets):
            padded[flat, : len(net)] = net
            padded[flat, len(net) :] = net[0]
        F.meta["_padded_nets"] = padded
    padded_all = F.meta["_padded_nets"]
    m_max = padded_all.shape[1]

    active = np.nonzero(prev_ok)[0]
    chunk_size = max(1, 8_000_000 // max(len(offsets) * m_max, 1))
    for lo in range(0, len(active), chunk_size):
        cells = active[lo : lo + chunk_size]
        b = len(cells)
        nets_pad = padded_all[cells]
        prev_chunk = prev_vals[cells]  # (b, beta)
        base = np.rint(prev_chunk / pitch).astype(np.int64)
        digits = base[:, None, :] + offsets[None, :, :]  # (b, C, beta)
        valid = ((digits >= 0) & (digits < n_axis)).all(axis=2)
        coords = digits * pitch
        d_prev2 = ((coords - prev_chunk[:, None, :]) ** 2).sum(axis=2)
        # |c - n|^2 = |c|^2 + |n|^2 - 2 c.n via batched matmul, avoiding the
        # (b, C, m, beta) broadcast temporary
        cc = (coords**2).sum(axis=2)  # (b, C)
        nn = (nets_pad**2).sum(axis=2)  # (b, m)
        cross = coords @ nets_pad.transpose(0, 2, 1)  # (b, C, m)
        d_net2 = (cc[:, :, None] + nn[:, None, :] - 2.0 * cross).min(axis=2)
        ok = valid & (d_prev2 < gap2) & (d_net2 < accept2)
        any_ok = ok.any(axis=1)
        if not any_ok.all():
            flat = int(cells[np.nonzero(~any_ok)[0][0]])
            raise CoverageError(
                f"mesh guarantee fails at level {k} on cell {F.grid.unflat(flat)}: "
                "sampled slack too coarse or value set unreachable",
                region=F.grid.cell_box(F.grid.unflat(flat)),
            )
        first = np.argmax(ok, axis=1)
        win_digits = digits[np.arange(b), first]  # (b, beta)
        winner[cells] = win_digits @ strides

    covered = int((winner >= 0).sum())
    cell_vol = Fraction(1)
    for wdt in F.grid.widths():
        cell_vol *= wdt
    cert = StepCertificate(
        level=k,
        mesh_pitch=mesh_pitch(k),
        error_bound=Fraction(1, 2**k),
        slack=3.0 * F.tau,
        step_gap=Fraction(1, 2 ** (k - 1)),
        witness_budget=as_fraction(budget),
        n_pieces=len(np.unique(winner[winner >= 0])),
        dom_measure=cell_vol * covered,
    )
    return GridStep(level=k, winner=winner, grid=F.grid, certificate=cert)


def _coords_from_flat(flat_idx: np.ndarray, n_axis: int, beta: int) -> np.ndarray:
    out = np.empty((len(flat_idx), beta), dtype=np.float64)
    rem = flat_idx.astype(np.int64).copy()
    for j in reversed(range(beta)):
        out[:, j] = rem % n_axis
        rem //= n_axis
    return out


def _winner_coords(step: GridStep, beta: int) -> np.ndarray:
    n_axis = 2 ** (step.level + 1) + 1
    pitch = 2.0 ** -(step.level + 1)
    w = step.winner
    coords = _coords_from_flat(np.maximum(w, 0), n_axis, beta) * pitch
    coords[w < 0] = np.nan
    return coords


def _grid_pieces(chain: SelectorChain, step: GridStep):
    """Merge same-valued cell runs along the last axis into boxes."""
    grid = step.grid
    shape = grid.shape
    w = step.winner.reshape(shape)
    pieces: dict[int, list[BasicSet]] = {}
    widths = grid.widths()

    def cell_lo(idx):
        return [grid.box.lo[j] + widths[j] * idx[j] for j in range(grid.dim)]

    it = np.ndindex(*shape[:-1]) if grid.dim > 1 else [()]
    last = shape[-1]
    for pre in it:
        run_start, run_val = None, None
        for i in range(last + 1):
            val = int(w[pre + (i,)]) if i < last else None
            if val != run_val or i == last:
                if run_val is not None and run_val >= 0:
                    lo = cell_lo(pre + (run_start,))
                    hi_idx = pre + (i - 1,)
                    hi = [
                        grid.box.lo[j] + widths[j] * (hi_idx[j] + 1)
                        for j in range(grid.dim)
                    ]
                    closed_hi = [
                        hi_idx[j] == shape[j] - 1 for j in range(grid.dim)
                    ]
                    pieces.setdefault(run_val, []).append(
                        BasicSet.box(lo, hi, [True] * grid.dim, closed_hi)
                    )
                run_start, run_val = i, val
    out = []
    for val in sorted(pieces):
        out.append(
            (
                GeneralizedBasicSet.of(pieces[val], dim=grid.dim),
                chain.mesh_value(step.level, val),
            )
        )
    return out


# ---------------------------------------------------------------------------
# evaluation


def eval_selector(chain: SelectorChain, x, eps_dom=None) -> EvalResult:
    """Evaluate the final approximant at x, denormalized to the range.

    Undefined inside the witness M(eps_dom) or outside the domain.
    """
    if eps_dom is None:
        eps_dom = chain.dom_budget
    x = [as_fraction(c) for c in x]
    box = chain.svf.domain_box
    if not box.closure().contains(x):
        return EvalResult(None, EvalResult.OUTSIDE_DOMAIN)
    m = chain.final_witness(eps_dom)
    if m.contains(x):
        return EvalResult(None, EvalResult.INSIDE_WITNESS)
    r = chain.value_at_normalized(x)
    if r is None:
        return EvalResult(None, EvalResult.OUTSIDE_DOMAIN)
    return EvalResult(chain.svf.range_map.denormalize(r))


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class CauchyDefect:
    """Disagreement region between two chain levels."""

    k: int
    m: int
    threshold: Fraction
    region_measure: Fraction
    budget_bound: Fraction

    @property
    def within_budget(self) -> bool:
        return self.region_measure <= self.budget_bound


def cauchy_defect(chain: SelectorChain, k: int, m: int) -> CauchyDefect:
    """Measure where |f_k - f_m| >= 2**-(k-2), plus lost domain.

    The chain contract makes this region empty on the common domain;
    whatever remains (domain lost between the levels) must fit inside
    the two steps' witness budgets.
    """
    if not (2 <= k < m <= chain.n):
        raise InputError("need 2 <= k < m <= n")
    thr = Fraction(1, 2 ** (k - 2))
    thr2 = thr * thr
    sk = chain.steps[k - 2]
    sm = chain.steps[m - 2]
    bad = Fraction(0)
    if chain.engine == "exact":
        dim = chain.svf.domain_box.dim
        for qk, vk in sk.pieces:
            for qm, vm in sm.pieces:
                d2 = sum((a - b) * (a - b) for a, b in zip(vk, vm))
                if d2 >= thr2:
                    bad += qk.intersect(qm).measure()
        lost = sk.carrier(dim).subtract(sm.carrier(dim)).measure()
        bad += lost
    else:
        ck = _winner_coords(sk, chain.beta)
        cm = _winner_coords(sm, chain.beta)
        both = (sk.winner >= 0) & (sm.winner >= 0)
        d2 = ((ck - cm) ** 2).sum(axis=1)
        viol = both & (d2 >= float(thr2))
        lostmask = (sk.winner >= 0) & (sm.winner < 0)
        cell_vol = Fraction(1)
        for wdt in chain.svf.grid.widths():
            cell_vol *= wdt
        bad = cell_vol * int(viol.sum()) + cell_vol * int(lostmask.sum())
    budget = sk.certificate.witness_budget + sm.certificate.witness_budget
    return CauchyDefect(k, m, thr, bad, budget)


# ---------------------------------------------------------------------------
# weak-continuity finishing pass (1-D)


@dataclass(frozen=True)
class FinishReport:
    probes: tuple[Fraction, ...]
    values: tuple[tuple[Fraction, ...], ...]
    exception: GeneralizedBasicSet
    sup_error_outside: float
    epsilon: float
    valid: bool


def piecewise_constant_finish(
    chain: SelectorChain, n_probes: int = 33, grid: int = 1000
) -> FinishReport:
    """Extend f_n from an ordered finite probe set by constancy (1-D).

    Validates that the step extension stays within 2**-(n-1) of F off
    an exception set of measure below the same bound.
    """
    from .svf import svf_distance

    box = chain.svf.domain_box
    if box.dim != 1:
        raise InputError("the finishing pass is one-dimensional")
    lo, hi = box.lo[0], box.hi[0]
    xs, vs = [], []
    for i in range(n_probes):
        x = lo + (hi - lo) * Fraction(i, n_probes - 1)
        res = eval_selector(chain, [x])
        if res.defined:
            xs.append(x)
            vs.append(res.value)
    eps = float(chain.steps[-1].certificate.step_gap) + chain.steps[-1].certificate.slack

    def fhat(x: Fraction):
        k = 0
        while k + 1 < len(xs) and xs[k + 1] <= x:
            k += 1
        return vs[k]

    bad_pts = []
    sup_out = 0.0
    for i in range(grid + 1):
        x = lo + (hi - lo) * Fraction(i, grid)
        d = svf_distance(chain.svf, fhat(x), [x])
        if d >= eps:
            bad_pts.append(x)
        else:
            sup_out = max(sup_out, d)
    width = min(Fraction(1, 2) * as_fraction(eps) / max(len(bad_pts), 1), (hi - lo) / grid)
    exception = GeneralizedBasicSet.of(
        [BasicSet.interval(x - width, x + width) for x in bad_pts], dim=1
    )
    valid = float(exception.measure()) < eps
    return FinishReport(
        tuple(xs), tuple(vs), exception, sup_out, eps, valid
    )


# ---------------------------------------------------------------------------
# serialization


def chain_to_json(chain: SelectorChain) -> dict:
    steps = []
    for step in chain.steps:
        cert = step.certificate
        pieces = [
            {
                "set": gbs_to_json(q),
                "value": [rational_to_json(c) for c in r],
            }
            for q, r in chain.export_pieces(step.level)
        ]
        steps.append(
            {
                "level": step.level,
                "mesh_pitch": rational_to_json(cert.mesh_pitch),
                "error_bound": rational_to_json(cert.error_bound),
                "slack": cert.slack,
                "step_gap": rational_to_json(cert.step_gap),
                "witness_budget": rational_to_json(cert.witness_budget),
                "n_pieces": cert.n_pieces,
                "dom_measure": rational_to_json(cert.dom_measure),
                "pieces": pieces,
            }
        )
    out = {
        "n": chain.n,
        "engine": chain.engine,
        "dom_budget": rational_to_json(chain.dom_budget),
        "f1": [rational_to_json(c) for c in chain.f1_value],
        "final_error_bound": chain.final_error_bound,
        "steps": steps,
    }
    if chain.svf.kind == "cellwise":
        out["svf"] = cellwise_svf_to_json(chain.svf)
    else:
        out["svf"] = {
            "kind": "sampled",
            "tau": chain.svf.tau,
            "grid_shape": list(chain.svf.grid.shape),
            "domain": gbs_to_json(
                GeneralizedBasicSet.of([chain.svf.grid.box], dim=chain.svf.grid.dim)
            )["parts"][0],
            "range": {
                "lo": [rational_to_json(c) for c in chain.svf.range_map.lo],
                "hi": [rational_to_json(c) for c in chain.svf.range_map.hi],
            },
        }
    return out


def chain_from_json(obj: dict) -> SelectorChain:
    """Rebuild a chain for evaluation purposes (exact engine only)."""
    svf_obj = obj.get("svf", {})
    if svf_obj.get("kind") != "cellwise":
        raise InputError("only cellwise chains round-trip through JSON")
    svf = cellwise_svf_from_json(svf_obj)
    chain = SelectorChain(
        svf,
        int(obj["n"]),
        rational_from_json(obj["dom_budget"]),
        tuple(rational_from_json(c) for c in obj["f1"]),
        [],
        "exact",
    )
    for s in obj["steps"]:
        pieces = tuple(
            (
                gbs_from_json(p["set"]),
                tuple(rational_from_json(c) for c in p["value"]),
            )
            for p in s["pieces"]
        )
        cert = StepCertificate(
            level=int(s["level"]),
            mesh_pitch=rational_from_json(s["mesh_pitch"]),
            error_bound=rational_from_json(s["error_bound"]),
            slack=float(s["slack"]),
            step_gap=rational_from_json(s["step_gap"]),
            witness_budget=rational_from_json(s["witness_budget"]),
            n_pieces=int(s["n_pieces"]),
            dom_measure=rational_from_json(s["dom_measure"]),
        )
        chain.steps.append(ExactStep(int(s["level"]), pieces, cert))
    return chain


def selector_csv(chain: SelectorChain, points: Sequence[Sequence]) -> str:
    """CSV dump of (x, f_n(x)) rows for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    alpha = chain.svf.domain_box.dim
    w.writerow(
        [f"x{j + 1}" for j in range(alpha)]
        + [f"f{j + 1}" for j in range(chain.beta)]
        + ["status"]
    )
    for pt in points:
        res = eval_selector(chain, pt)
        if res.defined:
            w.writerow(
                [repr(float(as_fraction(c))) for c in pt]
                + [repr(float(c)) for c in res.value]
                + ["ok"]
            )
        else:
            w.writerow(
                [repr(float(as_fraction(c))) for c in pt]
                + [""] * chain.beta
                + [res.reason]
            )
    return buf.getvalue()
