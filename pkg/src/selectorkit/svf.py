"""Representable set-valued functions.

Two tiers share one contract (computable distance to values, sublevel
domains):

* cellwise: a finite disjoint tiling of the working box, each cell
  carrying a generalized set of range values.  Distances and sublevel
  sets are exact rational arithmetic.
* sampled: a point oracle returning a finite net of F(x) per grid cell
  center, with a declared net radius tau.  Sublevel sets are decided at
  cell centers and all downstream certificates carry the tau slack.

Range values are normalized into [0,1]^beta through a stored affine
map; every public operation takes and returns original-range
coordinates and normalizes at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DomainPointError, InhabitednessError, InputError, PrecisionError
from .rational import as_fraction, rational_from_json, rational_to_json
from .setalg import (
    BasicSet,
    GeneralizedBasicSet,
    SetSequence,
    basic_set_from_json,
    basic_set_to_json,
    dist2_point_set,
    gbs_from_json,
    gbs_to_json,
)
from ._threads import ordered_map
from .domain import RepresentableDomain, RepresentabilityWitness


# ---------------------------------------------------------------------------
# range normalization


@dataclass(frozen=True)
class AffineRangeMap:
    """Per-axis affine map from the original range box onto [0,1]^beta."""

    lo: tuple[Fraction, ...]
    hi: tuple[Fraction, ...]

    def __post_init__(self):
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise InputError("range box must have positive width on every axis")

    @staticmethod
    def of(lo: Sequence, hi: Sequence) -> "AffineRangeMap":
        return AffineRangeMap(
            tuple(as_fraction(c) for c in lo), tuple(as_fraction(c) for c in hi)
        )

    @property
    def beta(self) -> int:
        return len(self.lo)

    def widths(self) -> tuple[Fraction, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def normalize(self, y: Sequence) -> tuple[Fraction, ...]:
        return tuple(
            (as_fraction(c) - l) / (h - l) for c, l, h in zip(y, self.lo, self.hi)
        )

    def denormalize(self, r: Sequence) -> tuple[Fraction, ...]:
        return tuple(
            l + as_fraction(c) * (h - l) for c, l, h in zip(r, self.lo, self.hi)
        )

    def normalize_array(self, ys: np.ndarray) -> np.ndarray:
        lo = np.array([float(c) for c in self.lo])
        w = np.array([float(h - l) for l, h in zip(self.lo, self.hi)])
        return (ys - lo) / w

    def denormalize_array(self, rs: np.ndarray) -> np.ndarray:
        lo = np.array([float(c) for c in self.lo])
        w = np.array([float(h - l) for l, h in zip(self.lo, self.hi)])
        return lo + rs * w

    def normalize_gbs(self, s: GeneralizedBasicSet) -> GeneralizedBasicSet:
        parts = []
        for p in s.parts:
            parts.append(
                BasicSet(
                    p.dim,
                    self.normalize(p.lo),
                    self.normalize(p.hi),
                    p.closed_lo,
                    p.closed_hi,
                )
            )
        return GeneralizedBasicSet.of(parts, dim=s.dim)


def identity_range_map(beta: int) -> AffineRangeMap:
    return AffineRangeMap.of([0] * beta, [1] * beta)


def symmetric_range_box(values: np.ndarray, pad: float = 2.0) -> AffineRangeMap:
    """Range box [-pad*G_i, pad*G_i] around 0 per axis.

    Symmetric and padded so that the normalized image of the real zero
    vector is the box center and every observed value stays within
    Euclidean distance 1/2 of it, which the extraction induction needs
    at its first step.
    """
    g = np.max(np.abs(values), axis=0)
    g = np.where(g == 0, 1.0, g)
    half = [as_fraction(float(c)) * as_fraction(pad) for c in g]
    return AffineRangeMap.of([-c for c in half], list(half))


# ---------------------------------------------------------------------------
# cellwise SVFs


@dataclass(frozen=True)
class CellwiseSVF:
    """Exact piecewise SVF: disjoint cells tiling the working box."""

    domain_box: BasicSet
    range_map: AffineRangeMap
    cells: tuple[tuple[BasicSet, GeneralizedBasicSet], ...]

    kind = "cellwise"
    tau = 0.0

    @property
    def alpha(self) -> int:
        return self.domain_box.dim

    @property
    def beta(self) -> int:
        return self.range_map.beta

    def cell_index_at(self, x) -> int | None:
        for i, (cell, _) in enumerate(self.cells):
            if cell.contains(x):
                return i
        return None

    def value_set(self, x) -> GeneralizedBasicSet:
        i = self.cell_index_at(x)
        if i is None:
            raise DomainPointError(f"point {x!r} outside the working box")
        return self.cells[i][1]

    def normalized_values(self, i: int) -> GeneralizedBasicSet:
        return self.range_map.normalize_gbs(self.cells[i][1])


def build_cellwise_svf(
    domain_box: BasicSet,
    cells: Sequence[tuple[BasicSet, GeneralizedBasicSet]],
    range_map: AffineRangeMap | None = None,
) -> CellwiseSVF:
    """Validate and assemble a cellwise SVF.

    Cells must tile the working box disjointly and every value set must
    be inhabited.  Value sets get their closure flags forced shut
    (representable values are closed sets).
    """
    dim = domain_box.dim
    closed_cells = []
    for cell, values in cells:
        if values.is_empty:
            raise InhabitednessError(f"cell {cell!r} carries an empty value set")
        closed_vals = GeneralizedBasicSet.of(
            [p.closure() for p in values.parts], dim=values.dim
        )
        closed_cells.append((cell, closed_vals))
    for i in range(len(closed_cells)):
        for j in range(i + 1, len(closed_cells)):
            if closed_cells[i][0].intersects(closed_cells[j][0]):
                raise InputError(f"cells {i} and {j} overlap")
    union = GeneralizedBasicSet.of([c for c, _ in closed_cells], dim=dim)
    box = GeneralizedBasicSet.of([domain_box], dim=dim)
    if not box.subtract(union).is_empty:
        raise InputError("cells do not cover the working box")
    if not union.subtract(box).is_empty:
        raise InputError("cells exceed the working box")
    if range_map is None:
        beta = closed_cells[0][1].dim
        lo = [min(p.lo[k] for _, v in closed_cells for p in v.parts) for k in range(beta)]
        hi = [max(p.hi[k] for _, v in closed_cells for p in v.parts) for k in range(beta)]
        if all(l >= 0 and h <= 1 for l, h in zip(lo, hi)):
            range_map = identity_range_map(beta)
        else:
            hi = [h if h > l else l + 1 for l, h in zip(lo, hi)]
            range_map = AffineRangeMap.of(lo, hi)
    return CellwiseSVF(domain_box, range_map, tuple(closed_cells))


# ---------------------------------------------------------------------------
# sampled SVFs


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell grid over a closed box; cells are half-open tiles."""

    box: BasicSet
    shape: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def n_cells(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    def widths(self) -> tuple[Fraction, ...]:
        return tuple(
            (self.box.hi[j] - self.box.lo[j]) / self.shape[j] for j in range(self.dim)
        )

    def center(self, idx: tuple[int, ...]) -> tuple[Fraction, ...]:
        w = self.widths()
        return tuple(
            self.box.lo[j] + w[j] * idx[j] + w[j] / 2 for j in range(self.dim)
        )

    def centers_array(self) -> np.ndarray:
        axes = []
        for j in range(self.dim):
            lo = float(self.box.lo[j])
            w = float(self.widths()[j])
            axes.append(lo + w * (np.arange(self.shape[j]) + 0.5))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def cell_of_point(self, x) -> tuple[int, ...] | None:
        idx = []
        w = self.widths()
        for j in range(self.dim):
            c = as_fraction(x[j])
            if c < self.box.lo[j] or c > self.box.hi[j]:
                return None
            i = int((c - self.box.lo[j]) / w[j])
            if i == self.shape[j]:
                i -= 1
            idx.append(i)
        return tuple(idx)

    def flat(self, idx: tuple[int, ...]) -> int:
        out = 0
        for j in range(self.dim):
            out = out * self.shape[j] + idx[j]
        return out

    def unflat(self, flat: int) -> tuple[int, ...]:
        idx = []
        for j in reversed(range(self.dim)):
            idx.append(flat % self.shape[j])
            flat //= self.shape[j]
        return tuple(reversed(idx))

    def cell_box(self, idx: tuple[int, ...]) -> BasicSet:
        w = self.widths()
        lo = [self.box.lo[j] + w[j] * idx[j] for j in range(self.dim)]
        hi = [self.box.lo[j] + w[j] * (idx[j] + 1) for j in range(self.dim)]
        closed_hi = [idx[j] == self.shape[j] - 1 for j in range(self.dim)]
        return BasicSet.box(lo, hi, [True] * self.dim, closed_hi)

    def grid_planes(self) -> list[tuple[int, Fraction]]:
        w = self.widths()
        out = []
        for j in range(self.dim):
            for i in range(self.shape[j] + 1):
                out.append((j, self.box.lo[j] + w[j] * i))
        return out


@dataclass(frozen=True)
class SampledSVF:
    """Grid-sampled SVF: finite value nets at cell centers, slack tau.

    `mask`, when present, marks active cells; excluded cells (empty
    value nets, reported by the producer) stay outside the domain.
    """

    grid: GridSpec
    range_map: AffineRangeMap
    nets: tuple[np.ndarray, ...] = field(repr=False)  # raw range coords, (m_i, beta)
    tau: float  # normalized units
    meta: dict = field(default_factory=dict, compare=False)
    mask: np.ndarray | None = field(default=None, repr=False)

    kind = "sampled"

    def active(self, flat_idx: int) -> bool:
        return self.mask is None or bool(self.mask[flat_idx])

    @property
    def domain_box(self) -> BasicSet:
        return self.grid.box

    @property
    def alpha(self) -> int:
        return self.grid.dim

    @property
    def beta(self) -> int:
        return self.range_map.beta

    def net_raw(self, flat_idx: int) -> np.ndarray:
        return self.nets[flat_idx]

    def normalized_nets(self) -> list[np.ndarray]:
        if "_norm" not in self.meta:
            self.meta["_norm"] = [
                self.range_map.normalize_array(n) for n in self.nets
            ]
        return self.meta["_norm"]


def build_sampled_svf(
    grid: GridSpec,
    sampler: Callable[[np.ndarray], Sequence[np.ndarray]],
    tau: float | None = None,
    range_map: AffineRangeMap | None = None,
    range_pad: float = 2.0,
) -> SampledSVF:
    """Evaluate the sampler on all cell centers and assemble the SVF.

    The sampler maps an (N, alpha) array of centers to a length-N list
    of (m_i, beta) value nets.  Every net must be inhabited.  When tau
    is None it is estimated as half the largest net deviation between
    adjacent cells plus the largest intra-net nearest-neighbor gap.
    """
    centers = grid.centers_array()
    nets = [np.asarray(n, dtype=float) for n in sampler(centers)]
    if len(nets) != len(centers):
        raise InputError("sampler returned the wrong number of nets")
    for i, n in enumerate(nets):
        if n.size == 0:
            raise InhabitednessError(f"empty net at cell {grid.unflat(i)}")
    if range_map is None:
        allv = np.concatenate([n.reshape(-1, nets[0].shape[-1]) for n in nets])
        range_map = symmetric_range_box(allv, pad=range_pad)
    svf = SampledSVF(grid, range_map, tuple(nets), 0.0)
    if tau is None:
        tau = estimate_tau(svf)
    return SampledSVF(grid, range_map, tuple(nets), float(tau))


def estimate_tau(svf: SampledSVF) -> float:
    """Grid-estimated slack: half the max adjacent-cell net deviation."""
    norm = svf.normalized_nets()
    shape = svf.grid.shape
    worst = 0.0
    for flat in range(svf.grid.n_cells):
        idx = svf.grid.unflat(flat)
        a = norm[flat]
        for j in range(svf.grid.dim):
            if idx[j] + 1 < shape[j]:
                nb = list(idx)
                nb[j] += 1
                b = norm[svf.grid.flat(tuple(nb))]
                d = _directed_net_deviation(a, b)
                worst = max(worst, d)
    return 0.5 * worst


def _directed_net_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """max over points of a of the distance to the nearest point of b."""
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


RepresentableSVF = CellwiseSVF | SampledSVF


def build_svf(*, domain_box=None, cells=None, range_map=None,
              grid=None, sampler=None, tau=None) -> RepresentableSVF:
    """Validated construction of either SVF tier.

    Give `domain_box` + `cells` for the exact cellwise form, or
    `grid` + `sampler` (optional declared `tau`) for the sampled form.
    """
    if cells is not None:
        if domain_box is None:
            raise InputError("cellwise construction needs the working box")
        return build_cellwise_svf(domain_box, cells, range_map)
    if sampler is not None:
        if grid is None:
            raise InputError("sampled construction needs a grid")
        return build_sampled_svf(grid, sampler, tau=tau, range_map=range_map)
    raise InputError("provide cells or a sampler")


# ---------------------------------------------------------------------------
# distance


def svf_distance(F: RepresentableSVF, r: Sequence, x: Sequence) -> float:
    """Distance from range point r to F(x), in original range coordinates.

    Cellwise: exact box distance to the cell's value set.  Sampled: min
    over the cell's net, within tau (denormalized) of the true value.
    """
    if F.kind == "cellwise":
        values = F.value_set(x)  # raises DomainPointError outside
        d2 = dist2_point_set([as_fraction(c) for c in r], values)
        return float(np.sqrt(float(d2)))
    idx = F.grid.cell_of_point(x)
    if idx is None:
        raise DomainPointError(f"point {x!r} outside the working box")
    net = F.net_raw(F.grid.flat(idx))
    rv = np.array([float(as_fraction(c)) for c in r])
    return float(np.linalg.norm(net - rv, axis=-1).min())


# ---------------------------------------------------------------------------
# sublevel domains


@dataclass(frozen=True)
class SublevelFamily:
    """Sublevel sets C_i = {x : |r_i - F(x)| <= delta} as domains."""

    centers: tuple[tuple[Fraction, ...], ...]
    delta: Fraction
    slack: float
    domains: tuple[RepresentableDomain, ...]
    cell_indices: tuple[tuple[int, ...], ...]
    union_domain: RepresentableDomain

    def __len__(self) -> int:
        return len(self.centers)


def sublevel_domains(
    F: RepresentableSVF,
    centers: Sequence[Sequence],
    delta,
    strict: bool = False,
) -> SublevelFamily:
    """Build the sublevel family for finitely many range centers.

    Cellwise: each C_i is the exact union of accepted cells (closed
    comparison by default, strict when requested).  Sampled: cells are
    accepted when the net at their center passes the tau-inflated test,
    a conservative superset of the honest delta + tau level.
    """
    delta = as_fraction(delta)
    if delta <= 0:
        raise InputError("delta must be positive")
    centers = tuple(tuple(as_fraction(c) for c in r) for r in centers)
    if F.kind == "cellwise":
        return _sublevel_cellwise(F, centers, delta, strict)
    return _sublevel_sampled(F, centers, delta, strict)


def _sublevel_cellwise(F: CellwiseSVF, centers, delta: Fraction, strict: bool):
    d2 = delta * delta

    def accept_for(r):
        idxs = []
        for i, (cell, values) in enumerate(F.cells):
            dist2 = dist2_point_set(r, values)
            ok = dist2 < d2 if strict else dist2 <= d2
            if ok:
                idxs.append(i)
        return tuple(idxs)

    accepted = ordered_map(accept_for, centers)
    domains = tuple(
        _cells_to_domain(F, idxs) for idxs in accepted
    )
    union_idx = tuple(sorted({i for idxs in accepted for i in idxs}))
    union_dom = _cells_to_domain(F, union_idx)
    return SublevelFamily(
        centers, delta, 0.0, domains, tuple(accepted), union_dom
    )


def _cells_to_domain(F: CellwiseSVF, idxs) -> RepresentableDomain:
    cells = [F.cells[i][0] for i in idxs]
    seq = SetSequence.of(
        [GeneralizedBasicSet.of([c], dim=F.alpha) for c in cells], "rowmajor"
    ) if cells else SetSequence((GeneralizedBasicSet.empty(F.alpha),), "rowmajor")
    if not cells:
        return RepresentableDomain(
            seq,
            F.domain_box,
            RepresentabilityWitness(lambda eps: GeneralizedBasicSet.empty(F.alpha)),
            coverage="closure",
        )
    return RepresentableDomain.from_carrier(seq, F.domain_box, coverage="closure")


def _sublevel_sampled(F: SampledSVF, centers, delta: Fraction, strict: bool):
    # tau lives in normalized units; bound its original-space size by the
    # widest range axis (conservative for anisotropic maps)
    slack = F.tau * float(max(F.range_map.widths()))
    if slack >= float(delta):
        raise PrecisionError(
            f"sampled slack {slack:.3g} cannot resolve delta={float(delta):.3g}"
        )
    thr = float(delta) + slack
    accepted: list[tuple[int, ...]] = []
    for r in centers:
        rv = np.array([float(c) for c in r])
        idxs = []
        for flat in range(F.grid.n_cells):
            d = float(np.linalg.norm(F.nets[flat] - rv, axis=-1).min())
            ok = d < thr if strict else d <= thr
            if ok:
                idxs.append(flat)
        accepted.append(tuple(idxs))
    domains = tuple(_grid_cells_to_domain(F, idxs) for idxs in accepted)
    union_idx = tuple(sorted({i for idxs in accepted for i in idxs}))
    union_dom = _grid_cells_to_domain(F, union_idx)
    return SublevelFamily(
        centers, delta, slack, domains, tuple(accepted), union_dom
    )


def _grid_cells_to_domain(F: SampledSVF, idxs) -> RepresentableDomain:
    grid = F.grid
    cells = [grid.cell_box(grid.unflat(i)) for i in idxs]
    seq = (
        SetSequence.of(
            [GeneralizedBasicSet.of([c], dim=grid.dim) for c in cells], "rowmajor"
        )
        if cells
        else SetSequence((GeneralizedBasicSet.empty(grid.dim),), "rowmajor")
    )
    witness = RepresentabilityWitness(lambda eps: grid_plane_witness(grid, eps))
    if not cells:
        witness = RepresentabilityWitness(
            lambda eps: GeneralizedBasicSet.empty(grid.dim)
        )
    return RepresentableDomain(seq, grid.box, witness, coverage="closure")


def grid_plane_witness(grid: GridSpec, eps) -> GeneralizedBasicSet:
    """Thin open slabs around every grid plane; total measure <= eps.

    The endpoint set of any union of grid cells lies on the grid
    planes, so one witness shape serves every such domain.
    """
    eps = as_fraction(eps)
    planes = grid.grid_planes()
    cross: dict[int, Fraction] = {}
    for j in range(grid.dim):
        area = Fraction(1)
        for k in range(grid.dim):
            if k != j:
                area *= (grid.box.hi[k] - grid.box.lo[k]) + 1
        cross[j] = area
    budget = eps / len(planes)
    min_w = min(grid.widths())
    parts = []
    for j, v in planes:
        # the volume bound 2h * prod(width + 1) needs 2h <= 1
        half = min(budget / (2 * cross[j]), min_w / 4, Fraction(1, 2))
        lo = [grid.box.lo[k] - half for k in range(grid.dim)]
        hi = [grid.box.hi[k] + half for k in range(grid.dim)]
        lo[j], hi[j] = v - half, v + half
        parts.append(BasicSet.open_box(lo, hi))
    return GeneralizedBasicSet.of(parts, dim=grid.dim)


# ---------------------------------------------------------------------------
# Filippov regularization


def filippov_regularize(
    f1: Callable[[np.ndarray], np.ndarray],
    f2: Callable[[np.ndarray], np.ndarray],
    sigma: Callable[[np.ndarray], np.ndarray],
    hull_steps: int,
    domain_box: BasicSet,
    grid_shape: Sequence[int],
    range_map: AffineRangeMap | None = None,
) -> SampledSVF:
    """Sampled SVF of the two-field convex-hull regularization.

    Off the switching surface the net is the single active field value;
    on straddling cells it is the segment between the two fields
    sampled at hull_steps points, with tau = segment length /
    hull_steps (normalized after range mapping).
    """
    if hull_steps < 2:
        raise InputError("hull_steps must be at least 2")
    grid = GridSpec(domain_box, tuple(int(n) for n in grid_shape))
    centers = grid.centers_array()
    v1 = np.atleast_2d(np.asarray(f1(centers), dtype=float))
    v2 = np.atleast_2d(np.asarray(f2(centers), dtype=float))
    if v1.shape[0] != len(centers):
        v1 = v1.T
    if v2.shape[0] != len(centers):
        v2 = v2.T

    straddle = _straddle_mask(grid, sigma)
    sgn_center = np.asarray(sigma(centers), dtype=float).reshape(-1)

    alphas = np.linspace(0.0, 1.0, hull_steps)
    nets = []
    for i in range(len(centers)):
        if straddle[i] or sgn_center[i] == 0.0:
            seg = np.array([(1 - a) * v1[i] + a * v2[i] for a in alphas])
            nets.append(seg)
        elif sgn_center[i] > 0:
            nets.append(v1[i][None, :])
        else:
            nets.append(v2[i][None, :])
    if range_map is None:
        range_map = symmetric_range_box(np.concatenate(nets))
    svf = SampledSVF(grid, range_map, tuple(nets), 0.0)
    seg_len = np.linalg.norm(
        svf.range_map.normalize_array(v1) - svf.range_map.normalize_array(v2), axis=-1
    )
    tau = float(seg_len.max() / hull_steps) if len(seg_len) else 0.0
    return SampledSVF(grid, range_map, tuple(nets), tau)


def _straddle_mask(grid: GridSpec, sigma) -> np.ndarray:
    """Cells whose corners disagree in sign are surface cells."""
    corner_axes = []
    for j in range(grid.dim):
        lo = float(grid.box.lo[j])
        w = float(grid.widths()[j])
        corner_axes.append(lo + w * np.arange(grid.shape[j] + 1))
    mesh = np.meshgrid(*corner_axes, indexing="ij")
    corners = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    sgn = np.sign(np.asarray(sigma(corners), dtype=float)).reshape(
        [s + 1 for s in grid.shape]
    )
    out = np.zeros(grid.shape, dtype=bool)
    it = np.ndindex(*grid.shape)
    for idx in it:
        sl = tuple(slice(i, i + 2) for i in idx)
        vals = sgn[sl].reshape(-1)
        out[idx] = vals.max() != vals.min() or (vals == 0).any()
    return out.reshape(-1)


# ---------------------------------------------------------------------------
# serialization


def cellwise_svf_to_json(F: CellwiseSVF) -> dict:
    return {
        "kind": "cellwise",
        "domain": basic_set_to_json(F.domain_box),
        "dim": F.alpha,
        "range": {
            "lo": [rational_to_json(c) for c in F.range_map.lo],
            "hi": [rational_to_json(c) for c in F.range_map.hi],
        },
        "cells": [
            {"cell": basic_set_to_json(c), "values": gbs_to_json(v)}
            for c, v in F.cells
        ],
    }


def cellwise_svf_from_json(obj: dict) -> CellwiseSVF:
    dim = int(obj.get("dim", 1))
    domain_box = basic_set_from_json(obj["domain"], dim)
    rng = obj["range"]
    range_map = AffineRangeMap.of(
        [rational_from_json(c) for c in rng["lo"]],
        [rational_from_json(c) for c in rng["hi"]],
    )
    cells = [
        (basic_set_from_json(c["cell"], dim), gbs_from_json(c["values"]))
        for c in obj["cells"]
    ]
    return build_cellwise_svf(domain_box, cells, range_map)
