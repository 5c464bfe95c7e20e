"""Representable domains: constructive witnesses and measurability machinery.

A representable domain is a set sequence X in a compact ambient box
that, for every eps > 0, produces a generalized set M(eps) of measure
at most eps covering the endpoint set of X with a strictly positive
margin, such that the ambient minus M sits inside X.  All three
clauses are decidable here because the set algebra is exact.

Piecewise-constant maps on such domains extend to continuous functions
off an exception set of measure eps: ramps across witness gaps in 1-D,
multilinear blending over adjacent pieces in higher dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .errors import AdjacencyError, WitnessError
from .rational import as_fraction
from .setalg import (
    BasicSet,
    GeneralizedBasicSet,
    SetSequence,
    countable_reduction,
    dist_point_set,
    gbs_to_json,
    sequence_from_json,
    sequence_to_json,
)

BUDGET_RULES = ("geometric", "equal")


# ---------------------------------------------------------------------------
# witness construction


def _face_groups(faces: Sequence[BasicSet]) -> list[tuple[int, Fraction, BasicSet]]:
    """Merge faces into maximal coplanar slab extents.

    Faces are grouped by (first degenerate axis, pinned value); each
    group is summarized by the bounding box of its members.  Covering
    the bounding extent instead of each face separately keeps slab
    boundaries away from transversal endpoint segments.
    """
    groups: dict[tuple[int, Fraction], list[BasicSet]] = {}
    for f in faces:
        pin = next(j for j in range(f.dim) if f.axis_degenerate(j))
        groups.setdefault((pin, f.lo[pin]), []).append(f)
    out = []
    for (pin, value), members in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1])
    ):
        dim = members[0].dim
        lo = [min(m.lo[j] for m in members) for j in range(dim)]
        hi = [max(m.hi[j] for m in members) for j in range(dim)]
        out.append((pin, value, BasicSet.closed_box(lo, hi)))
    return out


def _budgets(eps: Fraction, n: int, rule: str) -> list[Fraction]:
    if rule == "equal":
        return [eps / n] * n
    return [eps * Fraction(1, 2 ** (i + 1)) for i in range(n)]


def _slab_margin(budget: Fraction, extent: BasicSet, pin: int, cap: Fraction) -> Fraction:
    other = Fraction(1)
    for j in range(extent.dim):
        if j != pin:
            other *= (extent.hi[j] - extent.lo[j]) + 1
    return min(Fraction(1, 2), cap, budget / (2 * other))


def make_witness(
    x: SetSequence | GeneralizedBasicSet,
    ambient: BasicSet,
    eps,
    budget_rule: str = "geometric",
    coverage: str = "ambient",
) -> GeneralizedBasicSet:
    """Build a witness M(eps) for the endpoint set of x.

    Open slabs around each merged endpoint group, budgeted per
    `budget_rule`, clipped to a slight inflation of the ambient box.
    Raises WitnessError if the three representability clauses cannot be
    verified (non-representable input).
    """
    eps = as_fraction(eps)
    if eps <= 0:
        raise WitnessError("witness budget must be positive")
    if budget_rule not in BUDGET_RULES:
        raise WitnessError(f"unknown budget rule {budget_rule!r}")
    gamma = x.gamma() if isinstance(x, SetSequence) else x.gamma
    carrier = x.as_gbs() if isinstance(x, SetSequence) else x
    dim = ambient.dim
    if not gamma:
        return GeneralizedBasicSet.empty(dim)

    groups = _face_groups(gamma)
    budgets = _budgets(eps, len(groups), budget_rule)

    # keep slab thickness under a quarter of the closest parallel plane gap
    caps = []
    for i, (pin, value, _) in enumerate(groups):
        gaps = [
            abs(value - v2) for (p2, v2, _) in groups if p2 == pin and v2 != value
        ]
        caps.append(min(gaps) / 4 if gaps else Fraction(1, 2))

    shrink = Fraction(1)
    for _attempt in range(12):
        parts = []
        for (pin, value, extent), budget, cap in zip(groups, budgets, caps):
            m = _slab_margin(budget, extent, pin, cap) * shrink
            if m <= 0:
                raise WitnessError("witness margin vanished")
            lo = [extent.lo[j] - m for j in range(dim)]
            hi = [extent.hi[j] + m for j in range(dim)]
            lo[pin], hi[pin] = value - m, value + m
            parts.append(BasicSet.open_box(lo, hi))
        max_m = max((p.hi[0] - p.lo[0]) for p in parts) if parts else Fraction(0)
        clip = ambient.inflate(max_m)
        parts = [p.intersect(clip) for p in parts]
        candidate = GeneralizedBasicSet.of(parts, dim=dim)
        if candidate.measure() > eps:
            raise WitnessError("witness exceeds its measure budget")
        margin = well_containment_margin(gamma, candidate)
        region = _coverage_region(ambient, carrier, coverage)
        if margin is not None and _covers_complement(region, candidate, carrier):
            return candidate
        if margin is not None:
            # clause 3 failed: the carrier genuinely misses interior chunks
            raise WitnessError(
                "ambient minus witness is not inside the carrier "
                "(non-representable input)"
            )
        shrink *= Fraction(3, 4)
    raise WitnessError("could not realize a positive well-containment margin")


def _coverage_region(
    ambient: BasicSet, carrier: GeneralizedBasicSet, coverage: str
) -> GeneralizedBasicSet:
    """Clause-3 reference region: the ambient box, or the carrier closure.

    Sublevel-set members C_i are proper subsets of the working box; the
    theorem only ever needs their union representable, so individual
    members verify against their own closure.
    """
    if coverage == "ambient":
        return GeneralizedBasicSet.of([ambient], dim=ambient.dim)
    if coverage == "closure":
        return GeneralizedBasicSet.of(
            [p.closure() for p in carrier.parts], dim=carrier.dim
        )
    raise WitnessError(f"unknown coverage mode {coverage!r}")


def _covers_complement(
    region: GeneralizedBasicSet, m: GeneralizedBasicSet, carrier: GeneralizedBasicSet
) -> bool:
    return region.subtract(m).subtract(carrier).is_empty


def well_containment_margin(
    faces: Sequence[BasicSet],
    m: GeneralizedBasicSet,
    r0: Fraction | None = None,
    max_halvings: int = 40,
) -> Fraction | None:
    """Largest verified r > 0 with (faces + B_r) inside M \\ Gamma_M.

    Gamma_M is taken as the essential boundary of M.  Returns None when
    no positive margin down to r0 / 2**max_halvings verifies.
    """
    faces = [f for f in faces if not f.is_empty]
    if not faces:
        return r0 or Fraction(1, 4)
    if m.is_empty:
        return None
    if r0 is None:
        thick = min(
            min(p.hi[j] - p.lo[j] for j in range(p.dim) if p.hi[j] > p.lo[j])
            for p in m.parts
        )
        r0 = thick / 4
    ess = m.essential_gamma()
    r = as_fraction(r0)
    for _ in range(max_halvings):
        if _contained_with_margin(faces, m, ess, r):
            return r
        r /= 2
    return None


def _contained_with_margin(faces, m, ess, r) -> bool:
    for f in faces:
        box = f.inflate(r)
        if not GeneralizedBasicSet.of([box], dim=box.dim).subtract(m).is_empty:
            return False
        for e in ess:
            if box.intersects(e):
                return False
    return True


def disjointify_witness(m: GeneralizedBasicSet) -> GeneralizedBasicSet:
    """Countable reduction of a witness into disjoint basic sets."""
    if m.is_empty:
        return m
    seq = SetSequence.of(
        [GeneralizedBasicSet.of([p], dim=m.dim) for p in m.parts], "rowmajor"
    )
    reduced = countable_reduction(seq)
    return GeneralizedBasicSet.of(
        [p for it in reduced.items for p in it.parts], dim=m.dim
    )


# ---------------------------------------------------------------------------
# domains


class RepresentabilityWitness:
    """Validating wrapper around an eps -> M(eps) generator.

    Every query re-checks the measure budget; results are cached per
    eps.  The located-set distance oracle is the exact box distance.
    """

    def __init__(self, generator: Callable[[Fraction], GeneralizedBasicSet]):
        self._generator = generator
        self._cache: dict[Fraction, GeneralizedBasicSet] = {}

    def __call__(self, eps) -> GeneralizedBasicSet:
        eps = as_fraction(eps)
        if eps <= 0:
            raise WitnessError("witness budget must be positive")
        if eps not in self._cache:
            m = self._generator(eps)
            if m.measure() > eps:
                raise WitnessError(
                    f"generator returned measure {m.measure()} > budget {eps}"
                )
            self._cache[eps] = m
        return self._cache[eps]

    def distance(self, point, eps) -> float:
        return dist_point_set(point, self(eps))


@dataclass(frozen=True)
class DomainCertificate:
    epsilon: Fraction
    witness_measure: Fraction
    margin: Fraction | None
    covers_complement: bool
    coverage: str = "ambient"

    @property
    def ok(self) -> bool:
        return self.margin is not None and self.covers_complement


@dataclass(frozen=True)
class RepresentableDomain:
    """Set sequence + ambient box + representability witness."""

    carrier: SetSequence
    ambient: BasicSet
    witness: RepresentabilityWitness = field(compare=False)
    budget_rule: str = "geometric"
    coverage: str = "ambient"

    @staticmethod
    def from_carrier(
        carrier: SetSequence,
        ambient: BasicSet,
        budget_rule: str = "geometric",
        coverage: str = "ambient",
    ) -> "RepresentableDomain":
        gen = lambda eps: make_witness(carrier, ambient, eps, budget_rule, coverage)
        return RepresentableDomain(
            carrier, ambient, RepresentabilityWitness(gen), budget_rule, coverage
        )

    @staticmethod
    def from_cells(
        cells: Sequence[BasicSet],
        ambient: BasicSet,
        budget_rule: str = "geometric",
        coverage: str = "ambient",
    ) -> "RepresentableDomain":
        seq = SetSequence.of(
            [GeneralizedBasicSet.of([c], dim=ambient.dim) for c in cells], "rowmajor"
        )
        return RepresentableDomain.from_carrier(seq, ambient, budget_rule, coverage)

    @property
    def dim(self) -> int:
        return self.ambient.dim

    def carrier_gbs(self) -> GeneralizedBasicSet:
        return self.carrier.as_gbs()

    def contains(self, point) -> bool:
        return self.carrier.contains(point)

    def verify(self, eps) -> DomainCertificate:
        eps = as_fraction(eps)
        m = self.witness(eps)
        margin = well_containment_margin(list(self.carrier.gamma()), m)
        region = _coverage_region(self.ambient, self.carrier_gbs(), self.coverage)
        covers = _covers_complement(region, m, self.carrier_gbs())
        return DomainCertificate(eps, m.measure(), margin, covers, self.coverage)


def reduce_domain(dom: RepresentableDomain) -> RepresentableDomain:
    """Countable reduction of the carrier; the witness carries over."""
    return RepresentableDomain(
        countable_reduction(dom.carrier),
        dom.ambient,
        dom.witness,
        dom.budget_rule,
        dom.coverage,
    )


def intersect_domains(
    d1: RepresentableDomain, d2: RepresentableDomain
) -> RepresentableDomain:
    """Intersection domain with the eps/2 + eps/2 union witness."""
    items = []
    for a in d1.carrier.items:
        for b in d2.carrier.items:
            items.append(a.intersect(b))
    carrier = SetSequence(tuple(items), d1.carrier.pairing)
    return _joint_witness_domain(carrier, d1, d2)


def termwise_intersect_domains(
    d1: RepresentableDomain, d2: RepresentableDomain
) -> RepresentableDomain:
    """Item-by-item intersection; requires X1 inside the result."""
    if len(d1.carrier.items) != len(d2.carrier.items):
        raise WitnessError("term-wise intersection needs equal-length sequences")
    items = tuple(
        a.intersect(b) for a, b in zip(d1.carrier.items, d2.carrier.items)
    )
    carrier = SetSequence(items, d1.carrier.pairing)
    tilde = GeneralizedBasicSet.of(
        [p for it in items for p in it.parts], dim=d1.ambient.dim
    )
    if not d1.carrier_gbs().subtract(tilde).is_empty:
        raise WitnessError("term-wise intersection precondition X1 <= X~ fails")
    return _joint_witness_domain(carrier, d1, d2)


def _joint_witness_domain(carrier, d1, d2) -> RepresentableDomain:
    def gen(eps: Fraction) -> GeneralizedBasicSet:
        m1 = d1.witness(eps / 2)
        m2 = d2.witness(eps / 2)
        return GeneralizedBasicSet.of(m1.parts + m2.parts, dim=d1.ambient.dim)

    return RepresentableDomain(
        carrier, d1.ambient, RepresentabilityWitness(gen), d1.budget_rule, d1.coverage
    )


# ---------------------------------------------------------------------------
# piecewise-constant maps and continuous extension


@dataclass(frozen=True)
class PiecewiseConstantMap:
    """Disjoint generalized sets Q_i with constant range values r_i."""

    pieces: tuple[tuple[GeneralizedBasicSet, tuple[Fraction, ...]], ...]
    domain: RepresentableDomain

    @property
    def range_dim(self) -> int:
        return len(self.pieces[0][1]) if self.pieces else 0

    def value_at(self, point) -> tuple[Fraction, ...] | None:
        for q, r in self.pieces:
            if q.contains(point):
                return r
        return None

    def validate(self) -> None:
        for i in range(len(self.pieces)):
            for j in range(i + 1, len(self.pieces)):
                if not self.pieces[i][0].disjoint_from(self.pieces[j][0]):
                    raise WitnessError(f"pieces {i} and {j} overlap")
        union = GeneralizedBasicSet.of(
            [p for q, _ in self.pieces for p in q.parts], dim=self.domain.dim
        )
        carrier = self.domain.carrier_gbs()
        if not union.subtract(carrier).is_empty:
            raise WitnessError("piece union exceeds the domain carrier")
        if not carrier.subtract(union).is_empty:
            raise WitnessError("piece union does not cover the domain carrier")


@dataclass
class ContinuousExtension:
    """Evaluable continuous g with g = f outside the exception set."""

    fn: Callable[[Sequence[float]], tuple[float, ...]]
    exception: GeneralizedBasicSet
    lipschitz: float

    def __call__(self, point) -> tuple[float, ...]:
        return self.fn(point)


def continuous_extension(
    f: PiecewiseConstantMap, eps, adjacency_delta: Fraction | None = None
) -> ContinuousExtension:
    """Continuous g equal to f off an exception set of measure <= eps.

    1-D ramps linearly across the reduced witness intervals; in higher
    dimension the weak finite adjacency condition is checked on a probe
    cover first and values blend multilinearly over nearby pieces.
    """
    eps = as_fraction(eps)
    dim = f.domain.dim
    values = [r for _, r in f.pieces]
    if not values:
        raise WitnessError("cannot extend a map with no pieces")
    if all(v == values[0] for v in values):
        const = tuple(float(c) for c in values[0])
        return ContinuousExtension(
            lambda _pt, _c=const: _c, GeneralizedBasicSet.empty(dim), 0.0
        )

    m = f.domain.witness(eps)
    m_red = disjointify_witness(m)
    cert = f.domain.verify(eps)
    if cert.margin is None:
        raise WitnessError("domain fails its own representability check")

    if dim == 1:
        return _extension_1d(f, m_red)
    report = check_weak_finite_adjacency(f.domain, delta=adjacency_delta)
    if not report.ok:
        raise AdjacencyError(report.offending_cell)
    return _extension_blend(f, m_red, cert.margin)


def _nearest_value(f: PiecewiseConstantMap, point) -> tuple[Fraction, ...]:
    v = f.value_at(point)
    if v is not None:
        return v
    best, best_d = None, None
    for q, r in f.pieces:
        for p in q.parts:
            d = p.dist2_point(point)
            if best_d is None or d < best_d:
                best, best_d = r, d
    return best


def _extension_1d(f: PiecewiseConstantMap, m_red: GeneralizedBasicSet):
    ramps = []
    for part in sorted(m_red.parts, key=lambda p: p.lo[0]):
        a, b = part.lo[0], part.hi[0]
        fa = tuple(float(c) for c in _nearest_value(f, [a]))
        fb = tuple(float(c) for c in _nearest_value(f, [b]))
        ramps.append((a, b, fa, fb))
    beta = f.range_dim
    lip = 0.0
    for a, b, fa, fb in ramps:
        if b > a:
            lip = max(
                lip, max(abs(fa[k] - fb[k]) for k in range(beta)) / float(b - a)
            )

    def g(point):
        x = as_fraction(point[0] if isinstance(point, (list, tuple)) else point)
        for a, b, fa, fb in ramps:
            if a <= x <= b:
                t = float((x - a) / (b - a)) if b > a else 0.0
                return tuple(fa[k] + t * (fb[k] - fa[k]) for k in range(beta))
        return tuple(float(c) for c in _nearest_value(f, [x]))

    return ContinuousExtension(g, m_red, lip)


def _extension_blend(
    f: PiecewiseConstantMap, m_red: GeneralizedBasicSet, margin: Fraction
):
    scale = float(margin)
    beta = f.range_dim
    pieces = [
        (q, tuple(float(c) for c in r), [(p.lo, p.hi) for p in q.parts])
        for q, r in f.pieces
    ]
    vals = [v for _, v, _ in pieces]
    spread = max(
        abs(a[k] - b[k]) for a in vals for b in vals for k in range(beta)
    )
    lip = 2.0 * len(pieces) * spread / scale if scale > 0 else float("inf")

    def weight(point, boxes) -> float:
        best = 0.0
        for lo, hi in boxes:
            w = 1.0
            for j, c in enumerate(point):
                gap = max(float(lo[j]) - c, c - float(hi[j]), 0.0)
                h = 1.0 - gap / scale
                if h <= 0.0:
                    w = 0.0
                    break
                w *= h
            best = max(best, w)
        return best

    def g(point):
        pt_exact = tuple(as_fraction(c) for c in point)
        pt = tuple(float(c) for c in pt_exact)
        ws = []
        exact_hit = None
        for q, v, boxes in pieces:
            w = weight(pt, boxes)
            ws.append(w)
            if exact_hit is None and q.contains(pt_exact):
                exact_hit = v
        positives = [i for i, w in enumerate(ws) if w > 0.0]
        if exact_hit is not None and len(positives) <= 1:
            return exact_hit
        total = sum(ws)
        if total == 0.0:
            return _nearest_float_value(pieces, pt)
        return tuple(
            sum(ws[i] * pieces[i][1][k] for i in positives) / total
            for k in range(beta)
        )

    return ContinuousExtension(g, m_red, lip)


def _nearest_float_value(pieces, pt):
    best, best_d = None, None
    for _, v, boxes in pieces:
        for lo, hi in boxes:
            d = sum(
                max(float(lo[j]) - c, c - float(hi[j]), 0.0) ** 2
                for j, c in enumerate(pt)
            )
            if best_d is None or d < best_d:
                best, best_d = v, d
    return best


# ---------------------------------------------------------------------------
# weak finite adjacency


@dataclass(frozen=True)
class AdjacencyReport:
    ok: bool
    delta: Fraction
    offending_cell: BasicSet | None = None


def check_weak_finite_adjacency(
    dom: RepresentableDomain,
    delta: Fraction | None = None,
    max_cells_per_axis: int = 12,
) -> AdjacencyReport:
    """Probe a delta-cover of the ambient box.

    Each probe box must be covered by the delta-inflated carrier parts
    it meets; a region no inflated part reaches is reported as the
    offending cell.
    """
    parts = [p for it in dom.carrier.items for p in it.parts]
    dim = dom.dim
    if delta is None:
        m = dom.witness(Fraction(1, 16))
        if m.is_empty:
            delta = Fraction(1, 8)
        else:
            delta = min(
                min(p.hi[j] - p.lo[j] for j in range(dim) if p.hi[j] > p.lo[j])
                for p in m.parts
            ) / 2
    delta = as_fraction(delta)
    inflated = [p.inflate(delta) for p in parts]

    steps = []
    for j in range(dim):
        extent = dom.ambient.hi[j] - dom.ambient.lo[j]
        n = min(max_cells_per_axis, max(1, int(extent / delta)))
        steps.append((extent / n, n))

    def rec(j, lo_acc):
        if j == dim:
            lo = lo_acc
            hi = [lo[k] + steps[k][0] for k in range(dim)]
            cell = BasicSet.closed_box(lo, hi)
            meet = [b for b in inflated if b.intersects(cell)]
            rest = GeneralizedBasicSet.of([cell], dim=dim)
            for b in meet:
                rest = rest.subtract(b)
                if rest.is_empty:
                    break
            if not rest.is_empty:
                return cell
            return None
        step, n = steps[j]
        for i in range(n):
            bad = rec(j + 1, lo_acc + [dom.ambient.lo[j] + i * step])
            if bad is not None:
                return bad
        return None

    bad = rec(0, [])
    if bad is not None:
        return AdjacencyReport(False, delta, bad)
    return AdjacencyReport(True, delta)


# ---------------------------------------------------------------------------
# serialization


def domain_to_json(dom: RepresentableDomain) -> dict:
    return {
        **sequence_to_json(dom.carrier),
        "ambient": gbs_to_json(
            GeneralizedBasicSet.of([dom.ambient], dim=dom.ambient.dim)
        )["parts"][0],
        "witness_budget_rule": dom.budget_rule,
    }


def domain_from_json(obj: dict) -> RepresentableDomain:
    from .setalg import basic_set_from_json

    carrier = sequence_from_json(obj)
    ambient = basic_set_from_json(obj["ambient"], int(obj["dim"]))
    return RepresentableDomain.from_carrier(
        carrier, ambient, obj.get("witness_budget_rule", "geometric")
    )
