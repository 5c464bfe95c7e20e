"""Exact algebra of basic and generalized sets.

Basic sets are axis-aligned boxes in dimension 1..3 with exact rational
corners and per-face closure flags, so differences like
``[0,1] \\ (1/4,1/2)`` come out exactly as ``[0,1/4] u [1/2,1]``.  A
generalized basic set is a finite union of basic sets.  The measure is
overlap-blind: it sums part volumes without subtracting intersections,
and singletons, box boundaries and the empty set weigh zero.

The countable reduction rewrites a sequence of generalized sets into
pairwise-disjoint subsets covering the same union up to boundary
points, subtracting parts in the order given by a pairing bijection
over (set index, part index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .errors import InputError
from .rational import as_fraction, rational_from_json, rational_to_json

MAX_DIM = 3

Point = tuple[Fraction, ...]


class SetAlgebraError(InputError):
    """Raised on malformed set-algebra inputs."""


def _aspoint(x: Sequence, dim: int) -> Point:
    pt = tuple(as_fraction(c) for c in x)
    if len(pt) != dim:
        raise SetAlgebraError(f"point dimension {len(pt)} != set dimension {dim}")
    return pt


# ---------------------------------------------------------------------------
# basic sets


@dataclass(frozen=True)
class BasicSet:
    """Axis-aligned box with per-face closure flags.

    Degenerate axes (lo == hi, both faces closed) represent singletons
    and lower-dimensional faces.  An axis with lo > hi, or lo == hi
    without both faces closed, makes the whole set empty.
    """

    dim: int
    lo: Point
    hi: Point
    closed_lo: tuple[bool, ...]
    closed_hi: tuple[bool, ...]

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise SetAlgebraError(f"dimension {self.dim} outside 1..{MAX_DIM}")
        for field in (self.lo, self.hi, self.closed_lo, self.closed_hi):
            if len(field) != self.dim:
                raise SetAlgebraError("per-axis field length mismatch")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def box(lo: Sequence, hi: Sequence, closed_lo=None, closed_hi=None) -> "BasicSet":
        lo_ = tuple(as_fraction(c) for c in lo)
        hi_ = tuple(as_fraction(c) for c in hi)
        d = len(lo_)
        if closed_lo is None:
            closed_lo = (False,) * d
        if closed_hi is None:
            closed_hi = (False,) * d
        if isinstance(closed_lo, bool):
            closed_lo = (closed_lo,) * d
        if isinstance(closed_hi, bool):
            closed_hi = (closed_hi,) * d
        return BasicSet(d, lo_, hi_, tuple(closed_lo), tuple(closed_hi))

    @staticmethod
    def open_box(lo: Sequence, hi: Sequence) -> "BasicSet":
        return BasicSet.box(lo, hi, False, False)

    @staticmethod
    def closed_box(lo: Sequence, hi: Sequence) -> "BasicSet":
        return BasicSet.box(lo, hi, True, True)

    @staticmethod
    def singleton(point: Sequence) -> "BasicSet":
        return BasicSet.closed_box(point, point)

    @staticmethod
    def empty(dim: int) -> "BasicSet":
        z = (Fraction(0),) * dim
        return BasicSet(dim, z, z, (False,) * dim, (False,) * dim)

    @staticmethod
    def interval(lo, hi, closed_lo=False, closed_hi=False) -> "BasicSet":
        return BasicSet.box([lo], [hi], [closed_lo], [closed_hi])

    # -- structure ---------------------------------------------------------

    def _axis_empty(self, j: int) -> bool:
        if self.lo[j] > self.hi[j]:
            return True
        if self.lo[j] == self.hi[j]:
            return not (self.closed_lo[j] and self.closed_hi[j])
        return False

    @property
    def is_empty(self) -> bool:
        return any(self._axis_empty(j) for j in range(self.dim))

    def axis_degenerate(self, j: int) -> bool:
        return self.lo[j] == self.hi[j]

    @property
    def kind(self) -> str:
        if self.is_empty:
            return "empty"
        if all(self.axis_degenerate(j) for j in range(self.dim)):
            return "singleton"
        if all(
            not self.closed_lo[j] and not self.closed_hi[j] and self.lo[j] < self.hi[j]
            for j in range(self.dim)
        ):
            return "open-box"
        return "box"

    def measure(self) -> Fraction:
        """Geometric volume; zero for empty, singletons and faces."""
        if self.is_empty:
            return Fraction(0)
        vol = Fraction(1)
        for j in range(self.dim):
            vol *= self.hi[j] - self.lo[j]
        return vol

    def contains(self, point: Sequence) -> bool:
        if self.is_empty:
            return False
        pt = _aspoint(point, self.dim)
        for j in range(self.dim):
            c = pt[j]
            if c < self.lo[j] or c > self.hi[j]:
                return False
            if c == self.lo[j] and not self.closed_lo[j]:
                return False
            if c == self.hi[j] and not self.closed_hi[j]:
                return False
        return True

    # -- algebra -----------------------------------------------------------

    def intersect(self, other: "BasicSet") -> "BasicSet":
        _check_dims(self, other)
        lo, hi, clo, chi = [], [], [], []
        for j in range(self.dim):
            a_lo, a_clo = self.lo[j], self.closed_lo[j]
            b_lo, b_clo = other.lo[j], other.closed_lo[j]
            if a_lo > b_lo:
                nlo, nclo = a_lo, a_clo
            elif b_lo > a_lo:
                nlo, nclo = b_lo, b_clo
            else:
                nlo, nclo = a_lo, a_clo and b_clo
            a_hi, a_chi = self.hi[j], self.closed_hi[j]
            b_hi, b_chi = other.hi[j], other.closed_hi[j]
            if a_hi < b_hi:
                nhi, nchi = a_hi, a_chi
            elif b_hi < a_hi:
                nhi, nchi = b_hi, b_chi
            else:
                nhi, nchi = a_hi, a_chi and b_chi
            lo.append(nlo)
            hi.append(nhi)
            clo.append(nclo)
            chi.append(nchi)
        out = BasicSet(self.dim, tuple(lo), tuple(hi), tuple(clo), tuple(chi))
        return out if not out.is_empty else BasicSet.empty(self.dim)

    def intersects(self, other: "BasicSet") -> bool:
        return not self.intersect(other).is_empty

    def subtract(self, other: "BasicSet") -> list["BasicSet"]:
        """Guillotine difference; pieces are pairwise disjoint."""
        if self.is_empty:
            return []
        if other.is_empty or not self.intersects(other):
            return [self]
        pieces: list[BasicSet] = []
        cur = self
        for j in range(self.dim):
            left = _clip_axis_hi(cur, j, other.lo[j], not other.closed_lo[j])
            if left is not None:
                pieces.append(left)
            right = _clip_axis_lo(cur, j, other.hi[j], not other.closed_hi[j])
            if right is not None:
                pieces.append(right)
            cur = _clip_axis_mid(cur, j, other, j)
            # the boxes intersect on every axis, so the middle slab survives
            assert cur is not None
        # the all-middle core lies inside `other`: dropped
        return pieces

    def faces(self) -> list["BasicSet"]:
        """Boundary of the box as closed degenerate boxes.

        A fully degenerate part is its own boundary.  For each
        non-degenerate axis the two opposing faces are emitted with the
        remaining axes closed.
        """
        if self.is_empty:
            return []
        nondeg = [j for j in range(self.dim) if not self.axis_degenerate(j)]
        if not nondeg:
            return [self.closure()]
        out = []
        closed = self.closure()
        for j in nondeg:
            for v in (self.lo[j], self.hi[j]):
                lo = list(closed.lo)
                hi = list(closed.hi)
                lo[j] = hi[j] = v
                out.append(BasicSet.closed_box(lo, hi))
        return out

    def closure(self) -> "BasicSet":
        if self.is_empty:
            return self
        return BasicSet(
            self.dim, self.lo, self.hi, (True,) * self.dim, (True,) * self.dim
        )

    def interior_open(self) -> "BasicSet":
        """All-open variant (empty if any axis is degenerate)."""
        out = BasicSet(
            self.dim, self.lo, self.hi, (False,) * self.dim, (False,) * self.dim
        )
        return out if not out.is_empty else BasicSet.empty(self.dim)

    def inflate(self, r: Fraction) -> "BasicSet":
        """Closed box grown by r on every face."""
        r = as_fraction(r)
        return BasicSet.closed_box(
            [c - r for c in self.lo], [c + r for c in self.hi]
        )

    def dist2_point(self, point: Sequence) -> Fraction:
        """Exact squared Euclidean distance from a point to the closure."""
        if self.is_empty:
            raise SetAlgebraError("distance to the empty set is infinite")
        pt = _aspoint(point, self.dim)
        acc = Fraction(0)
        for j in range(self.dim):
            if pt[j] < self.lo[j]:
                gap = self.lo[j] - pt[j]
            elif pt[j] > self.hi[j]:
                gap = pt[j] - self.hi[j]
            else:
                continue
            acc += gap * gap
        return acc

    def __repr__(self) -> str:
        if self.is_empty:
            return f"BasicSet.empty({self.dim})"
        axes = []
        for j in range(self.dim):
            l = "[" if self.closed_lo[j] else "("
            r = "]" if self.closed_hi[j] else ")"
            axes.append(f"{l}{self.lo[j]},{self.hi[j]}{r}")
        return "x".join(axes)


def _check_dims(a, b) -> None:
    if a.dim != b.dim:
        raise SetAlgebraError(f"dimension mismatch {a.dim} != {b.dim}")


def _clip_axis_hi(box: BasicSet, j: int, v: Fraction, closed: bool) -> BasicSet | None:
    """Intersect `box` with {x_j < v} (or <= v when closed)."""
    hi, chi = box.hi[j], box.closed_hi[j]
    if v > hi:
        nhi, nchi = hi, chi
    elif v == hi:
        nhi, nchi = hi, chi and closed
    else:
        nhi, nchi = v, closed
    out = _replace_axis(box, j, box.lo[j], nhi, box.closed_lo[j], nchi)
    return out if not out.is_empty else None


def _clip_axis_lo(box: BasicSet, j: int, v: Fraction, closed: bool) -> BasicSet | None:
    """Intersect `box` with {x_j > v} (or >= v when closed)."""
    lo, clo = box.lo[j], box.closed_lo[j]
    if v < lo:
        nlo, nclo = lo, clo
    elif v == lo:
        nlo, nclo = lo, clo and closed
    else:
        nlo, nclo = v, closed
    out = _replace_axis(box, j, nlo, box.hi[j], nclo, box.closed_hi[j])
    return out if not out.is_empty else None


def _clip_axis_mid(box: BasicSet, j: int, other: BasicSet, k: int) -> BasicSet | None:
    """Intersection of `box` with `other`'s axis-k extent, on axis j."""
    a_lo, a_clo = box.lo[j], box.closed_lo[j]
    b_lo, b_clo = other.lo[k], other.closed_lo[k]
    if a_lo > b_lo:
        nlo, nclo = a_lo, a_clo
    elif b_lo > a_lo:
        nlo, nclo = b_lo, b_clo
    else:
        nlo, nclo = a_lo, a_clo and b_clo
    a_hi, a_chi = box.hi[j], box.closed_hi[j]
    b_hi, b_chi = other.hi[k], other.closed_hi[k]
    if a_hi < b_hi:
        nhi, nchi = a_hi, a_chi
    elif b_hi < a_hi:
        nhi, nchi = b_hi, b_chi
    else:
        nhi, nchi = a_hi, a_chi and b_chi
    out = _replace_axis(box, j, nlo, nhi, nclo, nchi)
    return out if not out.is_empty else None


def _replace_axis(box: BasicSet, j: int, lo, hi, clo, chi) -> BasicSet:
    los, his = list(box.lo), list(box.hi)
    clos, chis = list(box.closed_lo), list(box.closed_hi)
    los[j], his[j], clos[j], chis[j] = lo, hi, clo, chi
    return BasicSet(box.dim, tuple(los), tuple(his), tuple(clos), tuple(chis))


# ---------------------------------------------------------------------------
# generalized basic sets


@dataclass(frozen=True)
class GeneralizedBasicSet:
    """Finite union of basic sets; empties are normalized away."""

    dim: int
    parts: tuple[BasicSet, ...]

    def __post_init__(self):
        for p in self.parts:
            if p.dim != self.dim:
                raise SetAlgebraError("part dimension mismatch")

    @staticmethod
    def of(parts: Iterable[BasicSet], dim: int | None = None) -> "GeneralizedBasicSet":
        kept = tuple(p for p in parts if not p.is_empty)
        if dim is None:
            if not kept:
                raise SetAlgebraError("dimension required for the empty union")
            dim = kept[0].dim
        return GeneralizedBasicSet(dim, kept)

    @staticmethod
    def empty(dim: int) -> "GeneralizedBasicSet":
        return GeneralizedBasicSet(dim, ())

    @property
    def is_empty(self) -> bool:
        return not self.parts

    def measure(self) -> Fraction:
        """Overlap-blind: plain sum of part volumes."""
        return sum((p.measure() for p in self.parts), Fraction(0))

    def contains(self, point: Sequence) -> bool:
        return any(p.contains(point) for p in self.parts)

    @cached_property
    def gamma(self) -> tuple[BasicSet, ...]:
        """Endpoint set: union of the boundaries of all parts."""
        out: list[BasicSet] = []
        seen = set()
        for p in self.parts:
            for f in p.faces():
                key = (f.lo, f.hi)
                if key not in seen:
                    seen.add(key)
                    out.append(f)
        return tuple(out)

    def gamma_contains(self, point: Sequence) -> bool:
        return any(f.contains(point) for f in self.gamma)

    def essential_gamma(self) -> tuple[BasicSet, ...]:
        """Part boundaries minus the open interiors of all parts.

        This is the boundary that matters for well-containment checks:
        a face buried inside another part's interior does not separate
        anything.
        """
        interiors = [p.interior_open() for p in self.parts]
        interiors = [p for p in interiors if not p.is_empty]
        out: list[BasicSet] = []
        for f in self.gamma:
            rem = [f]
            for q in interiors:
                rem = [piece for r in rem for piece in r.subtract(q)]
                if not rem:
                    break
            out.extend(rem)
        return tuple(out)

    def subtract(self, other: "GeneralizedBasicSet | BasicSet") -> "GeneralizedBasicSet":
        parts = list(self.parts)
        subtrahends = other.parts if isinstance(other, GeneralizedBasicSet) else (other,)
        for b in subtrahends:
            parts = [piece for p in parts for piece in p.subtract(b)]
            if not parts:
                break
        return GeneralizedBasicSet(self.dim, tuple(parts))

    def intersect(self, other: "GeneralizedBasicSet | BasicSet") -> "GeneralizedBasicSet":
        others = other.parts if isinstance(other, GeneralizedBasicSet) else (other,)
        parts = []
        for p in self.parts:
            for q in others:
                r = p.intersect(q)
                if not r.is_empty:
                    parts.append(r)
        return GeneralizedBasicSet(self.dim, tuple(parts))

    def issubset(self, other: "GeneralizedBasicSet") -> bool:
        """Exact containment, closure flags included."""
        return self.subtract(other).is_empty

    def disjoint_from(self, other: "GeneralizedBasicSet") -> bool:
        for p in self.parts:
            for q in other.parts:
                if p.intersects(q):
                    return False
        return True

    def bounding_box(self) -> BasicSet | None:
        if self.is_empty:
            return None
        lo = [min(p.lo[j] for p in self.parts) for j in range(self.dim)]
        hi = [max(p.hi[j] for p in self.parts) for j in range(self.dim)]
        return BasicSet.closed_box(lo, hi)

    def __repr__(self) -> str:
        if self.is_empty:
            return f"GBS.empty({self.dim})"
        return " u ".join(repr(p) for p in self.parts)


GBS = GeneralizedBasicSet


# ---------------------------------------------------------------------------
# measure / distance entry points


def measure(s: GeneralizedBasicSet | BasicSet) -> Fraction:
    return s.measure()


def set_difference(a: BasicSet, bs: GeneralizedBasicSet) -> GeneralizedBasicSet:
    """Exact a \\ bs with correct closure flags."""
    _check_dims(a, bs)
    return GeneralizedBasicSet(a.dim, (a,)).subtract(bs)


def dist_point_set(x: Sequence, s: GeneralizedBasicSet | BasicSet) -> float:
    """Euclidean infimum distance; +inf to the empty set.

    The infimum over a box ignores closure flags, but membership is
    honored first so interior points return exactly 0.
    """
    parts = s.parts if isinstance(s, GeneralizedBasicSet) else (s,)
    parts = [p for p in parts if not p.is_empty]
    if not parts:
        return math.inf
    dim = parts[0].dim
    pt = _aspoint(x, dim)
    best: Fraction | None = None
    for p in parts:
        if p.contains(pt):
            return 0.0
        d2 = p.dist2_point(pt)
        if best is None or d2 < best:
            best = d2
    return math.sqrt(best)


def dist2_point_set(x: Sequence, s: GeneralizedBasicSet) -> Fraction | None:
    """Exact squared distance to the closure; None for the empty set."""
    if s.is_empty:
        return None
    dim = s.parts[0].dim
    pt = _aspoint(x, dim)
    return min(p.dist2_point(pt) for p in s.parts)


# ---------------------------------------------------------------------------
# pairing bijections and set sequences

PAIRINGS = ("cantor", "rowmajor")


def flatten_index(n: int, m: int) -> int:
    """Cantor pairing N^2 -> N."""
    s = n + m
    return s * (s + 1) // 2 + m


def unflatten_index(z: int) -> tuple[int, int]:
    w = (math.isqrt(8 * z + 1) - 1) // 2
    t = w * (w + 1) // 2
    m = z - t
    return w - m, m


@dataclass(frozen=True)
class SetSequence:
    """Ordered sequence of generalized basic sets plus its pairing order.

    The pairing fixes the order in which double indices (set, part) are
    flattened for the countable reduction: "cantor" sorts by the Cantor
    pairing value, "rowmajor" enumerates all parts of item 0, then of
    item 1, and so on (used where the lowest set index must win ties).
    """

    items: tuple[GeneralizedBasicSet, ...]
    pairing: str = "cantor"

    def __post_init__(self):
        if self.pairing not in PAIRINGS:
            raise SetAlgebraError(f"unknown pairing {self.pairing!r}")
        dims = {it.dim for it in self.items}
        if len(dims) > 1:
            raise SetAlgebraError("mixed dimensions in sequence")

    @staticmethod
    def of(items: Iterable, pairing: str = "cantor") -> "SetSequence":
        out = []
        for it in items:
            if isinstance(it, BasicSet):
                it = GeneralizedBasicSet.of([it], dim=it.dim)
            out.append(it)
        return SetSequence(tuple(out), pairing)

    @property
    def dim(self) -> int:
        if not self.items:
            raise SetAlgebraError("empty sequence has no dimension")
        return self.items[0].dim

    def union_parts(self) -> list[BasicSet]:
        return [p for it in self.items for p in it.parts]

    def as_gbs(self) -> GeneralizedBasicSet:
        return GeneralizedBasicSet(self.dim, tuple(self.union_parts()))

    def measure(self) -> Fraction:
        return sum((it.measure() for it in self.items), Fraction(0))

    def contains(self, point: Sequence) -> bool:
        return any(it.contains(point) for it in self.items)

    def gamma(self) -> tuple[BasicSet, ...]:
        return self.as_gbs().gamma

    def flat_order(self) -> list[tuple[int, int]]:
        """Used (set, part) index pairs in subtraction order."""
        pairs = [
            (n, m) for n, it in enumerate(self.items) for m in range(len(it.parts))
        ]
        if self.pairing == "cantor":
            pairs.sort(key=lambda nm: flatten_index(*nm))
        return pairs


def countable_reduction(xs: SetSequence) -> SetSequence:
    """Pairwise-disjoint subsets K_n <= J_n covering the union densely.

    Each flattened part has every earlier part (in pairing order)
    subtracted from it; K_n collects the surviving pieces of J_n's
    parts.  No new endpoints appear and the overlap-blind measure of
    the union is preserved.
    """
    order = xs.flat_order()
    dim = xs.dim if xs.items else 1
    reduced_parts: dict[tuple[int, int], list[BasicSet]] = {}
    earlier: list[BasicSet] = []
    for n, m in order:
        part = xs.items[n].parts[m]
        pieces = [part]
        for b in earlier:
            pieces = [q for p in pieces for q in p.subtract(b)]
            if not pieces:
                break
        reduced_parts[(n, m)] = pieces
        earlier.append(part)
    out_items = []
    for n, it in enumerate(xs.items):
        parts = []
        for m in range(len(it.parts)):
            parts.extend(reduced_parts[(n, m)])
        out_items.append(GeneralizedBasicSet(dim, tuple(parts)))
    return SetSequence(tuple(out_items), xs.pairing)


# ---------------------------------------------------------------------------
# JSON interchange


def basic_set_to_json(b: BasicSet) -> dict:
    if b.is_empty:
        return {"kind": "empty"}
    return {
        "kind": b.kind,
        "lo": [rational_to_json(c) for c in b.lo],
        "hi": [rational_to_json(c) for c in b.hi],
        "closed_lo": list(b.closed_lo),
        "closed_hi": list(b.closed_hi),
    }


def basic_set_from_json(obj: dict, dim: int) -> BasicSet:
    if obj.get("kind") == "empty":
        return BasicSet.empty(dim)
    try:
        lo = [rational_from_json(c) for c in obj["lo"]]
        hi = [rational_from_json(c) for c in obj["hi"]]
    except KeyError as e:
        raise SetAlgebraError(f"missing corner field {e}") from e
    closed_lo = obj.get("closed_lo", [False] * dim)
    closed_hi = obj.get("closed_hi", [False] * dim)
    if obj.get("kind") == "singleton":
        closed_lo = closed_hi = [True] * dim
    b = BasicSet.box(lo, hi, closed_lo, closed_hi)
    if b.dim != dim:
        raise SetAlgebraError(f"part dimension {b.dim} != declared {dim}")
    return b


def gbs_to_json(s: GeneralizedBasicSet) -> dict:
    return {"dim": s.dim, "parts": [basic_set_to_json(p) for p in s.parts]}


def gbs_from_json(obj: dict) -> GeneralizedBasicSet:
    dim = int(obj["dim"])
    parts = [basic_set_from_json(p, dim) for p in obj.get("parts", [])]
    return GeneralizedBasicSet.of(parts, dim=dim)


def sequence_to_json(xs: SetSequence) -> dict:
    return {
        "dim": xs.items[0].dim if xs.items else 1,
        "pairing": xs.pairing,
        "items": [gbs_to_json(it) for it in xs.items],
    }


def sequence_from_json(obj: dict) -> SetSequence:
    dim = int(obj.get("dim", 1))
    items = []
    for it in obj.get("items", []):
        if "dim" not in it:
            it = dict(it, dim=dim)
        items.append(gbs_from_json(it))
    return SetSequence(tuple(items), obj.get("pairing", "cantor"))
