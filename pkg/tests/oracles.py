"""Independent oracles used to cross-check the package.

These deliberately avoid the package's own set algebra: the union
measure works on an integer-scaled cell decomposition with midpoint
membership, and the brute-force selector enumerates mesh points times
cells literally.
"""

from __future__ import annotations

from fractions import Fraction
from math import lcm


def _scaled_boxes(parts):
    """Scale all corners to one integer grid (x2 so midpoints stay integral)."""
    if not parts:
        return [], 1
    denoms = [c.denominator for b in parts for c in (*b[0], *b[1])]
    scale = 2 * lcm(*denoms)
    out = []
    for lo, hi in parts:
        out.append(
            (
                tuple(int(c * scale) for c in lo),
                tuple(int(c * scale) for c in hi),
            )
        )
    return out, scale


def union_measure(parts) -> Fraction:
    """Measure of a union of boxes, counting overlaps once.

    `parts` is an iterable of (lo_tuple, hi_tuple) of Fractions (closure
    flags are irrelevant for measure).  Cell decomposition: cut space at
    every corner coordinate, keep cells whose midpoint lies strictly
    inside some box.
    """
    parts = [(tuple(lo), tuple(hi)) for lo, hi in parts]
    parts = [p for p in parts if all(l < h for l, h in zip(p[0], p[1]))]
    if not parts:
        return Fraction(0)
    dim = len(parts[0][0])
    boxes, scale = _scaled_boxes(parts)
    axes = []
    for j in range(dim):
        coords = sorted({b[0][j] for b in boxes} | {b[1][j] for b in boxes})
        axes.append(coords)

    total = 0
    # iterate the cell grid without building the full product in memory
    def rec(j, mids, vol):
        nonlocal total
        if j == dim:
            for lo, hi in boxes:
                if all(lo[k] < mids[k] < hi[k] for k in range(dim)):
                    total += vol
                    return
            return
        cs = axes[j]
        for a, b in zip(cs, cs[1:]):
            rec(j + 1, mids + [(a + b) // 2], vol * (b - a))

    rec(0, [], 1)
    return Fraction(total, scale**dim)


def gbs_boxes(gbs):
    """Corner pairs of a GeneralizedBasicSet for the oracle above."""
    return [(p.lo, p.hi) for p in gbs.parts]


def seq_boxes(seq):
    return [(p.lo, p.hi) for it in seq.items for p in it.parts]


def brute_force_selector(F, n):
    """Literal mesh-sweep extraction on a cellwise SVF with cell-aligned pieces.

    Enumerates every mesh point against every cell, applies the two
    acceptance tests verbatim, and reduces by first-come-first-served in
    mesh order (first-come reduction at cell granularity).  Returns,
    per level 2..n, a dict cell_index -> mesh value tuple.
    """
    beta = F.beta
    from selectorkit.setalg import dist2_point_set

    f_prev = {ci: F.range_map.normalize([0] * beta) for ci in range(len(F.cells))}
    levels = []
    for k in range(2, n + 1):
        pitch = Fraction(1, 2 ** (k + 1))
        n_ax = 2 ** (k + 1) + 1
        mesh = []

        def rec(prefix):
            if len(prefix) == beta:
                mesh.append(tuple(prefix))
                return
            for i in range(n_ax):
                rec(prefix + [pitch * i])

        rec([])
        eps2 = Fraction(1, 2**k) ** 2
        gap2 = Fraction(1, 2 ** (k - 1)) ** 2
        assign = {}
        for i, r in enumerate(mesh):
            for ci in range(len(F.cells)):
                if ci in assign or ci not in f_prev:
                    continue
                vals = F.normalized_values(ci)
                c_ok = dist2_point_set(r, vals) < eps2
                pv = f_prev[ci]
                d_ok = sum((a - b) * (a - b) for a, b in zip(r, pv)) < gap2
                if c_ok and d_ok:
                    assign[ci] = r
        if set(assign) != set(f_prev):
            raise AssertionError(f"oracle coverage loss at level {k}")
        levels.append(assign)
        f_prev = assign
    return levels
