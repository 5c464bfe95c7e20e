"""Constructive measurable-selector toolkit.

Exact generalized-set algebra and countable reduction, representable
domains and set-valued functions, selector extraction to precision
2**-n, a Filippov iteration solver for Lipschitzean differential
inclusions, and the three-wheel-robot stabilization case study.
"""

__version__ = "0.1.0"
