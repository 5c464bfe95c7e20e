"""Shared exception hierarchy.

InputError covers malformed user input (CLI exit code 3);
ContractViolation covers runtime contract failures surfaced by the
numeric machinery (CLI exit code 2).
"""


class InputError(ValueError):
    """Malformed input: bad JSON, wrong dimensions, unparseable scalars."""


class ContractViolation(Exception):
    """A module contract failed at runtime."""


class WitnessError(ContractViolation):
    """Witness construction or validation failed (non-representable input)."""


class AdjacencyError(ContractViolation):
    """Weak finite adjacency check failed; carries the offending cell."""

    def __init__(self, cell):
        super().__init__(f"weak finite adjacency fails at probe cell {cell!r}")
        self.cell = cell


class InhabitednessError(ContractViolation):
    """A value set or selector net is empty."""


class PrecisionError(ContractViolation):
    """Requested precision unattainable for the given discretization."""


class CoverageError(ContractViolation):
    """Extraction step lost domain coverage beyond the witness budget."""

    def __init__(self, message, region=None):
        super().__init__(message)
        self.region = region


class DomainPointError(ContractViolation):
    """Query point outside the working box."""
