"""Exception types shared across the package."""

from __future__ import annotations


class PhysvoiceError(Exception):
    """Base class for every error raised by this package."""


class EmptySignal(PhysvoiceError, ValueError):
    """A waveform or sample buffer contained no samples."""


class SequenceTooShort(PhysvoiceError, ValueError):
    """An embedding sequence has too few frames for the requested derivative."""


class ShapeError(PhysvoiceError, ValueError):
    """An array does not have the shape a contract requires."""


class FormatError(PhysvoiceError, ValueError):
    """A file on disk does not match its declared binary or text layout."""


class DegenerateLabels(PhysvoiceError, ValueError):
    """A training set contains fewer than two distinct classes."""


class EmptyClass(PhysvoiceError, ValueError):
    """A metric was asked to compare score sets where one class is empty."""


class BadCosts(PhysvoiceError, ValueError):
    """Detection-cost parameters are out of range (negative costs, priors off the simplex)."""


class EmptyShard(PhysvoiceError, ValueError):
    """A federated client was constructed with no local data."""


class TooFewClients(PhysvoiceError, ValueError):
    """Robust screening needs at least three client reports."""


class RoundAborted(PhysvoiceError, RuntimeError):
    """Every client update in a federated round was rejected."""


class ScenarioError(PhysvoiceError, ValueError):
    """A federated scenario configuration is invalid."""
