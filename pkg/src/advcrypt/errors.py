"""Exception hierarchy shared by all advcrypt modules."""


class AdvcryptError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AdvcryptError, ValueError):
    """A contract precondition or invariant was violated by the caller."""


class LoadError(AdvcryptError, RuntimeError):
    """A dataset, checkpoint, or config could not be read or decoded."""


class IntegrityError(AdvcryptError, RuntimeError):
    """Stored artifact does not match its recorded digest or metadata."""


class TrainingError(AdvcryptError, RuntimeError):
    """Model training diverged or otherwise failed."""


class AttackError(AdvcryptError, RuntimeError):
    """A per-sample perturbation job failed (e.g. non-finite gradients)."""
