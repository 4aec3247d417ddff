"""Exception types shared across the toolkit."""


class OutOfBandError(ValueError):
    """Raised when k-space locations fall outside the representable band.

    Carries the number of offending locations in ``count``.
    """

    def __init__(self, count, band=None):
        self.count = int(count)
        self.band = band
        msg = f"{self.count} k-space location(s) outside the valid band"
        if band is not None:
            msg += f" [{-band:.6g}, {band:.6g})"
        super().__init__(msg)


class EmptyCoverageError(ValueError):
    """Raised when registration discards every acquired sample."""


class FormatError(ValueError):
    """Raised on malformed volume files; ``offset`` is the byte position."""

    def __init__(self, message, offset):
        self.offset = int(offset)
        super().__init__(f"{message} (at byte offset {self.offset})")


class NumericalError(ArithmeticError):
    """Raised when a computation is too ill-conditioned to continue."""
