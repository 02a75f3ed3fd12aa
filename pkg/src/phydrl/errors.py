"""Exception types shared across the package."""


class PhyDRLError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PhyDRLError, ValueError):
    pass


class EmptyRow(PhyDRLError, ValueError):
    """A safety-set row whose normalization factor is zero or whose slab is empty."""


class SingularP(PhyDRLError, ArithmeticError):
    """The envelope matrix is too ill-conditioned to invert reliably."""


class Infeasible(PhyDRLError):
    pass


class NotConverged(PhyDRLError):
    pass


class Unsupported(PhyDRLError, NotImplementedError):
    pass


class InvalidOrder(PhyDRLError, ValueError):
    pass


class IndexOutOfRange(PhyDRLError, IndexError):
    pass


class NonFinite(PhyDRLError, FloatingPointError):
    pass


class RegionEmpty(PhyDRLError, RuntimeError):
    pass


class OutOfSupport(PhyDRLError, ValueError):
    pass
