"""Exception types shared across the package."""


class AmalgamError(Exception):
    """Base class for all package-specific errors."""


class SignatureMismatch(AmalgamError):
    """Two objects that must share a signature do not."""


class InvalidStructure(AmalgamError):
    """A structure, map, or system violates a well-formedness requirement."""


class InvalidMap(AmalgamError):
    """A claimed embedding / partial isomorphism fails verification."""


class UnsupportedBase(AmalgamError):
    """The underlying class lacks a property a higher-level solver needs."""


class BudgetExceeded(AmalgamError):
    """A search exceeded an explicit resource budget.

    Raised only where the caller asked for a hard failure; bounded searches
    normally report a ``NoneUpTo`` verdict instead.
    """
