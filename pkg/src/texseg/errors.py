"""Exception types shared across the package.

The command line maps these onto exit codes: bad flags or config values are
usage errors, unreadable or malformed files are I/O errors, and everything
that diverges or produces non-finite numbers is a numerical failure.
"""


class UsageError(ValueError):
    """Bad option, config key, or parameter combination."""


class FormatError(ValueError):
    """A file exists and was read, but its contents are not what we expect."""


class NumericalError(ArithmeticError):
    """A solver produced non-finite values or could not make progress."""
