"""Exception hierarchy shared by all chaudit modules."""


class ChauditError(Exception):
    """Base class for every error raised by this package."""


# -- record grammar ----------------------------------------------------------

class MalformedRecord(ChauditError):
    """A changelog line violates the grammar.

    Carries the byte position where parsing failed and a human reason.
    """

    def __init__(self, position: int, reason: str):
        super().__init__(f"at {position}: {reason}")
        self.position = position
        self.reason = reason


class UnknownType(ChauditError):
    """Record type name or code outside the known table."""


# -- simulated filesystem ----------------------------------------------------

class FsError(ChauditError):
    """Base for POSIX-style failures of the simulated namespace."""


class NoEnt(FsError):
    pass


class Exists(FsError):
    pass


class NotDir(FsError):
    pass


class IsDir(FsError):
    pass


class NotEmpty(FsError):
    pass


class PermissionDenied(FsError):
    pass


class NoSpace(FsError):
    pass


class UnknownDevice(ChauditError):
    pass


class UnknownUser(ChauditError):
    pass


class IndexOutOfRange(ChauditError):
    pass


class ScriptParse(ChauditError):
    """Workload script rejected; carries the 1-based line number."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# -- store -------------------------------------------------------------------

class StoreError(ChauditError):
    pass


class ConflictError(StoreError):
    """Same (device, index) appended twice with different content."""


class IoError(StoreError):
    pass


class UnknownCollection(StoreError):
    pass


class BadCursor(StoreError):
    pass


class BadSpec(StoreError):
    pass


class StoreUnavailable(StoreError):
    pass


# -- collector ---------------------------------------------------------------

class DeviceUnavailable(ChauditError):
    pass


class CollectorLocked(ChauditError):
    """Another collector already holds the per-device lock."""
