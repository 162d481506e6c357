"""Exception types shared across the package."""


class BrachyError(Exception):
    """Base class for all domain errors."""


class InclinationExceeded(BrachyError):
    """Requested needle inclination is beyond the mechanism's limit."""

    def __init__(self, inclination: float, limit: float):
        self.inclination = inclination
        self.limit = limit
        super().__init__(f"inclination {inclination:.3f} deg exceeds limit {limit:.3f} deg")


class TravelExceeded(BrachyError):
    """One or more joints fall outside their travel range.

    ``joints`` lists (name, value, lo, hi) for every offending joint.
    """

    def __init__(self, joints: list[tuple[str, float, float, float]]):
        self.joints = joints
        detail = "; ".join(f"{n}={v:.3f} outside [{lo:.3f}, {hi:.3f}]" for n, v, lo, hi in joints)
        super().__init__(f"travel exceeded: {detail}")


class IndexOutOfGrid(BrachyError):
    """Template grid index outside the hole pattern."""


class NoAccess(BrachyError):
    """No needle direction within the inclination limit clears the obstacles."""


class NotPermitted(BrachyError):
    """Manual retraction attempted while the drive is engaged in normal operation."""


class NotAtHome(BrachyError):
    """Re-engagement attempted before the needle was fully retracted."""


class ParseError(BrachyError):
    """Plan or log bytes do not conform to the documented format.

    ``path`` points at the offending location (JSON pointer-ish, or a line
    number for framing errors).
    """

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"parse error at {path}: {reason}")


class ValidationError(BrachyError):
    """Structurally valid plan that violates a domain constraint."""

    def __init__(self, where: str, constraint: str):
        self.where = where
        self.constraint = constraint
        super().__init__(f"validation failed ({where}): {constraint}")


class DigestMismatch(BrachyError):
    """Replay produced a different final-state digest than the recorded run."""


class TruncatedLog(BrachyError):
    """Event log has a sequence gap or is missing its terminal records."""


class RunFailure(BrachyError):
    """Headless plan execution hit a rejected command or unreachable target."""

    def __init__(self, needle_id: str | None, reason: str):
        self.needle_id = needle_id
        self.reason = reason
        super().__init__(f"run failed on needle {needle_id!r}: {reason}")
