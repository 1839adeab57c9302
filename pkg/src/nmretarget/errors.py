"""Exception hierarchy shared across the package."""


class RetargetError(Exception):
    """Base class for all package errors."""


# --- BVH parsing -----------------------------------------------------------

class BvhError(RetargetError):
    """Base class for BVH parse failures."""

    def __init__(self, message, line=None, filename=None):
        self.line = line
        self.filename = filename
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.filename is not None:
            where.append(str(self.filename))
        if self.line is not None:
            where.append(f"line {self.line}")
        return f"{':'.join(where)}: {msg}" if where else msg


class MissingSection(BvhError):
    pass


class ChannelMismatch(BvhError):
    pass


class MalformedNumber(BvhError):
    pass


class UnbalancedBraces(BvhError):
    pass


class BvhSyntaxError(BvhError):
    """Anything else the grammar rejects (unknown keyword, bad channel name)."""


class EncodingError(BvhError):
    pass


# --- skeletons -------------------------------------------------------------

class SkeletonMismatch(RetargetError):
    def __init__(self, message, joint=None):
        self.joint = joint
        super().__init__(message)


class SchemaError(RetargetError):
    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnknownJoint(RetargetError):
    pass


class MissingChest(RetargetError):
    pass


# --- numerics --------------------------------------------------------------

class ShapeMismatch(RetargetError, ValueError):
    pass


class LengthMismatch(ShapeMismatch):
    pass


class NotScalar(RetargetError, ValueError):
    pass


class AlreadyConsumed(RetargetError, RuntimeError):
    pass


# --- checkpoints -----------------------------------------------------------

class CheckpointError(RetargetError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionUnsupported(CheckpointError):
    pass


class PayloadTruncated(CheckpointError):
    pass


class HeaderShapeMismatch(CheckpointError):
    pass


# --- training / evaluation -------------------------------------------------

class ConfigError(RetargetError, ValueError):
    pass


class EmptyCorpus(RetargetError):
    pass


class FrameCountMismatch(RetargetError):
    pass


class UnknownEndEffector(RetargetError, KeyError):
    def __str__(self):
        return Exception.__str__(self)
