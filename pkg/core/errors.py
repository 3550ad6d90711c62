"""
Exception Hierarchy
Every error raised by the avatar pipeline derives from AvatarError
"""

from pathlib import Path


class AvatarError(Exception):
    """Base class for all pipeline errors"""


class PreconditionError(AvatarError, ValueError):
    """An operation was called with arguments violating its contract"""


class ShapeMismatchError(PreconditionError):
    """Array shapes or lengths do not line up"""


class DegenerateQuaternionError(AvatarError, ValueError):
    """Quaternion norm too close to zero to normalize"""


class DegenerateBlendError(AvatarError, ValueError):
    """Blended LBS matrix is not orientation preserving"""


class StaleCacheError(AvatarError, RuntimeError):
    """Backward pass requested for inputs that were not rendered last"""


class ParseError(AvatarError, ValueError):
    """Malformed input file"""

    def __init__(
        self,
        message: str,
        path: str | Path | None = None,
        line: int | None = None,
        offset: int | None = None,
    ):
        self.path = str(path) if path is not None else None
        self.line = line
        self.offset = offset

        location = []
        if self.path:
            location.append(f"path={self.path}")
        if line is not None:
            location.append(f"line={line}")
        if offset is not None:
            location.append(f"offset={offset}")
        suffix = f" ({' '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")


class TruncatedFileError(ParseError):
    """File ended before the declared payload"""


class UnsupportedFormatError(ParseError):
    """Recognised but unsupported encoding (e.g. big-endian PLY)"""


class UnsupportedVersionError(ParseError):
    """Checkpoint written by an incompatible format version"""


class ConfigError(AvatarError, ValueError):
    """Invalid or unknown configuration keys"""


class CriticError(AvatarError):
    """Base class for critic endpoint failures"""


class CriticTransportError(CriticError):
    """Critic endpoint unreachable or timed out after retries"""


class CriticProtocolError(CriticError):
    """Critic answered with a document that violates the wire contract"""


class EmptyTrainingSetError(AvatarError):
    """Filtering discarded every training frame"""


class TrainingDivergedError(AvatarError, RuntimeError):
    """Loss stayed non-finite for too many consecutive steps"""


class EnhancerError(AvatarError, RuntimeError):
    """Sequence enhancer failed or returned mismatched frames"""


USER_ERRORS: tuple[type[BaseException], ...] = (
    PreconditionError,
    ParseError,
    ConfigError,
    EmptyTrainingSetError,
    FileNotFoundError,
)
