"""Exception hierarchy shared by every layer of the stack."""


class TinyLiftError(Exception):
    """Base class for all tinylift errors."""


# --- audio frontend ---

class BufferTooShort(TinyLiftError):
    """Audio buffer shorter than one analysis window."""


class WrongFrameLength(TinyLiftError):
    """Frame handed to the transform is not exactly one window long."""


class NegativeMagnitude(TinyLiftError):
    """Spectral magnitudes must be nonnegative."""


# --- vision frontend ---

class BadDimensions(TinyLiftError):
    """Image buffer size does not match the declared width/height."""


class WrongSize(TinyLiftError):
    """Image is not the 96x96 shape the detector consumes."""


class BadImageFile(TinyLiftError):
    """Unreadable or unsupported PGM stream."""


# --- model container / engine ---

class BadMagic(TinyLiftError):
    """Stream does not start with the TMLF magic."""


class UnsupportedVersion(TinyLiftError):
    """Container version not understood by this engine."""


class TruncatedStream(TinyLiftError):
    """Stream ended in the middle of a field."""


class FlashBudgetExceeded(TinyLiftError):
    """Model byte stream larger than the 250 KiB flash budget."""


class InvalidLayer(TinyLiftError):
    """Malformed or inconsistent layer descriptor."""


class ShapeMismatch(TinyLiftError):
    """Tensor shapes or quantization parameters do not conform."""


class ArenaOverflow(TinyLiftError):
    """Activation plan does not fit in the arena capacity."""


class TenantBusy(TinyLiftError):
    """Another model holds the arena (activation or in-flight inference)."""


# --- controller / dispatch ---

class InvalidFloor(TinyLiftError):
    """Requested floor is not served by this unit."""


# --- simulation harness ---

class NotRiff(TinyLiftError):
    """File is not a RIFF/WAVE container."""


class UnsupportedEncoding(TinyLiftError):
    """WAV encoding other than mono 16-bit PCM at 16 kHz."""


class ParseError(TinyLiftError):
    """Scenario line could not be parsed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MissingFile(TinyLiftError):
    """Scenario references a file that does not exist."""


class NonMonotoneTime(TinyLiftError):
    """Scenario timestamps must be nondecreasing."""


class AssertionFailed(TinyLiftError):
    """A scenario expectation was violated."""

    def __init__(self, expectation: str, actual: str):
        super().__init__(f"{expectation} (actual: {actual})")
        self.expectation = expectation
        self.actual = actual
