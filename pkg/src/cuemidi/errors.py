"""Exception taxonomy shared across the package.

Two broad families matter for the CLI: bad user input (exit code 2) and
model/checkpoint/generation failures (exit code 3).
"""


class CuemidiError(Exception):
    """Base class for all package-specific errors."""


class InputError(CuemidiError):
    """User-supplied data is invalid (CLI exit code 2)."""


class ModelError(CuemidiError):
    """Model, checkpoint or generation failure (CLI exit code 3)."""


# --- MIDI parsing ---

class MalformedHeader(InputError):
    """Missing, truncated or unsupported SMF header chunk."""


class TruncatedTrack(InputError):
    """MTrk chunk shorter than declared, or corrupt event data inside it."""


# --- boundary engine ---

class ChordTimeNotFound(CuemidiError):
    """A chord timestamp matched no NOTE_ON in the sequence (caller bug)."""


# --- emotion mapping ---

class DegenerateTable(InputError):
    """All means on one axis are equal; rescaling is undefined."""


class BadDistribution(InputError):
    """Probability vector is negative or does not sum to one."""


class OutOfRange(InputError):
    """Scalar input outside its documented domain."""


# --- features ---

class NonPositiveInput(InputError):
    """Tempo estimation needs strictly positive tick scale and resolution."""


# --- model ---

class ShapeMismatch(ModelError):
    """Tensor arguments disagree with the model configuration."""


class NonFiniteActivation(ModelError):
    """Forward pass produced NaN or infinite logits."""


class NonFiniteGradient(ModelError):
    """Backward pass produced NaN or infinite gradients."""


class CheckpointError(ModelError):
    """Checkpoint file is unreadable or does not match the expected config."""


# --- sampler ---

class StallDetected(ModelError):
    """Generation emitted too many consecutive tokens without a TIME_SHIFT."""


# --- pipeline / audio ---

class BadSeries(InputError):
    """Frame-difference series contains values outside [0, 1]."""


class UnsupportedFormat(InputError):
    """WAV input is not 16-bit PCM or 32-bit float."""
