"""Exception types raised across the toolkit."""


class FractokitError(Exception):
    """Base class for all toolkit errors."""


class MalformedFilename(FractokitError):
    """Filename contains no token matching the FOAN grammar."""


class InvalidFraction(FractokitError):
    """Overlay crop fraction outside the permitted [0, 0.5] range."""


class BothEmpty(FractokitError):
    """Similarity of two empty strings is undefined."""


class IllegalCharacter(FractokitError):
    """UID field contains the reserved '|' separator."""


class WrongShape(FractokitError):
    """DCT input is not the expected 32x32 block."""


class ShapeMismatch(FractokitError):
    """SSIM operands have different dimensions."""


class TooSmall(FractokitError):
    """Image side smaller than the SSIM window."""


class ImageTooSmall(FractokitError):
    """Jitter crop would leave fewer than 64 pixels per side."""


class TooFewSamples(FractokitError):
    """A class has fewer samples (or groups) than requested folds."""


class EmptyTrainingSet(FractokitError):
    """Operation requires at least one training record."""


class MissingTruth(FractokitError):
    """Prediction references an image_id absent from the truth map."""


class TooFewFolds(FractokitError):
    """Summary statistics need at least two fold values."""


class LengthMismatch(FractokitError):
    """Paired per-fold lists have different lengths."""


class NonFiniteInput(FractokitError):
    """Loss input contains NaN or infinity."""
