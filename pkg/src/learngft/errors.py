"""Exception hierarchy shared across the package.

Numerical failures and configuration problems get their own branches so the
command-line layer can map them to distinct exit codes.
"""


class LearnGFTError(Exception):
    """Base class for every error raised by learngft."""


class ConfigError(LearnGFTError, ValueError):
    """Invalid parameters or configuration values."""


class WavError(LearnGFTError):
    """Base class for WAV input/output problems."""


class WavFileMissingError(WavError, FileNotFoundError):
    pass


class MalformedWavError(WavError, ValueError):
    """RIFF/WAVE structure is truncated or inconsistent."""


class UnsupportedCodecError(WavError, ValueError):
    """WAV payload is not PCM-16 or IEEE float-32."""


class ColaError(LearnGFTError, ValueError):
    """Analysis/synthesis window pair does not overlap-add to a constant."""


class BasisMismatchError(LearnGFTError, ValueError):
    """Spectrum or operator applied with a basis it was not built for."""


class NumericalError(LearnGFTError, ArithmeticError):
    """Base class for numerical breakdowns (exit code 4 in the CLI)."""


class SvdConvergenceError(NumericalError):
    pass


class SingularSystemError(NumericalError):
    """Normal equations are rank deficient; use ridge > 0."""
