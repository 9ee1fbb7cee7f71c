from __future__ import annotations


class KeystrokeDecoderError(Exception):
    """Base class for every error raised by the package."""

    exit_code: int = 1


class ConfigError(KeystrokeDecoderError):
    exit_code = 2


class MissingArtifactError(KeystrokeDecoderError):
    exit_code = 3

    def __init__(self, path: str, stage: str):
        super().__init__(f"Missing artifact {path!r}: run the '{stage}' stage first.")
        self.path = path
        self.stage = stage


class NumericalError(KeystrokeDecoderError):
    exit_code = 4


class DataIntegrityError(KeystrokeDecoderError):
    pass


class FormatError(KeystrokeDecoderError):
    pass


class ParameterError(KeystrokeDecoderError, ValueError):
    pass


class ShapeError(KeystrokeDecoderError, ValueError):
    pass


class SequenceLengthError(KeystrokeDecoderError, ValueError):
    pass
