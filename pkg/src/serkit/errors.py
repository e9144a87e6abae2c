"""Exception hierarchy shared across the toolkit.

Every error raised on purpose derives from :class:`SerkitError`; the CLI maps
those to exit code 1 and prints the class name on stderr.
"""


class SerkitError(Exception):
    """Base class for all toolkit errors."""


class MalformedContainer(SerkitError):
    pass


class UnsupportedEncoding(SerkitError):
    pass


class EmptyAudio(SerkitError):
    pass


class ClipTooShort(SerkitError):
    pass


class DegenerateFilter(SerkitError):
    pass


class BadFilename(SerkitError):
    pass


class UnknownEmotionCode(SerkitError):
    pass


class EmptyManifest(SerkitError):
    pass


class ShapeMismatch(SerkitError, ValueError):
    pass


class DegenerateBatch(SerkitError):
    pass


class InvalidTarget(SerkitError, ValueError):
    pass


class SingleClass(SerkitError, ValueError):
    pass


class NonFiniteFeature(SerkitError, ValueError):
    pass


class NonFiniteGradient(SerkitError):
    def __init__(self, param_name):
        super().__init__(f"non-finite gradient in parameter {param_name!r}")
        self.param_name = param_name


class NonFiniteLoss(SerkitError):
    pass


class EmptySplit(SerkitError):
    pass


class MissingTensor(SerkitError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DimMismatch(SerkitError):
    pass


class EmptyMatrix(SerkitError, ValueError):
    pass
