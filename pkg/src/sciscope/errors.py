"""Exception types shared across the package."""


class SciscopeError(Exception):
    """Base class for every error raised by this package."""


# --- dataset / manifest ---


class MissingFile(SciscopeError):
    pass


class MalformedManifest(SciscopeError):
    pass


class SplitOverlap(MalformedManifest):
    pass


class TooFewItems(SciscopeError):
    pass


# --- embeddings ---


class DimensionMismatch(SciscopeError):
    pass


class ZeroVector(SciscopeError):
    pass


class EmptyPartition(SciscopeError):
    pass


class EmptyStore(SciscopeError):
    pass


class ProviderUnavailable(SciscopeError):
    """An external provider could not be reached after the configured retries."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class PartialFailure(SciscopeError):
    """Some items of a batch operation failed; ``failed_ids`` lists them."""

    def __init__(self, failed_ids):
        self.failed_ids = sorted(failed_ids)
        super().__init__(f"{len(self.failed_ids)} item(s) failed: {', '.join(self.failed_ids)}")


# --- supervised probe ---


class DegenerateData(SciscopeError):
    pass


class DivergedLoss(SciscopeError):
    pass


class NonFiniteParams(SciscopeError):
    pass


# --- image tools ---


class ImageTooSmall(SciscopeError):
    pass


class ProviderBoundsExceeded(SciscopeError):
    pass


class MissingDependency(SciscopeError):
    pass


class UnknownTool(SciscopeError):
    pass


# --- agent / LMM ---


class EmptyRegistry(SciscopeError):
    pass


class LlmUnavailable(SciscopeError):
    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class ContextTooLarge(SciscopeError):
    pass


# --- evaluation ---


class MissingTruth(SciscopeError):
    pass
