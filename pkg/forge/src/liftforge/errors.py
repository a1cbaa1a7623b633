"""Trainer-side exception types."""


class ForgeError(Exception):
    """Base class for trainer errors."""


class DatasetMissing(ForgeError):
    """Expected dataset directory or class folder is absent."""


class FrontendMismatch(ForgeError):
    """Trainer-side features disagree with the engine's feature dump."""


class UnsupportedLayer(ForgeError):
    """Model contains a layer the TMLF container cannot express."""


class FlashBudgetExceeded(ForgeError):
    """Exported stream is larger than the 250 KiB flash budget."""
