"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario or model parameter is out of its documented range.

    ``field`` is a dotted path into the scenario document, e.g. ``params.gamma``.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class NoPathError(RuntimeError):
    """No path exists through known-free cells."""


class FuzzyCoverageError(RuntimeError):
    """No rule fired for an input triple; the membership functions leave a gap."""
