class ShapeError(ValueError):
    """ Raised when tensor extents do not fit an operation. The message names the offending dimension. """


class NonFiniteError(FloatingPointError):
    """ Raised when a NaN/Inf shows up in a forward value or a loss component. """

    def __init__(self, where: str, message: str | None = None):
        self.where = where
        super().__init__(message or f"non-finite value produced by {where}")


class ArchiveFormatError(ValueError):
    """ Raised when a named-tensor archive cannot be parsed. """

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"malformed archive at byte {offset}: {message}")


class ConfigError(KeyError):
    """ Raised on missing or unknown configuration keys. """

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(message)

    def __str__(self):
        return self.args[0]


class DatasetError(ValueError):
    pass


class ModeError(ValueError):
    pass
