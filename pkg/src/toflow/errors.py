class ShapeError(ValueError):
    """Operand extents or channel counts do not line up."""


class ConfigurationError(ValueError):
    """An operation was asked for something its configuration cannot express."""


class FormatError(ValueError):
    """A serialized checkpoint, flow file or corpus entry is malformed."""
