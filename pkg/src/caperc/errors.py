"""Exception hierarchy shared by the library and the command line."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class GraphFormatError(DomainError):
    """A serialized graph or an edge list is malformed."""


class RegimeError(DomainError):
    """The parameter vector is in the wrong regime for the requested quantity."""


class ResourceError(RuntimeError):
    """A run would exceed the configured resource guard."""
