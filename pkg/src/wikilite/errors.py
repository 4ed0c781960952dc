"""Exception hierarchy shared by every wikilite module.

Each exception's class name doubles as the machine-readable error code
emitted by the CLI and the HTTP service.
"""


class WikiliteError(Exception):
    """Base class for all wikilite errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# dump parsing
class UnreadableSource(WikiliteError):
    pass


class MalformedFraming(WikiliteError):
    pass


class MalformedSnak(WikiliteError):
    pass


class StrictParseFailure(WikiliteError):
    pass


# storage
class StoreError(WikiliteError):
    pass


class IncompleteBuild(StoreError):
    pass


class LockHeld(StoreError):
    pass


class BuildExists(StoreError):
    """A build-mode open targeted a directory holding a completed build."""


class ReadOnly(StoreError):
    pass


class TableUnknown(StoreError):
    pass


class CorruptRecord(StoreError):
    pass


class CorruptPosting(StoreError):
    pass


class InvalidPosting(WikiliteError, ValueError):
    """Raised when encoding a list that is not strictly increasing."""


# queries
class UnknownEntity(WikiliteError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class QueryError(WikiliteError):
    pass


class EmptyQuery(QueryError):
    pass


class NegativeOnlyQuery(QueryError):
    pass


class BadSyntax(QueryError):
    pass


class EmptyGraph(WikiliteError):
    pass
