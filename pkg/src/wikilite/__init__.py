"""Offline knowledge-graph database built from Wikidata entity dumps."""

from .attributes import QueryClause, evaluate, evaluate_count, group_clauses, parse_query
from .build import BuildOptions, BuildReport, build, verify
from .catalog import Catalog
from .errors import WikiliteError
from .keywords import KeywordIndex, search
from .rank import get_rank
from .store import Store, open_store

__version__ = "0.1.0"

__all__ = [
    "BuildOptions", "BuildReport", "Catalog", "KeywordIndex", "QueryClause", "Store",
    "WikiliteError", "build", "evaluate", "evaluate_count", "get_rank", "group_clauses",
    "open_store", "parse_query", "search", "verify",
]
