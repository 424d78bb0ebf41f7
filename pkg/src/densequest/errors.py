"""Exception hierarchy shared across the package.

Every error callers are expected to branch on has its own class; generic
misuse (bad argument types, negative k, ...) raises plain ValueError.
"""

from __future__ import annotations


class DenseQuestError(Exception):
    """Base class for all package-specific errors."""


# --- collection / file parsing ---

class MalformedLine(DenseQuestError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class MalformedRow(DenseQuestError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"row {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(DenseQuestError):
    def __init__(self, dup_id: str):
        super().__init__(f"duplicate id {dup_id!r}")
        self.dup_id = dup_id


class EmptyCorpus(DenseQuestError):
    pass


# --- embedding file format ---

class BadMagic(DenseQuestError):
    pass


class TruncatedFile(DenseQuestError):
    pass


class DimMismatch(DenseQuestError):
    pass


# --- retrieval ---

class NonFiniteQuery(DenseQuestError):
    pass


# --- score estimators ---

class EmptyInput(DenseQuestError):
    pass


class NoQueries(DenseQuestError):
    pass


# --- fusion and evaluation ---

class QuerySetMismatch(DenseQuestError):
    pass


class TooFewModels(DenseQuestError):
    pass


class DegenerateScores(DenseQuestError):
    pass


# --- perturbation / pseudo-query methods ---

class NoUsableQueries(DenseQuestError):
    pass


class NoPseudoQueries(DenseQuestError):
    pass


# --- model clients ---

class EndpointUnreachable(DenseQuestError):
    pass


class PartialResponse(DenseQuestError):
    pass


class EmptyGeneration(DenseQuestError):
    pass


class EmptyRegistry(DenseQuestError):
    pass


# --- job service ---

class UnknownCollection(DenseQuestError):
    pass


class UnknownMethod(DenseQuestError):
    pass


class InvalidParams(DenseQuestError):
    pass


class NotFound(DenseQuestError):
    pass
