"""BEIR-style collection files: line-delimited corpus/queries and tab-separated qrels.

A corpus line is a JSON object with ``_id``, ``title`` and ``text``; a query
line has ``_id`` and ``text``.  Qrels rows are ``query-id<TAB>doc-id<TAB>grade``
with the 4-column TREC variant (iteration column) also accepted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .errors import DuplicateId, EmptyCorpus, MalformedLine, MalformedRow

# query-id -> doc-id -> grade
Qrels = dict[str, dict[str, int]]

_PATH_SEPARATORS = ("/", "\\")


@dataclass(frozen=True)
class Document:
    id: str
    title: str = ""
    text: str = ""

    def encoder_input(self) -> str:
        """Text handed to encoders: title and body joined, trimmed."""
        return f"{self.title} {self.text}".strip()


@dataclass(frozen=True)
class Query:
    id: str
    text: str


def _check_id(value: object, line_no: int, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise MalformedLine(line_no, f"{what} `_id` must be a non-empty string")
    if any(c.isspace() for c in value) or any(s in value for s in _PATH_SEPARATORS):
        raise MalformedLine(line_no, f"{what} `_id` {value!r} contains whitespace or path separators")
    return value


def _iter_lines(stream: Iterable[str] | IO[str]) -> Iterator[tuple[int, str]]:
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if line:
            yield line_no, line


def parse_corpus(stream: Iterable[str] | IO[str]) -> list[Document]:
    """Parse a line-delimited corpus, preserving file order.

    Raises MalformedLine on broken JSON or invariant violations,
    DuplicateId on repeated `_id`, EmptyCorpus when no documents remain.
    """
    docs: list[Document] = []
    seen: set[str] = set()
    for line_no, line in _iter_lines(stream):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLine(line_no, f"invalid JSON ({e.msg})") from e
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "expected a JSON object")
        doc_id = _check_id(obj.get("_id"), line_no, "document")
        title = obj.get("title", "")
        text = obj.get("text", "")
        if not isinstance(title, str) or not isinstance(text, str):
            raise MalformedLine(line_no, "`title` and `text` must be strings")
        if not title and not text:
            raise MalformedLine(line_no, "document must have a title or a text")
        if doc_id in seen:
            raise DuplicateId(doc_id)
        seen.add(doc_id)
        docs.append(Document(id=doc_id, title=title, text=text))
    if not docs:
        raise EmptyCorpus("corpus contains no documents")
    return docs


def parse_queries(stream: Iterable[str] | IO[str]) -> list[Query]:
    """Parse a line-delimited query set; empty `text` is rejected."""
    queries: list[Query] = []
    seen: set[str] = set()
    for line_no, line in _iter_lines(stream):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLine(line_no, f"invalid JSON ({e.msg})") from e
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "expected a JSON object")
        query_id = _check_id(obj.get("_id"), line_no, "query")
        text = obj.get("text")
        if not isinstance(text, str) or not text:
            raise MalformedLine(line_no, "query `text` must be a non-empty string")
        if query_id in seen:
            raise DuplicateId(query_id)
        seen.add(query_id)
        queries.append(Query(id=query_id, text=text))
    if not queries:
        raise EmptyCorpus("query set contains no queries")
    return queries


def parse_qrels(stream: Iterable[str] | IO[str]) -> Qrels:
    """Parse tab-separated qrels into a nested map.

    The grade is taken from the last column so both the 3-column BEIR layout
    and the 4-column TREC layout (with an iteration column) are accepted.
    A single leading header row whose grade column is not an integer is
    skipped.  Repeated (query, doc) pairs keep the last grade seen.
    """
    qrels: Qrels = {}
    first_data_line = True
    for line_no, line in _iter_lines(stream):
        cols = line.split("\t")
        if len(cols) < 3:
            raise MalformedRow(line_no, f"expected >= 3 tab-separated columns, got {len(cols)}")
        grade_text = cols[-1].strip()
        try:
            grade = int(grade_text)
        except ValueError:
            if first_data_line:
                first_data_line = False
                continue
            raise MalformedRow(line_no, f"grade {grade_text!r} is not an integer") from None
        first_data_line = False
        if grade < 0:
            raise MalformedRow(line_no, f"grade {grade} is negative")
        query_id = cols[0].strip()
        doc_id = cols[1].strip() if len(cols) == 3 else cols[2].strip()
        if not query_id or not doc_id:
            raise MalformedRow(line_no, "empty query or document id")
        qrels.setdefault(query_id, {})[doc_id] = grade
    return qrels


def serialize_corpus(docs: Iterable[Document]) -> Iterator[str]:
    for doc in docs:
        yield json.dumps({"_id": doc.id, "title": doc.title, "text": doc.text}, ensure_ascii=False)


def serialize_queries(queries: Iterable[Query]) -> Iterator[str]:
    for q in queries:
        yield json.dumps({"_id": q.id, "text": q.text}, ensure_ascii=False)


def serialize_qrels(qrels: Qrels) -> Iterator[str]:
    for query_id in qrels:
        for doc_id, grade in qrels[query_id].items():
            yield f"{query_id}\t{doc_id}\t{grade}"
