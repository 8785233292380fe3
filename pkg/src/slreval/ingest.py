"""Manuscript ingestion: plain text, structured JSON, and the remote extractor client."""
from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .checklist import ChecklistItem

DEFAULT_EXCERPT_BUDGET = 12_000

# Section names that commonly head an SLR, used by the plain-text heuristic.
_COMMON_HEADINGS = {
    "abstract", "introduction", "background", "related work", "methods",
    "methodology", "materials and methods", "results", "findings",
    "discussion", "conclusion", "conclusions", "limitations",
    "acknowledgments", "acknowledgements", "references", "bibliography",
    "appendix", "funding", "declarations",
}

_NUMBERED_HEADING = re.compile(r"^\s*\d+(\.\d+)*\.?\s+\S")


class IngestError(Exception):
    pass


class SchemaError(IngestError):
    """Structured-document file does not match the expected schema."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{message} at {path}")


class ExtractorError(IngestError):
    """The remote extraction service returned an unusable response."""

    def __init__(self, message: str, payload: object = None):
        self.payload = payload
        super().__init__(message)


class ExtractorTransportError(IngestError):
    """Network-level failure talking to the remote extraction service."""


@dataclass(frozen=True)
class Section:
    heading: str
    level: int
    body_text: str


@dataclass(frozen=True)
class ParsedDocument:
    doc_id: str
    title: str
    sections: tuple[Section, ...]
    references: tuple[str, ...]
    source_kind: str  # plain-text | structured | remote-extracted
    metadata: dict = field(default_factory=dict)
    warning: str | None = None

    @property
    def full_text(self) -> str:
        return "".join(s.body_text for s in self.sections)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "sections": [
                {"heading": s.heading, "level": s.level, "body": s.body_text}
                for s in self.sections
            ],
            "references": list(self.references),
            "source_kind": self.source_kind,
            "metadata": self.metadata,
            "warning": self.warning,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ParsedDocument":
        return ParsedDocument(
            doc_id=doc["doc_id"],
            title=doc["title"],
            sections=tuple(
                Section(s["heading"], s["level"], s["body"]) for s in doc["sections"]
            ),
            references=tuple(doc.get("references", [])),
            source_kind=doc.get("source_kind", "structured"),
            metadata=doc.get("metadata", {}),
            warning=doc.get("warning"),
        )


@dataclass(frozen=True)
class Excerpt:
    section_heading: str
    text: str
    char_offset: int


@dataclass(frozen=True)
class ExcerptBundle:
    item_id: int
    excerpts: tuple[Excerpt, ...]
    total_chars: int
    truncated: bool


def _doc_id(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()[:16]


def _is_heading(line: str) -> bool:
    stripped = line.strip()
    if not stripped or len(stripped) > 80:
        return False
    lowered = stripped.lower().rstrip(":").strip()
    lowered = re.sub(r"^\d+(\.\d+)*\.?\s*", "", lowered)
    if lowered in _COMMON_HEADINGS:
        return True
    if _NUMBERED_HEADING.match(stripped) and len(stripped.split()) <= 8:
        return True
    if stripped.isupper() and len(stripped.split()) <= 8:
        return True
    return False


def ingest_text(raw: str, title_hint: str | None = None) -> ParsedDocument:
    """Split free text into sections on heading heuristics."""
    if not raw.strip():
        raise IngestError("empty document")

    lines = raw.splitlines(keepends=True)
    sections: list[Section] = []
    current_heading = "Document"
    current_body: list[str] = []
    found_heading = False

    def flush() -> None:
        body = "".join(current_body)
        if body or sections:
            sections.append(Section(current_heading, 1, body))

    for line in lines:
        if _is_heading(line):
            flush()
            found_heading = True
            current_heading = line.strip()
            current_body = [line]
        else:
            current_body.append(line)
    flush()

    warning = None
    if not found_heading:
        sections = [Section("Document", 1, raw)]
        warning = "no_structure_detected"

    references: list[str] = []
    for sec in sections:
        head = sec.heading.lower().rstrip(":").strip()
        head = re.sub(r"^\d+(\.\d+)*\.?\s*", "", head)
        if head in ("references", "bibliography"):
            body_lines = sec.body_text.splitlines()
            references = [
                ln.strip() for ln in body_lines[1:] if ln.strip()
            ]

    title = title_hint or (lines[0].strip() if lines else "Untitled")
    return ParsedDocument(
        doc_id=_doc_id(raw.encode("utf-8")),
        title=title,
        sections=tuple(sections),
        references=tuple(references),
        source_kind="plain-text",
        metadata={"byte_size": len(raw.encode("utf-8"))},
        warning=warning,
    )


def ingest_structured(source: str | Path | dict, raw_bytes: bytes | None = None) -> ParsedDocument:
    """Load a structured-document JSON file: {title, sections:[{heading, level, body}], references}."""
    if isinstance(source, dict):
        doc = source
        if raw_bytes is None:
            raw_bytes = json.dumps(doc, sort_keys=True).encode("utf-8")
    else:
        raw_bytes = Path(source).read_bytes()
        try:
            doc = json.loads(raw_bytes)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"invalid JSON: {exc}") from exc
    return _structured_from_dict(doc, raw_bytes, source_kind="structured")


def _structured_from_dict(doc: dict, raw_bytes: bytes, source_kind: str) -> ParsedDocument:
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    if "sections" not in doc:
        raise SchemaError("$.sections", "missing required field")
    if not isinstance(doc["sections"], list):
        raise SchemaError("$.sections", "expected a list")
    sections = []
    for i, s in enumerate(doc["sections"]):
        if not isinstance(s, dict):
            raise SchemaError(f"$.sections[{i}]", "expected an object")
        for key in ("heading", "body"):
            if key not in s:
                raise SchemaError(f"$.sections[{i}].{key}", "missing required field")
        sections.append(Section(str(s["heading"]), int(s.get("level", 1)), str(s["body"])))
    refs = doc.get("references", [])
    if not isinstance(refs, list):
        raise SchemaError("$.references", "expected a list")
    return ParsedDocument(
        doc_id=_doc_id(raw_bytes),
        title=str(doc.get("title", "Untitled")),
        sections=tuple(sections),
        references=tuple(str(r) for r in refs),
        source_kind=source_kind,
        metadata={"byte_size": len(raw_bytes)},
    )


@dataclass(frozen=True)
class ExtractorConfig:
    url: str
    timeout_s: float = 60.0
    max_retries: int = 2


def extract_remote(pdf_bytes: bytes, config: ExtractorConfig, client: httpx.Client | None = None) -> ParsedDocument:
    """POST PDF bytes to the extraction service and map its structured reply."""
    if not pdf_bytes:
        raise IngestError("empty document")
    owns_client = client is None
    if owns_client:
        client = httpx.Client(timeout=config.timeout_s)
    try:
        last_error: Exception | None = None
        for attempt in range(1 + config.max_retries):
            try:
                resp = client.post(
                    config.url, content=pdf_bytes,
                    headers={"Content-Type": "application/pdf"},
                )
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = ExtractorTransportError(
                    f"extractor returned status {resp.status_code}"
                )
                continue
            if resp.status_code != 200:
                raise ExtractorError(
                    f"extractor returned status {resp.status_code}", payload=resp.text
                )
            try:
                doc = resp.json()
            except ValueError as exc:
                raise ExtractorError("extractor response is not JSON", payload=resp.text) from exc
            try:
                return _structured_from_dict(doc, pdf_bytes, source_kind="remote-extracted")
            except SchemaError as exc:
                raise ExtractorError(f"extractor response unusable: {exc}", payload=doc) from exc
        raise ExtractorTransportError(
            f"extractor unreachable after {1 + config.max_retries} attempts: {last_error}"
        )
    finally:
        if owns_client:
            client.close()


_TOKEN = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN.findall(text.lower()))


def _rank_sections(doc: ParsedDocument, item: ChecklistItem) -> list[int]:
    """Order section indices by keyword relevance, stable by original position."""
    kw_tokens = [_tokens(k) for k in item.keywords]
    scores: list[tuple[float, int]] = []
    for idx, sec in enumerate(doc.sections):
        heading_toks = _tokens(sec.heading)
        body_toks = _tokens(sec.body_text)
        score = 0.0
        for kt in kw_tokens:
            if not kt:
                continue
            if kt <= heading_toks:
                score += 10.0  # exact heading match dominates
            overlap = len(kt & body_toks) / len(kt)
            score += overlap
        scores.append((-score, idx))
    scores.sort()
    return [idx for _, idx in scores]


def section_excerpts(doc: ParsedDocument, item: ChecklistItem, budget: int = DEFAULT_EXCERPT_BUDGET) -> ExcerptBundle:
    """Greedily pack the highest-ranked section texts into the character budget."""
    if budget <= 0:
        raise ValueError("budget must be positive")

    offsets: list[int] = []
    pos = 0
    for sec in doc.sections:
        offsets.append(pos)
        pos += len(sec.body_text)

    excerpts: list[Excerpt] = []
    remaining = budget
    truncated = False
    for idx in _rank_sections(doc, item):
        sec = doc.sections[idx]
        text = sec.body_text
        if not text:
            continue
        if len(text) > remaining:
            if remaining > 0:
                excerpts.append(Excerpt(sec.heading, text[:remaining], offsets[idx]))
                remaining = 0
            truncated = True
            break
        excerpts.append(Excerpt(sec.heading, text, offsets[idx]))
        remaining -= len(text)
        if remaining == 0:
            truncated = len(excerpts) < sum(1 for s in doc.sections if s.body_text)
            break

    total = sum(len(e.text) for e in excerpts)
    return ExcerptBundle(
        item_id=item.item_id,
        excerpts=tuple(excerpts),
        total_chars=total,
        truncated=truncated,
    )
