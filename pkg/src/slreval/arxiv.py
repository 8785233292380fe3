"""arXiv retrieval toolkit: query building, Atom parsing, rate limiting, caching."""
from __future__ import annotations

import json
import re
import threading
import time
import urllib.parse
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import httpx

ARXIV_API_BASE = "https://export.arxiv.org/api/query"
ATOM_NS = "{http://www.w3.org/2005/Atom}"

_FIELD_PREFIX = {"all": "all", "title": "ti", "abstract": "abs", "author": "au"}


class ArxivError(Exception):
    pass


class FeedParseError(ArxivError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        super().__init__(message)


@dataclass(frozen=True)
class QueryTerm:
    field: str  # all | title | abstract | author
    value: str

    def __post_init__(self) -> None:
        if self.field not in _FIELD_PREFIX:
            raise ValueError(f"unknown query field {self.field!r}")
        if not self.value.strip():
            raise ValueError("empty query term")


@dataclass(frozen=True)
class SearchQuery:
    terms: tuple[QueryTerm, ...]
    boolean_mode: str = "AND"
    max_results: int = 10
    start: int = 0
    sort: str = "relevance"  # relevance | submitted_date

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("terms must be nonempty")
        if not 1 <= self.max_results <= 100:
            raise ValueError("max_results must be in [1, 100]")
        if self.start < 0:
            raise ValueError("start must be >= 0")
        if self.boolean_mode not in ("AND", "OR"):
            raise ValueError("boolean_mode must be AND or OR")
        if self.sort not in ("relevance", "submitted_date"):
            raise ValueError("sort must be relevance or submitted_date")


@dataclass(frozen=True)
class ArxivEntry:
    entry_id: str
    title: str
    authors: tuple[str, ...]
    abstract: str
    published: str
    primary_category: str
    link_url: str

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "title": self.title,
            "authors": list(self.authors),
            "abstract": self.abstract,
            "published": self.published,
            "primary_category": self.primary_category,
            "link_url": self.link_url,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ArxivEntry":
        return ArxivEntry(
            entry_id=doc["entry_id"],
            title=doc["title"],
            authors=tuple(doc.get("authors", [])),
            abstract=doc.get("abstract", ""),
            published=doc.get("published", ""),
            primary_category=doc.get("primary_category", ""),
            link_url=doc.get("link_url", ""),
        )


def build_query_url(q: SearchQuery, api_base: str = ARXIV_API_BASE) -> str:
    clauses = []
    for term in q.terms:
        value = term.value.strip()
        quoted = f'"{value}"' if " " in value else value
        clauses.append(f"{_FIELD_PREFIX[term.field]}:{quoted}")
    search_query = f" {q.boolean_mode} ".join(clauses)
    params = {
        "search_query": search_query,
        "start": str(q.start),
        "max_results": str(q.max_results),
    }
    if q.sort == "submitted_date":
        params["sortBy"] = "submittedDate"
    return api_base + "?" + urllib.parse.urlencode(params, quote_via=urllib.parse.quote)


def _normalize_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


@dataclass(frozen=True)
class FeedParseResult:
    entries: tuple[ArxivEntry, ...]
    skipped: int = 0


def parse_feed(atom_xml: str) -> FeedParseResult:
    """Parse an Atom 1.0 feed; entries missing id or title are skipped and counted."""
    try:
        root = ET.fromstring(atom_xml)
    except ET.ParseError as exc:
        line, column = getattr(exc, "position", (None, None))
        raise FeedParseError(f"malformed feed XML: {exc}", line, column) from exc

    entries: list[ArxivEntry] = []
    skipped = 0
    for node in root.findall(f"{ATOM_NS}entry"):
        entry_id = (node.findtext(f"{ATOM_NS}id") or "").strip()
        title = _normalize_ws(node.findtext(f"{ATOM_NS}title") or "")
        if not entry_id or not title:
            skipped += 1
            continue
        authors = tuple(
            _normalize_ws(a.findtext(f"{ATOM_NS}name") or "")
            for a in node.findall(f"{ATOM_NS}author")
        )
        link_url = entry_id
        for link in node.findall(f"{ATOM_NS}link"):
            if link.get("rel") == "alternate":
                link_url = link.get("href", entry_id)
        category = node.find("{http://arxiv.org/schemas/atom}primary_category")
        entries.append(
            ArxivEntry(
                entry_id=entry_id,
                title=title,
                authors=authors,
                abstract=_normalize_ws(node.findtext(f"{ATOM_NS}summary") or ""),
                published=(node.findtext(f"{ATOM_NS}published") or "").strip(),
                primary_category=category.get("term", "") if category is not None else "",
                link_url=link_url,
            )
        )
    return FeedParseResult(entries=tuple(entries), skipped=skipped)


class SystemClock:
    """Real time; the default clock for production use."""

    def monotonic(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Deterministic clock for tests; sleeping advances virtual time instantly."""

    def __init__(self) -> None:
        self._t = 0.0
        self._lock = threading.Lock()

    def monotonic(self) -> float:
        with self._lock:
            return self._t

    def sleep(self, seconds: float) -> None:
        with self._lock:
            if seconds > 0:
                self._t += seconds


class RateLimiter:
    """Shared gate enforcing a minimum interval between request slots.

    acquire() serializes callers: the caller holds the gate while waiting for
    its slot, so no two slots can ever be closer than min_interval.
    """

    def __init__(self, min_interval_s: float, clock=None):
        self.min_interval_s = min_interval_s
        self.clock = clock or SystemClock()
        self._lock = threading.Lock()
        self._next_allowed: float | None = None

    def acquire(self) -> float:
        """Block until a request may be issued; returns the slot time."""
        with self._lock:
            now = self.clock.monotonic()
            slot = now if self._next_allowed is None else max(now, self._next_allowed)
            if slot > now:
                self.clock.sleep(slot - now)
            self._next_allowed = slot + self.min_interval_s
            return slot


@dataclass
class ArxivClientConfig:
    api_base: str = ARXIV_API_BASE
    min_interval_s: float = 3.0
    cache_ttl_s: float = 24 * 3600.0
    timeout_s: float = 30.0
    max_retries: int = 2
    cache_path: Path | None = None  # optional on-disk spill


class ArxivClient:
    """Rate-limited, caching search client. Thread-safe."""

    def __init__(self, config: ArxivClientConfig | None = None,
                 http_client: httpx.Client | None = None, clock=None):
        self.config = config or ArxivClientConfig()
        self.clock = clock or SystemClock()
        self._http = http_client or httpx.Client(timeout=self.config.timeout_s)
        self._limiter = RateLimiter(self.config.min_interval_s, self.clock)
        self._cache: dict[str, tuple[float, tuple[ArxivEntry, ...]]] = {}
        self._cache_lock = threading.Lock()
        self.request_times: list[float] = []  # slot times, for rate-limit auditing
        self.fetch_count = 0
        if self.config.cache_path and self.config.cache_path.exists():
            self._load_cache(self.config.cache_path)

    def _load_cache(self, path: Path) -> None:
        for line in path.read_text("utf-8").splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            entries = tuple(ArxivEntry.from_dict(e) for e in doc["entries"])
            self._cache[doc["url"]] = (doc["fetched_at"], entries)

    def _spill(self, url: str, fetched_at: float, entries: tuple[ArxivEntry, ...], body: str) -> None:
        if not self.config.cache_path:
            return
        import hashlib
        record = {
            "url": url,
            "fetched_at": fetched_at,
            "body_sha": hashlib.sha256(body.encode("utf-8")).hexdigest(),
            "entries": [e.to_dict() for e in entries],
        }
        self.config.cache_path.parent.mkdir(parents=True, exist_ok=True)
        with self.config.cache_path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")

    def search(self, q: SearchQuery) -> list[ArxivEntry]:
        url = build_query_url(q, self.config.api_base)
        now = self.clock.monotonic()
        with self._cache_lock:
            cached = self._cache.get(url)
            if cached and now - cached[0] <= self.config.cache_ttl_s:
                return list(cached[1])

        slot = self._limiter.acquire()
        self.request_times.append(slot)
        body = self._fetch(url)
        result = parse_feed(body)
        fetched_at = self.clock.monotonic()
        with self._cache_lock:
            self._cache[url] = (fetched_at, result.entries)
        self._spill(url, fetched_at, result.entries, body)
        return list(result.entries)

    def _fetch(self, url: str) -> str:
        last_error = ""
        for attempt in range(1 + self.config.max_retries):
            self.fetch_count += 1
            try:
                resp = self._http.get(url)
            except httpx.TransportError as exc:
                last_error = str(exc)
                continue
            if resp.status_code == 200:
                return resp.text
            last_error = f"status {resp.status_code}"
        raise ArxivError(f"arXiv fetch failed after retries: {last_error}")
