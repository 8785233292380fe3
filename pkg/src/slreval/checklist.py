"""PRISMA 2020 checklist registry: 27 items partitioned into six societies."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path


class RegistryError(Exception):
    """Raised when a registry file is malformed or violates cardinality rules."""


class Society(str, Enum):
    TITLE_ABSTRACT = "TitleAbstract"
    INTRODUCTION = "Introduction"
    METHODS = "Methods"
    RESULTS = "Results"
    DISCUSSION = "Discussion"
    OTHER_INFORMATION = "OtherInformation"


# Item counts per society for a valid PRISMA 2020 registry.
EXPECTED_SOCIETY_COUNTS: dict[Society, int] = {
    Society.TITLE_ABSTRACT: 2,
    Society.INTRODUCTION: 2,
    Society.METHODS: 11,
    Society.RESULTS: 7,
    Society.DISCUSSION: 1,
    Society.OTHER_INFORMATION: 4,
}

TOTAL_ITEMS = 27


@dataclass(frozen=True)
class Exemplar:
    """One worked scoring example embedded in an agent prompt."""

    excerpt: str
    score: int
    feedback: str


@dataclass(frozen=True)
class ChecklistItem:
    item_id: int
    society: Society
    title: str
    guidance_text: str
    exemplar: Exemplar
    keywords: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 1 <= self.item_id <= TOTAL_ITEMS:
            raise RegistryError(f"item_id {self.item_id} out of range 1..{TOTAL_ITEMS}")
        if not self.guidance_text:
            raise RegistryError(f"item {self.item_id}: guidance_text is empty")
        if not self.exemplar.excerpt or not self.exemplar.feedback:
            raise RegistryError(f"item {self.item_id}: exemplar is empty")


@dataclass(frozen=True)
class ChecklistRegistry:
    items: tuple[ChecklistItem, ...]
    version: str = "PRISMA-2020"

    def item(self, item_id: int) -> ChecklistItem:
        for it in self.items:
            if it.item_id == item_id:
                return it
        raise KeyError(item_id)


@dataclass(frozen=True)
class ScoreScale:
    """Integer scoring scale with an anchor label per level."""

    min_score: int = 0
    max_score: int = 5
    anchors: tuple[str, ...] = (
        "Not Addressed",
        "Barely Addressed",
        "Partially Addressed",
        "Adequately Addressed",
        "Well Addressed",
        "Thoroughly Addressed",
    )

    def __post_init__(self) -> None:
        if len(self.anchors) != self.max_score - self.min_score + 1:
            raise ValueError("one anchor label required per integer level")

    def label(self, score: int) -> str:
        if not self.min_score <= score <= self.max_score:
            raise ValueError(f"score {score} outside [{self.min_score}, {self.max_score}]")
        return self.anchors[score - self.min_score]


DEFAULT_SCALE = ScoreScale()


def _validate(items: list[ChecklistItem], version: str) -> ChecklistRegistry:
    if len(items) != TOTAL_ITEMS:
        raise RegistryError(f"expected {TOTAL_ITEMS} items, got {len(items)}")
    seen: set[int] = set()
    for it in items:
        if it.item_id in seen:
            raise RegistryError(f"duplicate item_id {it.item_id}")
        seen.add(it.item_id)
    counts: dict[Society, int] = {s: 0 for s in Society}
    for it in items:
        counts[it.society] += 1
    mismatches = [
        f"{s.value}: expected {expected}, got {counts[s]}"
        for s, expected in EXPECTED_SOCIETY_COUNTS.items()
        if counts[s] != expected
    ]
    if mismatches:
        raise RegistryError("society cardinality mismatch: " + "; ".join(mismatches))
    items_sorted = tuple(sorted(items, key=lambda it: it.item_id))
    return ChecklistRegistry(items=items_sorted, version=version)


def _item_from_dict(entry: dict, index: int) -> ChecklistItem:
    try:
        ex = entry["exemplar"]
        return ChecklistItem(
            item_id=int(entry["id"]),
            society=Society(entry["society"]),
            title=str(entry["title"]),
            guidance_text=str(entry["guidance"]),
            exemplar=Exemplar(
                excerpt=str(ex["excerpt"]),
                score=int(ex["score"]),
                feedback=str(ex["feedback"]),
            ),
            keywords=tuple(entry.get("keywords", [])),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise RegistryError(f"malformed registry entry at index {index}: {exc}") from exc


def load_registry(source: str | Path | None = None) -> ChecklistRegistry:
    """Load a registry from a JSON file, or the bundled PRISMA 2020 default."""
    if source is None:
        text = resources.files("slreval.data").joinpath("prisma2020.json").read_text("utf-8")
    else:
        text = Path(source).read_text("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RegistryError(f"registry is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "items" not in doc:
        raise RegistryError("registry must be an object with an 'items' list")
    items = [_item_from_dict(e, i) for i, e in enumerate(doc["items"])]
    return _validate(items, version=str(doc.get("version", "PRISMA-2020")))


def serialize_registry(registry: ChecklistRegistry) -> str:
    """Serialize to the same JSON shape load_registry reads."""
    doc = {
        "version": registry.version,
        "items": [
            {
                "id": it.item_id,
                "society": it.society.value,
                "title": it.title,
                "guidance": it.guidance_text,
                "exemplar": {
                    "excerpt": it.exemplar.excerpt,
                    "score": it.exemplar.score,
                    "feedback": it.exemplar.feedback,
                },
                "keywords": list(it.keywords),
            }
            for it in registry.items
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


def items_for_society(registry: ChecklistRegistry, society: Society) -> list[ChecklistItem]:
    return [it for it in registry.items if it.society is society]


def society_counts(registry: ChecklistRegistry) -> dict[Society, int]:
    counts = {s: 0 for s in Society}
    for it in registry.items:
        counts[it.society] += 1
    return counts
