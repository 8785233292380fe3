"""Per-item evaluation agents: prompt building, output parsing, validation, tool loop."""
from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field

from .arxiv import ArxivClient, QueryTerm, SearchQuery
from .checklist import ChecklistItem, ScoreScale
from .ingest import ExcerptBundle, ParsedDocument
from .provider import (
    ChatProvider,
    ChatRequest,
    ChatResponse,
    Message,
    ToolDeclaration,
)

OUTPUT_SCHEMA_VERSION = "1"
DEFAULT_MAX_TOOL_CALLS = 3
DEFAULT_MIN_FEEDBACK_CHARS = 20

SEARCH_TOOL = ToolDeclaration(
    name="arxiv_search",
    description="Search arXiv for related research. Returns matching papers.",
    parameters={
        "type": "object",
        "properties": {
            "query": {"type": "string", "description": "search terms"},
            "field": {
                "type": "string",
                "enum": ["all", "title", "abstract", "author"],
                "default": "all",
            },
            "max_results": {"type": "integer", "minimum": 1, "maximum": 100, "default": 5},
        },
        "required": ["query"],
    },
)


class AgentError(Exception):
    pass


@dataclass(frozen=True)
class AgentSpec:
    item: ChecklistItem
    prompt_template_id: str = "default-v1"
    max_tool_calls: int = DEFAULT_MAX_TOOL_CALLS
    output_schema_version: str = OUTPUT_SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.max_tool_calls < 0:
            raise ValueError("max_tool_calls must be >= 0")


@dataclass(frozen=True)
class ItemEvaluation:
    item_id: int
    score: int | None
    feedback: str
    evidence_quotes: tuple[str, ...]
    citations_consulted: tuple[str, ...]
    attempts: int
    status: str  # ok | failed
    agent_trace_id: str
    violations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "score": self.score,
            "feedback": self.feedback,
            "evidence_quotes": list(self.evidence_quotes),
            "citations_consulted": list(self.citations_consulted),
            "attempts": self.attempts,
            "status": self.status,
            "agent_trace_id": self.agent_trace_id,
            "violations": list(self.violations),
        }

    @staticmethod
    def from_dict(doc: dict) -> "ItemEvaluation":
        return ItemEvaluation(
            item_id=doc["item_id"],
            score=doc.get("score"),
            feedback=doc.get("feedback", ""),
            evidence_quotes=tuple(doc.get("evidence_quotes", [])),
            citations_consulted=tuple(doc.get("citations_consulted", [])),
            attempts=doc.get("attempts", 1),
            status=doc.get("status", "ok"),
            agent_trace_id=doc.get("agent_trace_id", ""),
            violations=tuple(doc.get("violations", [])),
        )


@dataclass(frozen=True)
class ValidationThresholds:
    min_feedback_chars: int = DEFAULT_MIN_FEEDBACK_CHARS


@dataclass(frozen=True)
class ValidationVerdict:
    violations: tuple[str, ...]

    @property
    def accepted(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class ParsedOutput:
    score: object
    feedback: str
    evidence_quotes: tuple[str, ...]


def build_prompt(spec: AgentSpec, bundle: ExcerptBundle, scale: ScoreScale,
                 request_tag: str = "", prior_violations: tuple[str, ...] = (),
                 model_name: str = "") -> ChatRequest:
    """Deterministic evaluation prompt: guidance, scale anchors, exemplar, output schema."""
    if bundle.item_id != spec.item.item_id:
        raise AgentError(
            f"bundle item {bundle.item_id} does not match spec item {spec.item.item_id}"
        )
    item = spec.item
    anchor_lines = "\n".join(
        f"  {level}: {scale.label(level)}"
        for level in range(scale.min_score, scale.max_score + 1)
    )
    system = (
        f"You are a reviewer assessing one reporting requirement of a systematic "
        f"literature review manuscript.\n\n"
        f"Requirement #{item.item_id} ({item.society.value}): {item.title}\n"
        f"{item.guidance_text}\n\n"
        f"Score the manuscript on this requirement using the integer scale:\n{anchor_lines}\n\n"
        f"Worked example:\n"
        f"  Excerpt: {item.exemplar.excerpt}\n"
        f"  Score: {item.exemplar.score}\n"
        f"  Feedback: {item.exemplar.feedback}\n\n"
        f'Respond with exactly one JSON object: {{"score": <int 0-5>, '
        f'"feedback": "<assessment>", "evidence_quotes": ["<verbatim quote from '
        f'the manuscript>", ...]}}. Quotes must be copied verbatim. A score of 0 '
        f"needs no quotes."
    )
    if prior_violations:
        system += (
            "\n\nA previous evaluation of this requirement was rejected for: "
            + ", ".join(prior_violations)
            + ". Avoid these problems."
        )
    excerpt_blocks = [
        f"## {e.section_heading}\n{e.text}" for e in bundle.excerpts
    ]
    user = "Manuscript excerpts:\n\n" + "\n\n".join(excerpt_blocks)
    if bundle.truncated:
        user += "\n\n(Excerpts were truncated to fit the context budget.)"
    tools = (SEARCH_TOOL,) if spec.max_tool_calls > 0 else ()
    return ChatRequest(
        model_name=model_name,
        messages=(Message("system", system), Message("user", user)),
        tool_declarations=tools,
        request_tag=request_tag,
    )


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_agent_output(raw: str) -> ParsedOutput:
    """Extract the first well-formed {score, feedback, evidence_quotes} object.

    Purely syntactic; range and length checks belong to validate_evaluation.
    """
    candidates = [m.group(1) for m in _FENCE.finditer(raw)]
    candidates.append(raw)
    for candidate in candidates:
        obj = _first_json_object(candidate)
        if obj is not None and "score" in obj:
            quotes = obj.get("evidence_quotes", [])
            if not isinstance(quotes, list):
                quotes = [quotes]
            return ParsedOutput(
                score=obj.get("score"),
                feedback=str(obj.get("feedback", "")),
                evidence_quotes=tuple(str(q) for q in quotes),
            )
    raise AgentError("unparseable")


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    for start in range(len(text)):
        if text[start] != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _normalize_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def validate_evaluation(candidate: ParsedOutput | None, doc: ParsedDocument,
                        thresholds: ValidationThresholds = ValidationThresholds()) -> ValidationVerdict:
    """Threshold checks: parseability, score range, feedback length, quote presence.

    The quote check is waived for score 0: absence needs no evidence.
    """
    if candidate is None:
        return ValidationVerdict(("unparseable",))
    violations: list[str] = []
    score = candidate.score
    if not isinstance(score, int) or isinstance(score, bool) or not 0 <= score <= 5:
        violations.append("score_out_of_range")
    if len(candidate.feedback.strip()) < thresholds.min_feedback_chars:
        violations.append("feedback_too_short")
    if isinstance(score, int) and not isinstance(score, bool) and score != 0:
        normalized_doc = _normalize_ws(doc.full_text)
        for quote in candidate.evidence_quotes:
            if _normalize_ws(quote) not in normalized_doc:
                violations.append("quote_not_in_document")
                break
    return ValidationVerdict(tuple(violations))


def _run_tool_call(call_arguments: str, toolkit: ArxivClient) -> tuple[str, list[str]]:
    """Execute one arxiv_search tool call; returns (tool message text, entry ids)."""
    try:
        args = json.loads(call_arguments)
        query = SearchQuery(
            terms=(QueryTerm(args.get("field", "all"), str(args["query"])),),
            max_results=int(args.get("max_results", 5)),
        )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        return f"tool error: invalid arguments ({exc})", []
    try:
        entries = toolkit.search(query)
    except Exception as exc:  # tool failures are reported to the model, not fatal
        return f"tool error: {exc}", []
    lines = [
        f"- {e.entry_id} | {e.title} ({e.published[:10]})" for e in entries
    ]
    return "Search results:\n" + ("\n".join(lines) or "(no results)"), [e.entry_id for e in entries]


def run_item_agent(spec: AgentSpec, doc: ParsedDocument, bundle: ExcerptBundle,
                   provider: ChatProvider, toolkit: ArxivClient | None,
                   scale: ScoreScale = ScoreScale(),
                   thresholds: ValidationThresholds = ValidationThresholds(),
                   max_attempts: int = 3, model_name: str = "",
                   trace_id: str | None = None, on_attempt=None) -> ItemEvaluation:
    """Evaluate one checklist item: prompt, bounded tool loop, parse, validate, retry.

    Each rejected attempt re-spawns a fresh agent whose prompt carries the
    predecessor's violation codes. Transport errors propagate to the caller.
    """
    trace = trace_id or uuid.uuid4().hex[:12]
    violations: tuple[str, ...] = ()
    last_feedback = ""
    citations: list[str] = []

    for attempt in range(1, max_attempts + 1):
        tag_base = f"item-{spec.item.item_id}-attempt-{attempt}"
        request = build_prompt(
            spec, bundle, scale,
            request_tag=f"{tag_base}-call-1",
            prior_violations=violations,
            model_name=model_name,
        )
        response = provider.complete(request)

        calls_used = 0
        messages = list(request.messages)
        while response.tool_calls and calls_used < spec.max_tool_calls:
            calls_used += 1
            call = response.tool_calls[0]
            if toolkit is None or call.name != SEARCH_TOOL.name:
                tool_text, ids = f"tool error: unknown tool {call.name}", []
            else:
                tool_text, ids = _run_tool_call(call.arguments, toolkit)
            citations.extend(ids)
            messages.append(Message("assistant", f"[tool call {call.name}: {call.arguments}]"))
            messages.append(Message("tool", tool_text))
            request = ChatRequest(
                model_name=model_name,
                messages=tuple(messages),
                tool_declarations=request.tool_declarations,
                request_tag=f"{tag_base}-call-{calls_used + 1}",
            )
            response = provider.complete(request)

        try:
            parsed = parse_agent_output(response.content)
        except AgentError:
            parsed = None
        verdict = validate_evaluation(parsed, doc, thresholds)
        if on_attempt is not None:
            on_attempt(attempt, verdict.violations, attempt < max_attempts)
        if verdict.accepted:
            assert parsed is not None
            return ItemEvaluation(
                item_id=spec.item.item_id,
                score=int(parsed.score),  # type: ignore[arg-type]
                feedback=parsed.feedback,
                evidence_quotes=parsed.evidence_quotes,
                citations_consulted=tuple(dict.fromkeys(citations)),
                attempts=attempt,
                status="ok",
                agent_trace_id=trace,
            )
        violations = verdict.violations
        if parsed is not None:
            last_feedback = parsed.feedback

    return ItemEvaluation(
        item_id=spec.item.item_id,
        score=None,
        feedback=last_feedback,
        evidence_quotes=(),
        citations_consulted=tuple(dict.fromkeys(citations)),
        attempts=max_attempts,
        status="failed",
        agent_trace_id=trace,
        violations=violations,
    )
