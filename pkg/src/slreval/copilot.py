"""Follow-up research copilot: report-grounded chat and citation verification."""
from __future__ import annotations

import re
import time
import uuid
from dataclasses import dataclass, field

from .arxiv import ArxivClient, ArxivEntry, ArxivError, QueryTerm, SearchQuery
from .checklist import ChecklistItem
from .ingest import ParsedDocument, Section, section_excerpts
from .provider import ChatProvider, ChatRequest, Message, ToolDeclaration
from .agents import SEARCH_TOOL, _run_tool_call
from .store import RunStore, StoreError

DEFAULT_CONTEXT_CHAR_BUDGET = 24_000
MATCH_THRESHOLD = 0.8
AMBIGUOUS_THRESHOLD = 0.5


class CopilotError(Exception):
    pass


@dataclass
class ConversationSession:
    session_id: str
    run_id: str
    history: list[dict] = field(default_factory=list)  # {role, content, at}
    context_refs: dict = field(default_factory=dict)
    char_budget: int = DEFAULT_CONTEXT_CHAR_BUDGET

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "run_id": self.run_id,
            "history": self.history,
            "context_refs": self.context_refs,
            "char_budget": self.char_budget,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ConversationSession":
        return ConversationSession(
            session_id=doc["session_id"],
            run_id=doc["run_id"],
            history=list(doc.get("history", [])),
            context_refs=doc.get("context_refs", {}),
            char_budget=doc.get("char_budget", DEFAULT_CONTEXT_CHAR_BUDGET),
        )


def _seed_message(report: dict, registry_version: str) -> str:
    society_lines = "\n".join(
        f"- {s['name']}: mean {s['mean'] if s['mean'] is not None else 'n/a'}"
        f" ({s.get('failed', 0)} failed)"
        for s in report.get("societies", [])
    )
    ok_items = [i for i in report.get("items", []) if i.get("status") == "ok"]
    worst = sorted(ok_items, key=lambda i: (i["score"], i["id"]))[:3]
    worst_lines = "\n".join(f"- item {i['id']}: score {i['score']}" for i in worst)
    return (
        "You are a research copilot helping an author improve a systematic "
        "literature review that was just evaluated against the "
        f"{registry_version} checklist.\n\n"
        f"Overall mean score: {report.get('overall')}\n"
        f"Society means:\n{society_lines}\n"
        f"Lowest-scoring items:\n{worst_lines}\n\n"
        f"Report summary:\n{report.get('summary', '')}\n\n"
        "Ground every answer in the evaluation above and the manuscript "
        "excerpts provided. You may search arXiv for supporting literature."
    )


def start_session(run_id: str, store: RunStore, registry_version: str = "PRISMA-2020",
                  session_id: str | None = None, now=time.time) -> ConversationSession:
    """Seed a session from a completed run's report and persist it."""
    try:
        run = store.load_run(run_id)
    except StoreError as exc:
        raise CopilotError(f"run {run_id} not found") from exc
    if run.get("state") != "complete" or not store.has_report(run_id):
        raise CopilotError(f"run {run_id} is not complete")
    report = store.load_report(run_id)
    session = ConversationSession(
        session_id=session_id or uuid.uuid4().hex[:12],
        run_id=run_id,
        context_refs={
            "report_run_id": run_id,
            "doc_id": run.get("doc_id"),
            "registry_version": registry_version,
        },
    )
    session.history.append(
        {"role": "system", "content": _seed_message(report, registry_version), "at": now()}
    )
    store.save_session(run_id, session.session_id, session.to_dict())
    return session


def load_session(run_id: str, session_id: str, store: RunStore) -> ConversationSession:
    return ConversationSession.from_dict(store.load_session(run_id, session_id))


_WORD = re.compile(r"[A-Za-z0-9]+")


def _query_tokens(text: str) -> list[str]:
    return [w.lower() for w in _WORD.findall(text)]


def _relevant_excerpts(doc: ParsedDocument, user_message: str, budget: int) -> str:
    """Reuse the section-ranking machinery with the user message as keywords."""
    tokens = _query_tokens(user_message)
    if not tokens or not doc.sections:
        return ""
    pseudo_item = _pseudo_item(tokens)
    bundle = section_excerpts(doc, pseudo_item, budget)
    return "\n\n".join(f"## {e.section_heading}\n{e.text}" for e in bundle.excerpts)


def _pseudo_item(keywords: list[str]) -> ChecklistItem:
    from .checklist import Exemplar, Society

    return ChecklistItem(
        item_id=1,
        society=Society.TITLE_ABSTRACT,
        title="context-query",
        guidance_text="context retrieval",
        exemplar=Exemplar(excerpt="-", score=0, feedback="-"),
        keywords=tuple(keywords[:12]),
    )


def _assemble_messages(session: ConversationSession, user_message: str,
                       doc: ParsedDocument | None) -> list[Message]:
    system = next(h for h in session.history if h["role"] == "system")
    turns = [h for h in session.history if h["role"] != "system"]

    context = ""
    if doc is not None:
        context = _relevant_excerpts(doc, user_message, session.char_budget // 3)
    user_content = user_message
    if context:
        user_content = f"{user_message}\n\nRelevant manuscript excerpts:\n{context}"

    # Drop oldest non-system turns first until the assembled text fits.
    budget = session.char_budget
    kept: list[dict] = []
    used = len(system["content"]) + len(user_content)
    for turn in reversed(turns):
        if used + len(turn["content"]) > budget:
            break
        used += len(turn["content"])
        kept.append(turn)
    kept.reverse()

    messages = [Message("system", system["content"])]
    messages += [Message(t["role"], t["content"]) for t in kept]
    messages.append(Message("user", user_content))
    return messages


def respond(session: ConversationSession, user_message: str, provider: ChatProvider,
            toolkit: ArxivClient | None, store: RunStore,
            doc: ParsedDocument | None = None, max_tool_calls: int = 3,
            now=time.time) -> str:
    """One conversational turn with a bounded tool loop; persists both turns."""
    if not user_message.strip():
        raise CopilotError("empty message")
    turn_index = sum(1 for h in session.history if h["role"] == "user") + 1
    messages = _assemble_messages(session, user_message, doc)
    request = ChatRequest(
        model_name="",
        messages=tuple(messages),
        tool_declarations=(SEARCH_TOOL,) if max_tool_calls > 0 else (),
        request_tag=f"chat-{session.session_id}-turn-{turn_index}-call-1",
    )
    response = provider.complete(request)

    tool_records: list[dict] = []
    calls_used = 0
    working = list(messages)
    while response.tool_calls and calls_used < max_tool_calls:
        calls_used += 1
        call = response.tool_calls[0]
        if toolkit is None or call.name != SEARCH_TOOL.name:
            tool_text = f"tool error: unknown tool {call.name}"
        else:
            tool_text, _ = _run_tool_call(call.arguments, toolkit)
        tool_records.append({"name": call.name, "arguments": call.arguments,
                             "result": tool_text})
        working.append(Message("assistant", f"[tool call {call.name}: {call.arguments}]"))
        working.append(Message("tool", tool_text))
        request = ChatRequest(
            model_name="",
            messages=tuple(working),
            tool_declarations=request.tool_declarations,
            request_tag=f"chat-{session.session_id}-turn-{turn_index}-call-{calls_used + 1}",
        )
        response = provider.complete(request)

    reply = response.content
    at = now()
    session.history.append({"role": "user", "content": user_message, "at": at})
    for record in tool_records:
        session.history.append(
            {"role": "tool", "content": record["result"], "at": at,
             "tool_name": record["name"], "tool_arguments": record["arguments"]}
        )
    session.history.append({"role": "assistant", "content": reply, "at": now()})
    store.save_session(session.run_id, session.session_id, session.to_dict())
    return reply


@dataclass(frozen=True)
class CitationVerdict:
    reference_string: str
    matched_entry: ArxivEntry | None
    confidence: str  # matched | ambiguous | not_found
    rationale: str

    def to_dict(self) -> dict:
        return {
            "reference_string": self.reference_string,
            "matched_entry": self.matched_entry.to_dict() if self.matched_entry else None,
            "confidence": self.confidence,
            "rationale": self.rationale,
        }


_QUOTED = re.compile(r'["“‘\'`]([^"”’\'`]{8,})["”’\'`]')


def extract_title_span(reference: str) -> str:
    """Best-effort title span: longest quoted run, else longest capitalized run."""
    quoted = _QUOTED.findall(reference)
    if quoted:
        return max(quoted, key=len).strip()
    # Longest run of consecutive words that are capitalized or short stopwords.
    words = reference.replace(".", " . ").split()
    best: list[str] = []
    current: list[str] = []
    minor = {"a", "an", "the", "of", "for", "and", "or", "in", "on", "at", "as",
             "with", "to", "via", "by", "from"}
    for w in words:
        token = w.strip(",;:")
        if token and (token[0].isupper() or token.lower() in minor or token.isdigit()):
            current.append(token)
        else:
            if len(current) > len(best):
                best = current
            current = []
    if len(current) > len(best):
        best = current
    return " ".join(best).strip()


def token_overlap(a: str, b: str) -> float:
    """Shared-token fraction normalized by the larger token set."""
    ta, tb = set(_query_tokens(a)), set(_query_tokens(b))
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / max(len(ta), len(tb))


def verify_citation(reference_string: str, toolkit: ArxivClient,
                    match_threshold: float = MATCH_THRESHOLD,
                    ambiguous_threshold: float = AMBIGUOUS_THRESHOLD) -> CitationVerdict:
    """Heuristic citation check against arXiv title search."""
    if not reference_string.strip():
        raise CopilotError("empty reference string")
    title_span = extract_title_span(reference_string)
    query_text = title_span or reference_string
    try:
        entries = toolkit.search(
            SearchQuery(terms=(QueryTerm("title", query_text),), max_results=10)
        )
    except ArxivError as exc:
        raise CopilotError(f"citation lookup failed: {exc}") from exc

    best_entry: ArxivEntry | None = None
    best_overlap = 0.0
    for entry in entries:
        overlap = token_overlap(query_text, entry.title)
        if overlap > best_overlap:
            best_overlap, best_entry = overlap, entry

    if best_entry is not None and best_overlap >= match_threshold:
        return CitationVerdict(
            reference_string, best_entry, "matched",
            f"title overlap {best_overlap:.2f} with {best_entry.entry_id}",
        )
    if best_entry is not None and best_overlap >= ambiguous_threshold:
        return CitationVerdict(
            reference_string, best_entry, "ambiguous",
            f"partial title overlap {best_overlap:.2f} with {best_entry.entry_id}",
        )
    return CitationVerdict(
        reference_string, None, "not_found",
        f"best title overlap {best_overlap:.2f} below threshold",
    )
