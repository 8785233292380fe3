"""Coordinator layer: task planning, bounded-parallel dispatch, thresholds, synthesis."""
from __future__ import annotations

import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .agents import (
    AgentSpec,
    ItemEvaluation,
    ValidationThresholds,
    run_item_agent,
)
from .arxiv import ArxivClient
from .checklist import ChecklistRegistry, ScoreScale, Society
from .ingest import ParsedDocument, section_excerpts
from .provider import ChatProvider, ChatRequest, Message, ProviderError

DEFAULT_MAX_PARALLEL = 6
DEFAULT_RETRY_BUDGET = 2  # extra attempts after the first


class OrchestratorError(Exception):
    pass


@dataclass
class RunConfig:
    max_parallel: int = DEFAULT_MAX_PARALLEL
    retry_budget: int = DEFAULT_RETRY_BUDGET
    excerpt_budget: int = 12_000
    max_tool_calls: int = 3
    min_feedback_chars: int = 20
    model_name: str = ""
    synthesis_mode: str = "template"  # template | model

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvaluationTask:
    task_id: str
    item_id: int
    state: str = "pending"  # pending | running | retrying | done | failed
    attempts: int = 0
    last_violations: tuple[str, ...] = ()


@dataclass(frozen=True)
class SocietyAggregate:
    society: Society
    mean_score: float | None
    items_scored: int
    items_failed: int

    def to_dict(self) -> dict:
        return {
            "name": self.society.value,
            "mean": self.mean_score,
            "scored": self.items_scored,
            "failed": self.items_failed,
        }


@dataclass(frozen=True)
class EvaluationReport:
    run_id: str
    item_evaluations: tuple[ItemEvaluation, ...]
    society_aggregates: tuple[SocietyAggregate, ...]
    overall_mean: float | None
    narrative_summary: str
    generated_at: float
    degenerate: bool = False
    summary_fallback: bool = False

    def to_dict(self, registry: ChecklistRegistry | None = None) -> dict:
        society_of = {}
        if registry:
            society_of = {it.item_id: it.society.value for it in registry.items}
        return {
            "schema_version": "1",
            "run_id": self.run_id,
            "items": [
                {
                    "id": ev.item_id,
                    "society": society_of.get(ev.item_id),
                    "score": ev.score,
                    "feedback": ev.feedback,
                    "evidence_quotes": list(ev.evidence_quotes),
                    "citations": list(ev.citations_consulted),
                    "attempts": ev.attempts,
                    "status": ev.status,
                    "violations": list(ev.violations),
                }
                for ev in self.item_evaluations
            ],
            "societies": [agg.to_dict() for agg in self.society_aggregates],
            "overall": self.overall_mean,
            "summary": self.narrative_summary,
            "degenerate": self.degenerate,
            "summary_fallback": self.summary_fallback,
            "timestamps": {"generated_at": self.generated_at},
        }

    @staticmethod
    def from_dict(doc: dict) -> "EvaluationReport":
        evals = tuple(
            ItemEvaluation(
                item_id=i["id"],
                score=i.get("score"),
                feedback=i.get("feedback", ""),
                evidence_quotes=tuple(i.get("evidence_quotes", [])),
                citations_consulted=tuple(i.get("citations", [])),
                attempts=i.get("attempts", 1),
                status=i.get("status", "ok"),
                agent_trace_id="",
                violations=tuple(i.get("violations", [])),
            )
            for i in doc["items"]
        )
        aggs = tuple(
            SocietyAggregate(
                society=Society(a["name"]),
                mean_score=a.get("mean"),
                items_scored=a.get("scored", 0),
                items_failed=a.get("failed", 0),
            )
            for a in doc["societies"]
        )
        return EvaluationReport(
            run_id=doc["run_id"],
            item_evaluations=evals,
            society_aggregates=aggs,
            overall_mean=doc.get("overall"),
            narrative_summary=doc.get("summary", ""),
            generated_at=doc.get("timestamps", {}).get("generated_at", 0.0),
            degenerate=doc.get("degenerate", False),
            summary_fallback=doc.get("summary_fallback", False),
        )


@dataclass
class EvaluationRun:
    run_id: str
    doc_id: str
    state: str = "pending"  # pending | parsing | evaluating | synthesizing | complete | failed
    tasks: list[EvaluationTask] = field(default_factory=list)
    started_at: float = 0.0
    finished_at: float = 0.0
    config: RunConfig = field(default_factory=RunConfig)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "doc_id": self.doc_id,
            "state": self.state,
            "tasks": [
                {
                    "task_id": t.task_id,
                    "item_id": t.item_id,
                    "state": t.state,
                    "attempts": t.attempts,
                    "last_violations": list(t.last_violations),
                }
                for t in self.tasks
            ],
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "config": self.config.to_dict(),
            "error": self.error,
        }


def plan_tasks(registry: ChecklistRegistry, run_id: str = "") -> list[EvaluationTask]:
    """One pending task per checklist item, ordered by item_id."""
    prefix = run_id or "plan"
    return [
        EvaluationTask(task_id=f"{prefix}-item-{it.item_id}", item_id=it.item_id)
        for it in registry.items
    ]


def aggregate(evals: list[ItemEvaluation], registry: ChecklistRegistry) -> tuple[list[SocietyAggregate], float | None]:
    """Per-society and overall arithmetic means over status=ok items."""
    by_id = {ev.item_id: ev for ev in evals}
    missing = [it.item_id for it in registry.items if it.item_id not in by_id]
    if missing:
        raise OrchestratorError(f"evaluations missing for items {missing}")

    aggregates: list[SocietyAggregate] = []
    for society in Society:
        items = [it for it in registry.items if it.society is society]
        ok_scores = [
            by_id[it.item_id].score
            for it in items
            if by_id[it.item_id].status == "ok" and by_id[it.item_id].score is not None
        ]
        failed = sum(1 for it in items if by_id[it.item_id].status != "ok")
        aggregates.append(
            SocietyAggregate(
                society=society,
                mean_score=(sum(ok_scores) / len(ok_scores)) if ok_scores else None,
                items_scored=len(ok_scores),
                items_failed=failed,
            )
        )
    all_ok = [ev.score for ev in evals if ev.status == "ok" and ev.score is not None]
    overall = (sum(all_ok) / len(all_ok)) if all_ok else None
    return aggregates, overall


def template_summary(aggregates: list[SocietyAggregate], overall: float | None,
                     evals: list[ItemEvaluation], registry: ChecklistRegistry) -> str:
    """Deterministic fallback narrative for offline/mock mode."""
    lines = ["PRISMA evaluation summary."]
    if overall is None:
        lines.append("No item could be scored; the report is degenerate.")
    else:
        lines.append(f"Overall mean score: {overall:.2f} / 5.")
    for agg in aggregates:
        if agg.mean_score is None:
            lines.append(f"- {agg.society.value}: no scored items ({agg.items_failed} failed).")
        else:
            suffix = f", {agg.items_failed} failed" if agg.items_failed else ""
            lines.append(
                f"- {agg.society.value}: mean {agg.mean_score:.2f} over "
                f"{agg.items_scored} items{suffix}."
            )
    ok_evals = [ev for ev in evals if ev.status == "ok" and ev.score is not None]
    if ok_evals:
        worst = sorted(ok_evals, key=lambda ev: (ev.score, ev.item_id))[:3]
        titles = {it.item_id: it.title for it in registry.items}
        lines.append(
            "Lowest-scoring items: "
            + "; ".join(f"#{ev.item_id} {titles[ev.item_id]} ({ev.score})" for ev in worst)
        )
    return "\n".join(lines)


def synthesize_report(run: EvaluationRun, evals: list[ItemEvaluation],
                      aggregates: list[SocietyAggregate], overall: float | None,
                      registry: ChecklistRegistry, provider: ChatProvider | None,
                      now=time.time) -> EvaluationReport:
    """Produce the unified report; model synthesis falls back to the template."""
    fallback = False
    if run.config.synthesis_mode == "model" and provider is not None:
        item_lines = "\n".join(
            f"Item {ev.item_id}: score={ev.score} status={ev.status} feedback={ev.feedback}"
            for ev in evals
        )
        request = ChatRequest(
            model_name=run.config.model_name,
            messages=(
                Message("system", "Summarize this PRISMA evaluation for the manuscript "
                                  "authors in a short narrative."),
                Message("user", item_lines),
            ),
            request_tag="synthesis-1",
        )
        try:
            summary = provider.complete(request).content
        except ProviderError:
            summary = template_summary(aggregates, overall, evals, registry)
            fallback = True
    else:
        summary = template_summary(aggregates, overall, evals, registry)

    return EvaluationReport(
        run_id=run.run_id,
        item_evaluations=tuple(sorted(evals, key=lambda ev: ev.item_id)),
        society_aggregates=tuple(aggregates),
        overall_mean=overall,
        narrative_summary=summary,
        generated_at=now(),
        degenerate=overall is None,
        summary_fallback=fallback,
    )


class ProgressEmitter:
    """Serializes progress events and assigns monotone sequence numbers."""

    def __init__(self, run_id: str, sink=None, now=time.time):
        self.run_id = run_id
        self._sink = sink
        self._now = now
        self._seq = 0
        self._lock = threading.Lock()
        self.events: list[dict] = []

    def emit(self, task_id: str, state: str) -> None:
        with self._lock:
            self._seq += 1
            event = {
                "run_id": self.run_id,
                "task_id": task_id,
                "state": state,
                "seq": self._seq,
                "at": self._now(),
            }
            self.events.append(event)
        if self._sink:
            self._sink(event)


def execute_run(doc: ParsedDocument, registry: ChecklistRegistry,
                provider: ChatProvider, toolkit: ArxivClient | None = None,
                config: RunConfig | None = None, run_id: str | None = None,
                progress_sink=None, now=time.time) -> tuple[EvaluationRun, EvaluationReport | None]:
    """Dispatch all 27 item agents with bounded parallelism and threshold retries.

    A permanently failing item is marked failed without aborting the run;
    infrastructure failures (provider transport) fail the run with partial
    results preserved in the run state.
    """
    config = config or RunConfig()
    run = EvaluationRun(
        run_id=run_id or uuid.uuid4().hex[:12],
        doc_id=doc.doc_id,
        config=config,
        started_at=now(),
    )
    run.tasks = plan_tasks(registry, run.run_id)
    emitter = ProgressEmitter(run.run_id, sink=progress_sink, now=now)
    scale = ScoreScale()
    thresholds = ValidationThresholds(min_feedback_chars=config.min_feedback_chars)
    state_lock = threading.Lock()
    evaluations: dict[int, ItemEvaluation] = {}
    infrastructure_error: list[str] = []

    task_by_item = {t.item_id: t for t in run.tasks}

    def set_task_state(task: EvaluationTask, state: str, attempts: int | None = None,
                       violations: tuple[str, ...] = ()) -> None:
        with state_lock:
            task.state = state
            if attempts is not None:
                task.attempts = attempts
            if violations:
                task.last_violations = violations
        emitter.emit(task.task_id, state)

    def worker(item_id: int) -> None:
        task = task_by_item[item_id]
        if infrastructure_error:
            return
        set_task_state(task, "running")
        item = registry.item(item_id)
        spec = AgentSpec(item=item, max_tool_calls=config.max_tool_calls)
        bundle = section_excerpts(doc, item, config.excerpt_budget)

        def on_attempt(attempt: int, violations: tuple[str, ...], will_retry: bool) -> None:
            with state_lock:
                task.attempts = attempt
                task.last_violations = violations
            if violations and will_retry:
                emitter.emit(task.task_id, "retrying")

        try:
            evaluation = run_item_agent(
                spec, doc, bundle, provider, toolkit,
                scale=scale, thresholds=thresholds,
                max_attempts=1 + config.retry_budget,
                model_name=config.model_name,
                trace_id=f"{run.run_id}-i{item_id}",
                on_attempt=on_attempt,
            )
        except ProviderError as exc:
            infrastructure_error.append(str(exc))
            set_task_state(task, "failed")
            return
        with state_lock:
            evaluations[item_id] = evaluation
        set_task_state(
            task,
            "done" if evaluation.status == "ok" else "failed",
            attempts=evaluation.attempts,
            violations=evaluation.violations,
        )

    run.state = "evaluating"
    with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
        futures = [pool.submit(worker, t.item_id) for t in run.tasks]
        for f in futures:
            f.result()

    if infrastructure_error:
        run.state = "failed"
        run.error = f"provider failure: {infrastructure_error[0]}"
        run.finished_at = now()
        return run, None

    run.state = "synthesizing"
    evals = [evaluations[it.item_id] for it in registry.items]
    aggregates, overall = aggregate(evals, registry)
    report = synthesize_report(run, evals, aggregates, overall, registry, provider, now=now)
    run.state = "complete"
    run.finished_at = now()
    return run, report
