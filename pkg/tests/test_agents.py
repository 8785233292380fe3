import json

import httpx
import pytest

from slreval.agents import (
    AgentError,
    AgentSpec,
    ValidationThresholds,
    build_prompt,
    parse_agent_output,
    run_item_agent,
    validate_evaluation,
)
from slreval.arxiv import ArxivClient, ArxivClientConfig, VirtualClock
from slreval.checklist import ScoreScale
from slreval.ingest import section_excerpts
from slreval.provider import ChatResponse, MockProvider, ToolCall, TransportError

from conftest import FIXTURES, valid_output

FEED_XML = (FIXTURES / "arxiv_feed.xml").read_text()


@pytest.fixture()
def item5(registry):
    return registry.item(5)


@pytest.fixture()
def spec5(item5):
    return AgentSpec(item=item5)


@pytest.fixture()
def bundle5(sample_doc, item5):
    return section_excerpts(sample_doc, item5, budget=4000)


class TestBuildPrompt:
    def test_guidance_and_exemplar_included(self, spec5, bundle5):
        request = build_prompt(spec5, bundle5, ScoreScale())
        system = request.messages[0].content
        assert spec5.item.guidance_text in system
        assert spec5.item.exemplar.excerpt in system
        assert spec5.item.exemplar.feedback in system
        assert "Not Addressed" in system and "Thoroughly Addressed" in system

    def test_excerpts_in_user_message(self, spec5, bundle5):
        request = build_prompt(spec5, bundle5, ScoreScale())
        user = request.messages[1].content
        for excerpt in bundle5.excerpts:
            assert excerpt.text in user

    def test_no_tools_when_disabled(self, item5, bundle5):
        spec = AgentSpec(item=item5, max_tool_calls=0)
        assert build_prompt(spec, bundle5, ScoreScale()).tool_declarations == ()

    def test_tools_when_enabled(self, spec5, bundle5):
        request = build_prompt(spec5, bundle5, ScoreScale())
        assert [t.name for t in request.tool_declarations] == ["arxiv_search"]

    def test_deterministic(self, spec5, bundle5):
        a = build_prompt(spec5, bundle5, ScoreScale())
        b = build_prompt(spec5, bundle5, ScoreScale())
        assert a == b

    def test_item_mismatch_rejected(self, registry, sample_doc):
        spec = AgentSpec(item=registry.item(5))
        wrong_bundle = section_excerpts(sample_doc, registry.item(6), budget=1000)
        with pytest.raises(AgentError):
            build_prompt(spec, wrong_bundle, ScoreScale())

    def test_violations_appended_on_retry(self, spec5, bundle5):
        request = build_prompt(
            spec5, bundle5, ScoreScale(), prior_violations=("feedback_too_short",)
        )
        assert "feedback_too_short" in request.messages[0].content


class TestParseAgentOutput:
    def test_bare_object(self):
        parsed = parse_agent_output(
            '{"score": 4, "feedback": "adequate", "evidence_quotes": ["q1"]}'
        )
        assert parsed.score == 4
        assert parsed.feedback == "adequate"
        assert parsed.evidence_quotes == ("q1",)

    def test_fenced_object_in_prose(self):
        raw = (
            "Here is my assessment.\n```json\n"
            '{"score": 3, "feedback": "partial", "evidence_quotes": []}\n'
            "```\nLet me know."
        )
        parsed = parse_agent_output(raw)
        assert parsed.score == 3

    def test_object_embedded_in_prose(self):
        raw = 'Assessment: {"score": 2, "feedback": "weak", "evidence_quotes": []} done'
        assert parse_agent_output(raw).score == 2

    def test_prose_only_unparseable(self):
        with pytest.raises(AgentError, match="unparseable"):
            parse_agent_output("I think it deserves a 4")

    def test_no_semantic_rejection(self):
        # out-of-range score parses fine; validation is a separate stage
        parsed = parse_agent_output('{"score": 9, "feedback": "", "evidence_quotes": []}')
        assert parsed.score == 9


class TestValidateEvaluation:
    def test_accepts_valid(self, sample_doc):
        parsed = parse_agent_output(valid_output(sample_doc))
        verdict = validate_evaluation(parsed, sample_doc)
        assert verdict.accepted and verdict.violations == ()

    def test_score_out_of_range(self, sample_doc):
        parsed = parse_agent_output(
            json.dumps({"score": 7, "feedback": "x" * 30, "evidence_quotes": []})
        )
        assert "score_out_of_range" in validate_evaluation(parsed, sample_doc).violations

    def test_non_integer_score_rejected(self, sample_doc):
        parsed = parse_agent_output(
            json.dumps({"score": 3.5, "feedback": "x" * 30, "evidence_quotes": []})
        )
        assert "score_out_of_range" in validate_evaluation(parsed, sample_doc).violations

    def test_feedback_too_short(self, sample_doc):
        parsed = parse_agent_output(
            json.dumps({"score": 0, "feedback": "meh", "evidence_quotes": []})
        )
        assert "feedback_too_short" in validate_evaluation(parsed, sample_doc).violations

    def test_zero_score_waives_quote_check(self, sample_doc):
        parsed = parse_agent_output(
            json.dumps({"score": 0, "feedback": "not addressed anywhere in the text",
                        "evidence_quotes": []})
        )
        assert validate_evaluation(parsed, sample_doc).accepted

    def test_fabricated_quote_rejected(self, sample_doc):
        parsed = parse_agent_output(
            json.dumps({"score": 4, "feedback": "x" * 30,
                        "evidence_quotes": ["this sentence is not in the manuscript"]})
        )
        assert "quote_not_in_document" in validate_evaluation(parsed, sample_doc).violations

    def test_whitespace_normalized_quote_accepted(self, sample_doc):
        raw_quote = sample_doc.sections[1].body_text[:50]
        mangled = raw_quote.replace(" ", "\n ", 1)
        parsed = parse_agent_output(
            json.dumps({"score": 4, "feedback": "x" * 30, "evidence_quotes": [mangled]})
        )
        assert validate_evaluation(parsed, sample_doc).accepted

    def test_unparseable_verdict(self, sample_doc):
        verdict = validate_evaluation(None, sample_doc)
        assert verdict.violations == ("unparseable",)


def _toolkit():
    def handler(request):
        return httpx.Response(200, text=FEED_XML)

    return ArxivClient(
        ArxivClientConfig(min_interval_s=0.0, api_base="http://arxiv.test/api"),
        http_client=httpx.Client(transport=httpx.MockTransport(handler)),
        clock=VirtualClock(),
    )


class TestRunItemAgent:
    def test_valid_first_attempt(self, spec5, sample_doc, bundle5):
        provider = MockProvider(
            {"item-5-attempt-1-call-1": ChatResponse(content=valid_output(sample_doc))}
        )
        evaluation = run_item_agent(spec5, sample_doc, bundle5, provider, None)
        assert evaluation.status == "ok"
        assert evaluation.attempts == 1
        assert evaluation.score == 4

    def test_tool_loop_records_citations(self, spec5, sample_doc, bundle5):
        provider = MockProvider({
            "item-5-attempt-1-call-1": ChatResponse(
                content="",
                tool_calls=(ToolCall("arxiv_search", '{"query": "risk of bias"}'),),
                finish_reason="tool_call",
            ),
            "item-5-attempt-1-call-2": ChatResponse(content=valid_output(sample_doc)),
        })
        evaluation = run_item_agent(spec5, sample_doc, bundle5, provider, _toolkit())
        assert evaluation.status == "ok"
        assert evaluation.attempts == 1
        assert len(evaluation.citations_consulted) == 10

    def test_tool_loop_bounded(self, item5, sample_doc):
        spec = AgentSpec(item=item5, max_tool_calls=2)
        bundle = section_excerpts(sample_doc, item5, budget=1000)
        always_tool = ChatResponse(
            content="",
            tool_calls=(ToolCall("arxiv_search", '{"query": "x"}'),),
            finish_reason="tool_call",
        )
        provider = MockProvider({
            f"item-5-attempt-{a}-call-{c}": always_tool
            for a in (1, 2, 3) for c in (1, 2, 3)
        })
        evaluation = run_item_agent(spec, sample_doc, bundle, provider, _toolkit(),
                                    max_attempts=1)
        # 1 initial + max_tool_calls invocations, then gives up parsing
        assert len(provider.calls) == 3
        assert evaluation.status == "failed"

    def test_retry_then_success(self, spec5, sample_doc, bundle5):
        provider = MockProvider({
            "item-5-attempt-1-call-1": ChatResponse(content="not json"),
            "item-5-attempt-2-call-1": ChatResponse(content="still not json"),
            "item-5-attempt-3-call-1": ChatResponse(content=valid_output(sample_doc)),
        })
        evaluation = run_item_agent(spec5, sample_doc, bundle5, provider, None,
                                    max_attempts=3)
        assert evaluation.status == "ok"
        assert evaluation.attempts == 3
        # retry prompts carry the predecessor's violation codes
        retry_request = provider.calls[1]
        assert "unparseable" in retry_request.messages[0].content

    def test_exhausted_retries_carry_violations(self, spec5, sample_doc, bundle5):
        provider = MockProvider({
            f"item-5-attempt-{a}-call-1": ChatResponse(content="prose only")
            for a in (1, 2)
        })
        evaluation = run_item_agent(spec5, sample_doc, bundle5, provider, None,
                                    max_attempts=2)
        assert evaluation.status == "failed"
        assert evaluation.attempts == 2
        assert evaluation.score is None
        assert "unparseable" in evaluation.violations

    def test_transport_error_propagates(self, spec5, sample_doc, bundle5):
        class DeadProvider:
            def complete(self, request):
                raise TransportError("provider down")

        with pytest.raises(TransportError):
            run_item_agent(spec5, sample_doc, bundle5, DeadProvider(), None)

    def test_evidence_integrity(self, spec5, sample_doc, bundle5):
        provider = MockProvider(
            {"item-5-attempt-1-call-1": ChatResponse(content=valid_output(sample_doc))}
        )
        evaluation = run_item_agent(spec5, sample_doc, bundle5, provider, None)
        for quote in evaluation.evidence_quotes:
            assert quote in sample_doc.full_text
