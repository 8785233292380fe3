import json
from pathlib import Path

import pytest

from slreval.checklist import load_registry
from slreval.ingest import ingest_structured
from slreval.provider import ChatResponse, MockProvider

FIXTURES = Path(__file__).parent / "fixtures"

# Populated by the acceptance tests; echoed after the run so the suite output
# doubles as a release checklist.
ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{outcome}  {name}")


@pytest.fixture(scope="session")
def registry():
    return load_registry()


@pytest.fixture()
def sample_doc():
    from importlib import resources

    path = resources.files("slreval.data").joinpath("sample_slr.json")
    return ingest_structured(str(path))


@pytest.fixture()
def fixture_doc():
    return ingest_structured(FIXTURES / "structured_doc.json")


def valid_output(doc, score=4, feedback="The requirement is addressed with clear reporting."):
    """A valid agent output JSON string whose quote is lifted from the document."""
    quote = doc.sections[0].body_text[:60]
    body = {"score": score, "feedback": feedback, "evidence_quotes": [] if score == 0 else [quote]}
    return json.dumps(body)


def script_all_items(doc, scores=None, attempts=1):
    """MockProvider scripted with a valid first-attempt response for all 27 items."""
    provider = MockProvider()
    for item_id in range(1, 28):
        score = scores.get(item_id, 4) if scores else 4
        provider.script(
            f"item-{item_id}-attempt-{attempts}-call-1",
            ChatResponse(content=valid_output(doc, score=score)),
        )
    return provider
