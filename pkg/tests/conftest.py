"""Shared fixtures: paths, the demo dataset, and scripted chat backends."""

from __future__ import annotations

from pathlib import Path

import pytest

from reqimpact import corpus, prompts
from reqimpact.llm import ChatResponse

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


class RouterBackend:
    """Routes prompts to canned responses via (predicate, text) rules."""

    def __init__(self, rules):
        self.rules = list(rules)
        self.requests = []

    def send(self, request):
        self.requests.append(request)
        for predicate, text in self.rules:
            if predicate(request.prompt):
                return ChatResponse(text=text)
        raise AssertionError(f"no scripted response for prompt: {request.prompt[:80]}...")


def impact_lines(selection):
    """Canned selection response listing the given (id, justification) pairs."""
    return "".join(
        f"impacted ReqID: {req_id},justification: {just}\n" for req_id, just in selection
    )


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def demo_dataset() -> corpus.Dataset:
    return corpus.load_dataset(FIXTURES / "demo" / "dataset.json")


@pytest.fixture(scope="session")
def platform_dataset() -> corpus.Dataset:
    return corpus.load_dataset(FIXTURES / "platform_corpus.json")


@pytest.fixture(scope="session")
def catalog() -> prompts.DetailTextCatalog:
    return prompts.load_catalog(domain="DoorDemo")
