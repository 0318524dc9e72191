from __future__ import annotations

import time

import pytest

from citeclust.corpus import AuthorMention, Corpus, PaperRecord
from citeclust.synth import SynthConfig, generate


def paper(pid, year, authors, refs=(), title=None):
    mentions = tuple(AuthorMention(*a) if isinstance(a, tuple) else AuthorMention(a) for a in authors)
    return PaperRecord(pid, year, mentions, frozenset(refs), title)


@pytest.fixture(scope="session")
def small_synth():
    config = SynthConfig(n_authors=150, n_surnames=30, papers_mean=6.0, community_size=30, n_fields=5, seed=3)
    return generate(config)


@pytest.fixture(scope="session")
def small_corpus(small_synth) -> Corpus:
    return small_synth.corpus()


@pytest.fixture(scope="session")
def default_synth():
    return generate(SynthConfig())


@pytest.fixture(scope="session")
def default_corpus(default_synth) -> Corpus:
    return default_synth.corpus()


# -- acceptance reporting ---------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


class Criterion:
    """Records one PASS/FAIL line for an acceptance criterion, including wall time."""

    def __init__(self, cid: str, title: str, budget: float | None = None):
        self.cid, self.title, self.budget = cid, title, budget
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def __enter__(self) -> "Criterion":
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        elapsed = time.perf_counter() - self.start
        over = None
        if exc_type is None and self.budget is not None and elapsed >= self.budget:
            over = AssertionError(f"runtime {elapsed:.1f}s over budget {self.budget:.0f}s")
            exc_type, exc = AssertionError, over
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc_type is not None:
            reason = str(exc).splitlines()[0] if str(exc) else exc_type.__name__
            detail = f"{detail}; {reason}" if detail else reason
        line = f"{self.cid} {status}  {self.title} [{elapsed:.1f}s] {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        if over is not None:
            raise over
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
