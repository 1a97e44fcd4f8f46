import numpy as np
import pytest

from paperrec.artifacts import Bundle, build_default_pipeline
from paperrec.citegraph import CitationGraph, build_graph
from paperrec.synthetic import tiny5


@pytest.fixture(scope="session")
def tiny5_store():
    return tiny5()


@pytest.fixture(scope="session")
def tiny5_graph(tiny5_store) -> CitationGraph:
    return build_graph(tiny5_store)


@pytest.fixture(scope="session")
def tiny5_bundle(tiny5_store, tmp_path_factory) -> Bundle:
    """Full pipeline over the 5-paper fixture, persisted once per session."""
    data_dir = tmp_path_factory.mktemp("tiny5-data")
    return build_default_pipeline(tiny5_store, data_dir)


@pytest.fixture(scope="session")
def tiny5_data_dir(tiny5_store, tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("tiny5-artifacts")
    build_default_pipeline(tiny5_store, data_dir)
    return data_dir


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if outcome != "error" and rep.when != "call":
                continue
            name = nodeid.split("::")[-1]
            rows.append((name, outcome == "passed"))
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok in sorted(set(rows)):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
