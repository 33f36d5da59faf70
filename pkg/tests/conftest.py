import os
from pathlib import Path

import numpy as np
import pytest

from algschwarz.partition import build_layout, build_partition_of_unity, partition_graph
from algschwarz.sparse import AdjacencyGraph, read_matrix_market

ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def record(criterion: str, status: str, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((criterion, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status} {criterion}: {detail}")


def layout_for(a, n_parts, seed=0):
    g = AdjacencyGraph.from_matrix(a)
    return build_layout(g, partition_graph(g, n_parts, seed=seed))


def pou_for(layout, scheme="boolean"):
    return build_partition_of_unity(layout, scheme)


def s3rmt3m3_path():
    """Location of the optional SuiteSparse file (never downloaded)."""
    env = os.environ.get("ALGSCHWARZ_S3RMT3M3")
    candidates = [env] if env else []
    candidates.append(str(Path(__file__).parent / "data" / "s3rmt3m3.mtx"))
    for c in candidates:
        if c and Path(c).is_file():
            return c
    return None


@pytest.fixture(scope="session")
def s3rmt3m3():
    path = s3rmt3m3_path()
    if path is None:
        pytest.skip("s3rmt3m3.mtx not available (set ALGSCHWARZ_S3RMT3M3 or add tests/data/s3rmt3m3.mtx)")
    return read_matrix_market(path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
