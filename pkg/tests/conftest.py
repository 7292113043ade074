import numpy as np
import pytest

from excavgrade import BlockModel, CovarianceModel, PipelineConfig
from excavgrade.synth import generate_scenario, reference_spec


def var_close(a, b):
    """Variance tolerance: absolute or relative 1e-9, whichever is larger."""
    return abs(a - b) <= max(1e-9, 1e-9 * max(abs(a), abs(b)))


def box_model(centroids, dims, means, stds, bench="B1", ids=None):
    centroids = np.asarray(centroids, dtype=float).reshape(-1, 3)
    n = centroids.shape[0]
    dims = np.broadcast_to(np.asarray(dims, dtype=float), (n, 3))
    ids = np.arange(1, n + 1) if ids is None else ids
    return BlockModel(ids, centroids, dims, np.broadcast_to(means, n), np.broadcast_to(stds, n), [bench] * n)


def uniform_bench(mean=60.0, std=2.0, size=40.0, height=10.0, block=2.0, bench="B1"):
    """Grid of identical blocks spanning x, y in [0, size], z in [0, height]."""
    c = np.arange(block / 2, size, block)
    cz = np.arange(block / 2, height, block)
    gx, gy, gz = np.meshgrid(c, c, cz, indexing="ij")
    cent = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    return box_model(cent, (block, block, block), mean, std, bench)


# near-infinite length scales give rho == 1 to double precision
FULL_CORR = CovarianceModel(length_scales=(1e9, 1e9, 1e9), noise=0.0, jitter=0.0)


@pytest.fixture(scope="session")
def reference():
    return generate_scenario(reference_spec())


@pytest.fixture(scope="session")
def default_config():
    return PipelineConfig()


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
