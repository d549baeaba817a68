import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stgcnn.data_model import Dataset, DatasetSchema, FeatureKind  # noqa: E402

C, B = FeatureKind.CONTINUOUS, FeatureKind.BINARY


def make_dataset(grids, labels, kinds, names=None, ids=None):
    grids = np.asarray(grids, dtype=float)
    P, F, T = grids.shape
    names = names or tuple(f"f{i}" for i in range(F))
    ids = ids or tuple(f"p{i}" for i in range(P))
    return Dataset(DatasetSchema(tuple(names), tuple(kinds), T), tuple(ids), grids, np.asarray(labels))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def correlated_dataset(P=120, F=6, T=3, seed=0, missing_rate=0.0):
    """Continuous features driven by two shared latent factors at varied loadings."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((P, 2, T))
    load = np.linspace(0.2, 0.98, F)
    X = np.empty((P, F, T))
    for f in range(F):
        k = f % 2
        X[:, f, :] = load[f] * Z[:, k, :] + np.sqrt(1 - load[f] ** 2) * rng.standard_normal((P, T))
    if missing_rate:
        X[rng.random(X.shape) < missing_rate] = np.nan
    labels = np.arange(P) % 2
    return make_dataset(X, labels, (C,) * F)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, tagged via ``record_property``."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props:
                detail = props.get("detail", "")
                lines.append((props["criterion"], f"{'PASS' if outcome == 'passed' else 'FAIL'}  {props['criterion']:>2}  {props['title']}  {detail}".rstrip()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines, key=lambda x: int(x[0])):
            terminalreporter.write_line(text)
