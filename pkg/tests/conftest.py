"""Shared helpers: random covariance matrices and synthetic study data."""

import csv

import numpy as np
import pytest

from robradius.datamodel import Dataset, Specification

#: pass/fail lines collected by the acceptance tests; printed after capture
#: ends so they survive a plain ``pytest -v`` run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_cov(rng, k, min_eig=0.05):
    """Random well-conditioned symmetric positive definite matrix."""
    A = rng.standard_normal((k, k))
    cov = A @ A.T / k + min_eig * np.eye(k)
    return 0.5 * (cov + cov.T)


def synthetic_columns(rng, n, missing_share=0.0):
    """Raw columns for a small study: outcome, treatment, controls, extras."""
    x1 = rng.standard_normal(n)
    x2 = rng.standard_normal(n)
    d = 0.6 * x1 - 0.2 * x2 + rng.standard_normal(n)
    y = 1.0 * d + 0.8 * x1 - 0.5 * x2 + rng.standard_normal(n)
    w = rng.uniform(0.5, 2.0, size=n)
    group = [f"g{int(v)}" for v in rng.integers(0, 12, size=n)]
    region = [["north", "south", "east"][int(v)] for v in rng.integers(0, 3, n)]
    cols = {
        "y": list(y),
        "d": list(d),
        "x1": list(x1),
        "x2": list(x2),
        "w": list(w),
        "group": group,
        "region": region,
    }
    if missing_share > 0:
        drop = rng.random(n) < missing_share
        cols["x2"] = [np.nan if m else v for v, m in zip(cols["x2"], drop)]
    return cols


def synthetic_dataset(rng, n, **kwargs):
    return Dataset.from_columns(synthetic_columns(rng, n), **kwargs)


def write_csv(path, columns):
    names = list(columns)
    n = len(columns[names[0]])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(n):
            row = []
            for name in names:
                v = columns[name][i]
                if isinstance(v, float) and np.isnan(v):
                    row.append("")
                else:
                    row.append(v)
            writer.writerow(row)


@pytest.fixture
def study_specs():
    return [
        Specification(label="main", outcome="y", treatment="d",
                      controls=("x1", "x2"), is_main=True),
        Specification(label="drop_x2", outcome="y", treatment="d",
                      controls=("x1",)),
        Specification(label="weighted", outcome="y", treatment="d",
                      controls=("x1", "x2"), weights="w"),
    ]
