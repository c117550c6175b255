"""Shared fixtures: the illustrative sparse-kernel configuration and helpers."""

import numpy as np
import pytest

from sparsegp import (
    BumpFunction,
    ConstantCore,
    HomoskedasticNoise,
    KernelHyperparameters,
    SparseKernelParams,
    StationaryMatern,
)


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else ("FAIL" if report.failed else "SKIP")
        print(f"\n[ACCEPTANCE] {name}: {outcome}", flush=True)


@pytest.fixture
def baseline_sparse() -> SparseKernelParams:
    """Two sets of three bumps on the unit interval with a short Wendland.

    Chosen so that f_1 is positive at 0.17 and 0.70, f_2 is positive at
    0.17 and 0.90 but zero at 0.70, giving the characteristic
    distance-unrelated zero/nonzero pattern.
    """
    return SparseKernelParams.from_bumps(
        scale=1.0,
        wendland_radius=0.15,
        bumps=[
            [BumpFunction([c], 1.0, 1.0, 0.08) for c in (0.15, 0.45, 0.70)],
            [BumpFunction([c], 1.0, 1.0, 0.08) for c in (0.20, 0.55, 0.90)],
        ],
    )


@pytest.fixture
def baseline_theta(baseline_sparse) -> KernelHyperparameters:
    return KernelHyperparameters(
        core=ConstantCore(), sparse=baseline_sparse, noise=HomoskedasticNoise(0.1)
    )


@pytest.fixture
def unit_grid():
    return np.linspace(0.0, 1.0, 100)[:, None]


@pytest.fixture
def matern_theta(baseline_sparse) -> KernelHyperparameters:
    return KernelHyperparameters(
        core=StationaryMatern(variance=1.3, length_scale=0.4, smoothness=2.5),
        sparse=baseline_sparse,
        noise=HomoskedasticNoise(0.05),
    )
