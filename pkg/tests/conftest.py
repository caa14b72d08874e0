"""Shared fixtures: simulated datasets reused across test modules.

Session scope keeps the expensive trajectory models (pitot, datacompat) to a
single generation each; datasets and models are immutable, so sharing is
safe.
"""

from __future__ import annotations

import numpy as np
import pytest

from sepnls.models.simulate import SimSpec, simulate

SEED = 11


@pytest.fixture(scope="session")
def scalar1_zero():
    return simulate(SimSpec(model_id="scalar1", sigma=0.0, seed=SEED))


@pytest.fixture(scope="session")
def scalar1_noisy():
    return simulate(SimSpec(model_id="scalar1", seed=SEED))


@pytest.fixture(scope="session")
def scalar2_zero():
    return simulate(SimSpec(model_id="scalar2", sigma=0.0, seed=SEED))


@pytest.fixture(scope="session")
def scalar2_noisy():
    return simulate(SimSpec(model_id="scalar2", seed=SEED))


@pytest.fixture(scope="session")
def mag_zero():
    return simulate(SimSpec(model_id="mag", sigma=0.0, seed=SEED, N=60))


@pytest.fixture(scope="session")
def mag_noisy():
    return simulate(SimSpec(model_id="mag", seed=SEED, N=120))


@pytest.fixture(scope="session")
def pitot_zero():
    # a short trajectory keeps the unit tests quick; the acceptance module
    # exercises the full-length default
    return simulate(SimSpec(model_id="pitot", sigma=0.0, seed=SEED, duration=16.0))


@pytest.fixture(scope="session")
def datacompat_zero():
    return simulate(SimSpec(model_id="datacompat", sigma=0.0, seed=SEED))


@pytest.fixture(scope="session")
def all_zero_sims(scalar1_zero, scalar2_zero, pitot_zero, mag_zero, datacompat_zero):
    return {
        "scalar1": scalar1_zero,
        "scalar2": scalar2_zero,
        "pitot": pitot_zero,
        "mag": mag_zero,
        "datacompat": datacompat_zero,
    }


def random_inbounds(space, rng, shrink=1.0):
    """Draw (xi1, xi2) uniformly inside the box, optionally shrunk toward the
    midpoint so finite differences stay interior."""
    mid1 = 0.5 * (space.lo1 + space.hi1)
    mid2 = 0.5 * (space.lo2 + space.hi2)
    half1 = 0.5 * (space.hi1 - space.lo1) * shrink
    half2 = 0.5 * (space.hi2 - space.lo2) * shrink
    xi1 = mid1 + (2.0 * rng.random(space.n1) - 1.0) * half1
    xi2 = mid2 + (2.0 * rng.random(space.n2) - 1.0) * half2
    return xi1, xi2


def assert_records_equal(a, b):
    """Bit-for-bit equality of two stage-1 candidate records."""
    np.testing.assert_array_equal(a.xi2p, b.xi2p)
    np.testing.assert_array_equal(a.xi1p, b.xi1p)
    assert a.traceR == b.traceR
    np.testing.assert_array_equal(a.Rdiag, b.Rdiag)
    assert (a.ratioA, a.ratioB) == (b.ratioA, b.ratioB)
    assert (a.pdA, a.pdB, a.in_ball, a.usable, a.screened_ok) == (
        b.pdA, b.pdB, b.in_ball, b.usable, b.screened_ok)
