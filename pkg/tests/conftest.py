"""Pytest configuration and fixtures for ModelMix tests."""
import tempfile
from pathlib import Path

import numpy as np
import pytest

from modelmix.core.session import Session
from modelmix.dist_kernel import KernelFamily, MixtureKernel
from modelmix.problems import example_31, make_least_squares, make_logistic, make_mlp, make_quadratic


@pytest.fixture
def temp_db():
    """Create a temporary database for testing."""
    with tempfile.NamedTemporaryFile(suffix=".db", delete=False) as f:
        db_path = f.name

    yield db_path

    # Cleanup
    Path(db_path).unlink(missing_ok=True)


@pytest.fixture
def headless_session(temp_db):
    """A started headless session writing to a temporary ledger."""
    session = Session(mode="headless", db_path=temp_db, service_name="modelmix_tests")
    session.start()
    Session.set_instance(session)

    yield session

    session.stop()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def gaussian_pair():
    """Gaussian kernels with a uniform component, shifted by one sensitivity unit."""
    p0 = MixtureKernel(family=KernelFamily.GAUSSIAN, scale=1.0, shift=0.0, halfwidth=0.5)
    return p0, p0.with_shift(1.0)


@pytest.fixture
def laplace_pair():
    p0 = MixtureKernel(family=KernelFamily.LAPLACE, scale=1.0, shift=0.0, halfwidth=0.5)
    return p0, p0.with_shift(1.0)


@pytest.fixture
def small_least_squares():
    return make_least_squares(n=200, d=5, seed=3)


@pytest.fixture
def small_logistic():
    return make_logistic(n=200, d=5, seed=3)


@pytest.fixture
def small_mlp():
    return make_mlp((4, 6, 1), n=100, seed=3)


@pytest.fixture
def quadratic():
    return make_quadratic(3, [1.0, -2.0, 0.5])


@pytest.fixture
def counterexample():
    return example_31()
