"""Shared model fixtures; models are cached per session (they are immutable)."""

import functools

import numpy as np
import pytest

from vstatic.model_spaces import make_vstatic, resolve_model


@functools.lru_cache(maxsize=None)
def cached_model(spec):
    return resolve_model(spec)


@functools.lru_cache(maxsize=None)
def cached_vstatic(spec, a, b):
    return make_vstatic(cached_model(spec), a, b)


@pytest.fixture(scope="session")
def sphere3():
    return cached_model("sphere3")


@pytest.fixture(scope="session")
def sphere2():
    return cached_model("sphere2")


@pytest.fixture(scope="session")
def torus3():
    return cached_model("torus3")


@pytest.fixture(scope="session")
def euclidean3_ball():
    return cached_model("euclidean3_ball")


@pytest.fixture(scope="session")
def euclidean2_ball():
    return cached_model("euclidean2_ball")


@pytest.fixture(scope="session")
def sphere3_ball():
    return cached_model("sphere3_ball")


@pytest.fixture(scope="session")
def hyperbolic3_ball():
    return cached_model("hyperbolic3_ball")


@pytest.fixture(scope="session")
def s2xs2():
    return cached_model("s2xs2")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
