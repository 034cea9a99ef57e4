import numpy as np
import pytest

from quasispec import (PieceMeasure, Substitution, SubshiftWord, SuspensionModel,
                       build_omega, substitution_prefix, two_sided)


def constant_model(v=0.0):
    return SuspensionModel.from_pieces({"a": PieceMeasure.constant(1.0, v)})


def comb_model(mass=1.0):
    """Unit-spacing comb of point masses (Kronig-Penney)."""
    return SuspensionModel.from_pieces({"a": PieceMeasure.delta(1.0, 0.5, mass)})


def fibonacci_model(va=0.0, vb=4.0):
    return SuspensionModel.from_pieces({"a": PieceMeasure.constant(1.0, va),
                                        "b": PieceMeasure.constant(1.0, vb)})


def periodic_omega(model, n, left=None):
    return build_omega(model, two_sided(SubshiftWord("a" * n), left=left))


def fibonacci_omega(model, n, left=None):
    left = min(512, n) if left is None else left
    w = two_sided(substitution_prefix(Substitution.fibonacci(), "a", n), left=left)
    return build_omega(model, w), w


@pytest.fixture(scope="session")
def fib_model():
    return fibonacci_model()


@pytest.fixture(scope="session")
def fib_omega(fib_model):
    return fibonacci_omega(fib_model, 12000)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
