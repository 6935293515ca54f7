import numpy as np
import pytest

from stochns import (MultiplicativeNoise, NoiseSystem, TransportNoise,
                     build_lattice, validate_system)
from stochns.fields import GevreyWeight, random_field
from stochns.nonlinear import dealias


@pytest.fixture(scope="session")
def lat16():
    return build_lattice(2, 16)


@pytest.fixture(scope="session")
def lat32():
    return build_lattice(2, 32)


@pytest.fixture(scope="session")
def lat64():
    return build_lattice(2, 64)


@pytest.fixture(scope="session")
def lat3d():
    return build_lattice(3, 16)


def smooth_field(lattice, seed=0, delta=0.4):
    """Dealiased solenoidal field with an analytic spectrum."""
    rng = np.random.default_rng(seed)
    return dealias(random_field(lattice, rng, envelope=lambda k: np.exp(-delta * k)))


def rough_field(lattice, seed=0, beta=1.5):
    """Dealiased solenoidal field with a power-law spectrum."""
    rng = np.random.default_rng(seed)
    return dealias(random_field(lattice, rng, envelope=lambda k: k ** -beta))


def transport_system(lattice, vectors, g_coeffs=()):
    """Validated NoiseSystem with constant transport vectors and optional linear g."""
    n_g = len(g_coeffs)
    g = (MultiplicativeNoise.linear(g_coeffs, list(range(n_g)))
         if n_g else MultiplicativeNoise.zero())
    xi = (TransportNoise.constant(vectors, list(range(n_g, n_g + len(vectors))))
          if vectors else TransportNoise.empty())
    system = NoiseSystem(g=g, xi=xi, n_wiener=n_g + len(vectors))
    system, report = validate_system(system, lattice, GevreyWeight(s=1.0, r=1.0, phi=0.0))
    assert system.validated, report.summary()
    return system
