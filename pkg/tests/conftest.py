"""Shared small spectra and triad tensors (built once per session)."""

import math

import numpy as np
import pytest

from manifold_ns.spectrum import ManifoldConfig, build_spectrum, build_triads

TORUS_SMALL = 2 * math.pi * 2.3  # |n| <= 2 plus |n| = sqrt 5
SPHERE_SMALL = 5.0  # l <= 4


@pytest.fixture(scope="session")
def torus_table():
    return build_spectrum(ManifoldConfig("torus", TORUS_SMALL))


@pytest.fixture(scope="session")
def sphere_table():
    return build_spectrum(ManifoldConfig("sphere", SPHERE_SMALL))


@pytest.fixture(scope="session")
def torus_triads(torus_table):
    return build_triads(torus_table)


@pytest.fixture(scope="session")
def sphere_triads(sphere_table):
    return build_triads(sphere_table)


@pytest.fixture(params=["torus", "sphere"])
def backend(request, torus_table, sphere_table, torus_triads, sphere_triads):
    if request.param == "torus":
        return torus_table, torus_triads
    return sphere_table, sphere_triads


def sphere_mode(table, l, m):
    """Mode id of the real spherical harmonic (l, m)."""
    hit = np.flatnonzero((table.labels[:, 0] == l) & (table.labels[:, 1] == m))
    assert hit.size == 1
    return int(hit[0])


def torus_mode(table, nx, ny, kind):
    """Mode id of the torus mode with wavevector (nx, ny); kind 1 cos, 2 sin."""
    lab = table.labels
    hit = np.flatnonzero((lab[:, 0] == nx) & (lab[:, 1] == ny) & (lab[:, 2] == kind))
    assert hit.size == 1
    return int(hit[0])
