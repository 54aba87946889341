"""Shared construction helpers for the test suite."""

import numpy as np
import pytest

from fracscale.geometry import Box
from fracscale.network import Fracture, FractureNetwork, GenerationParams, aperture_from_radius
from fracscale.octree import build_face_adjacency, build_initial_grid, refine, tag_fracture_cells
from fracscale.upscale import PropertyField


def make_disc(fid, center, normal, radius, aperture=None):
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    if aperture is None:
        aperture = float(aperture_from_radius(radius))
    return Fracture(fid, np.asarray(center, dtype=float), normal, radius, aperture)


def make_network(fractures, L):
    params = GenerationParams(L=L, n_fractures=len(fractures), seed=0)
    return FractureNetwork(list(fractures), Box.cube(L), params)


def box_mesh(extents, l, network=None, orl=0, balance=True):
    """Uniform or fracture-refined mesh over a box anchored at the origin."""
    extents = np.asarray(extents, dtype=float)
    domain = Box(np.zeros(3), extents)
    mesh = build_initial_grid(domain, l)
    if network is None:
        network = FractureNetwork([], domain, GenerationParams(L=extents.max(), n_fractures=0, seed=0))
    else:
        tag_fracture_cells(mesh, network)
    refine(mesh, network, orl, balance)
    build_face_adjacency(mesh)
    return mesh


def cube_mesh(L, l, network=None, orl=0, balance=True):
    """Centered cubic mesh, optionally tagged and refined around a network."""
    domain = Box.cube(L)
    mesh = build_initial_grid(domain, l)
    if network is None:
        network = FractureNetwork([], domain, GenerationParams(L=L, n_fractures=0, seed=0))
    else:
        tag_fracture_cells(mesh, network)
    refine(mesh, network, orl, balance)
    build_face_adjacency(mesh)
    return mesh


def uniform_props(mesh, k, phi):
    n = mesh.num_cells
    return PropertyField(
        permeability=np.full(n, float(k)),
        porosity=np.full(n, float(phi)),
        fracture_porosity=np.zeros(n),
        is_fracture=np.zeros(n, dtype=bool),
        k_m=float(k),
        phi_m=float(phi),
    )


@pytest.fixture
def reference_params():
    return GenerationParams(
        alpha=1.8, r0=1.0, ru=10.0, kappa=0.1, mean_dir=(0.0, 0.0, 1.0),
        L=50.0, buffer=5.0, n_fractures=0, seed=0,
    )


def two_plate_network(L=25.0):
    """Two parallel plates that overlap in plan view but never intersect.

    Plate 0 reaches the inflow plane, plate 1 the outflow plane; their
    carrier planes sit 1.3 m apart so coarse cells (and the adjacent-layer
    contact at mid resolutions) bridge them while 0.625 m cells leave a full
    matrix layer in between.
    """
    plates = [
        make_disc(0, (-5.0, 0.0, 0.3), (0, 0, 1), 10.0),
        make_disc(1, (5.0, 0.0, 1.6), (0, 0, 1), 10.0),
    ]
    return make_network(plates, L)
