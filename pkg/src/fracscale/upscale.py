"""Equivalent-continuum cell properties from embedded fracture geometry.

Each fracture contributes its in-cell surface area times aperture as pore
volume, and a rank-deficient projector tensor scaled by porosity and
aperture squared (cubic-law style) to the cell permeability tensor.  The
tensor is collapsed to a scalar by its spectral radius, then blended with
the matrix permeability by fracture-volume weighting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import AREA_EPS, Box, clip_polygon_to_box, disc_to_polygon, polygon_area

logger = logging.getLogger(__name__)


class UpscaleError(RuntimeError):
    pass


@dataclass(frozen=True)
class CellProperties:
    """Scalar equivalent permeability [m^2], porosity, and fracture tagging."""

    permeability: float
    porosity: float
    is_fracture: bool
    fracture_porosity: float = 0.0


@dataclass(frozen=True)
class FractureContribution:
    """Per-fracture, per-cell upscaling inputs: a_f, b_f, v_f, phi_f and normal."""

    area: float
    aperture: float
    volume: float
    porosity: float
    normal: np.ndarray


def transformation_tensor(normal) -> np.ndarray:
    """Projector onto the fracture plane, I - n n^T (eigenvalues 1, 1, 0)."""
    n = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("normal must be a unit vector")
    return np.eye(3) - np.outer(n, n)


def cell_fracture_data(
    cell: Box, fractures, m_vertices: int = 32
) -> list[FractureContribution]:
    """Clip every fracture against the cell and collect its contribution.

    Fractures whose clip comes back empty (tagging and clipping disagreeing
    at epsilon scale) are dropped with a diagnostic, never silently.
    """
    v_c = cell.volume
    out = []
    for f in fractures:
        a_f = polygon_area(clip_polygon_to_box(disc_to_polygon(f, m_vertices), cell))
        if a_f <= AREA_EPS:
            logger.warning(
                "fracture %d tagged to cell at %s but clips to zero area; dropped",
                f.id, cell.center,
            )
            continue
        v_f = a_f * f.aperture
        out.append(FractureContribution(
            area=a_f,
            aperture=f.aperture,
            volume=v_f,
            porosity=v_f / v_c,
            normal=np.asarray(f.normal, dtype=float),
        ))
    return out


def cell_permeability_tensor(data) -> np.ndarray:
    """K_F = (1/12) sum_f phi_f * (I - n n^T) * b_f^2 over the cell's fractures."""
    K = np.zeros((3, 3))
    for c in data:
        K += c.porosity * transformation_tensor(c.normal) * c.aperture**2
    return K / 12.0


def spectral_radius(K: np.ndarray) -> float:
    """Largest absolute eigenvalue of a symmetric 3x3 tensor."""
    K = np.asarray(K, dtype=float)
    if not np.allclose(K, K.T, rtol=1e-12, atol=0.0):
        raise ValueError("permeability tensor must be symmetric")
    if not K.any():
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(K))))


def upscale_cell(
    data,
    k_m: float,
    phi_m: float,
    v_c: float,
    *,
    strict_fracture_porosity: bool = False,
) -> CellProperties:
    """Combine fracture contributions with the matrix background.

    k = (1 - phi_F) * k_m + k_F with k_F the tensor spectral radius.  Cell
    porosity defaults to phi_F + (1 - phi_F) * phi_m so transport through a
    barely-fractured cell keeps matrix storage; strict_fracture_porosity
    assigns phi_F alone to fracture cells.
    """
    if k_m <= 0 or not 0 < phi_m < 1:
        raise ValueError("need k_m > 0 and 0 < phi_m < 1")
    if not data:
        return CellProperties(k_m, phi_m, is_fracture=False)
    v_F = sum(c.volume for c in data)
    phi_F = v_F / v_c
    if phi_F >= 1.0:
        raise UpscaleError(f"fracture porosity {phi_F:.3g} >= 1; geometry inconsistent")
    k_F = spectral_radius(cell_permeability_tensor(data))
    k = (1.0 - phi_F) * k_m + k_F
    phi = phi_F if strict_fracture_porosity else phi_F + (1.0 - phi_F) * phi_m
    return CellProperties(k, phi, is_fracture=True, fracture_porosity=phi_F)


@dataclass
class PropertyField:
    """Upscaled per-cell arrays aligned with the mesh's finalized cell order."""

    permeability: np.ndarray
    porosity: np.ndarray
    fracture_porosity: np.ndarray
    is_fracture: np.ndarray
    k_m: float
    phi_m: float

    def cell(self, idx: int) -> CellProperties:
        return CellProperties(
            float(self.permeability[idx]),
            float(self.porosity[idx]),
            bool(self.is_fracture[idx]),
            float(self.fracture_porosity[idx]),
        )

    def summary(self) -> dict:
        return {
            "n_cells": int(len(self.permeability)),
            "n_fracture_cells": int(self.is_fracture.sum()),
            "k_min": float(self.permeability.min()),
            "k_max": float(self.permeability.max()),
            "k_mean": float(self.permeability.mean()),
            "phi_min": float(self.porosity.min()),
            "phi_max": float(self.porosity.max()),
            "phi_mean": float(self.porosity.mean()),
        }


def upscale_mesh(
    mesh,
    network,
    k_m: float,
    phi_m: float,
    *,
    m_vertices: int = 32,
    strict_fracture_porosity: bool = False,
) -> PropertyField:
    """Apply upscale_cell to every leaf of a tagged, refined mesh."""
    n = mesh.num_cells
    k = np.full(n, float(k_m))
    phi = np.full(n, float(phi_m))
    phi_F = np.zeros(n)
    tag = np.zeros(n, dtype=bool)
    fractures = network.fractures
    for idx in range(n):
        ids = mesh.fracture_ids[idx]
        if not ids:
            continue
        cell = mesh.cell_box(mesh.keys[idx])
        data = cell_fracture_data(cell, [fractures[fid] for fid in ids], m_vertices)
        props = upscale_cell(
            data, k_m, phi_m, cell.volume,
            strict_fracture_porosity=strict_fracture_porosity,
        )
        k[idx] = props.permeability
        phi[idx] = props.porosity
        phi_F[idx] = props.fracture_porosity
        tag[idx] = props.is_fracture
    field = PropertyField(k, phi, phi_F, tag, float(k_m), float(phi_m))
    logger.info("upscaled %d cells: %s", n, field.summary())
    return field
