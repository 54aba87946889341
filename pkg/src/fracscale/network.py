"""Stochastic fracture network generation and density metrics.

Networks are collections of planar circular discs inside a cubic domain.
Radii follow a truncated power law sampled by closed-form inverse CDF,
orientations a von Mises-Fisher distribution on the sphere, and hydraulic
apertures correlate with radius through a square-root law.  Density is
quantified both by a percolation parameter and by fracture intensity
(surface area per unit volume).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

from .geometry import Box, clip_polygon_to_box, disc_to_polygon, polygon_area

logger = logging.getLogger(__name__)

APERTURE_COEFF = 5.0e-4  # aperture = 5e-4 * sqrt(radius), both in meters

# Default jsonl schema keys for fracture records.
_FRACTURE_KEYS = ("id", "cx", "cy", "cz", "nx", "ny", "nz", "radius", "aperture")


class GenerationError(RuntimeError):
    """Raised when the rejection loop cannot place the requested fractures."""


def make_rng(seed: int) -> np.random.Generator:
    """Seedable, splittable, counter-based stream (Philox).

    Every stochastic operation in this module takes one of these explicitly;
    substreams for independent tasks come from ``spawn``.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split n independent substreams off an existing generator."""
    return [np.random.Generator(np.random.Philox(s)) for s in rng.bit_generator.seed_seq.spawn(n)]


@dataclass(frozen=True)
class GenerationParams:
    """Sampling parameters for one fracture family in a cubic domain.

    alpha    power-law decay exponent of the radius distribution
    r0, ru   lower / upper radius cutoffs [m]
    kappa    von Mises-Fisher concentration (0 = uniform orientations)
    mean_dir unit mean normal direction of the family
    L        cubic domain edge [m]
    buffer   generation-domain expansion per side [m]
    """

    alpha: float = 1.8
    r0: float = 1.0
    ru: float = 10.0
    kappa: float = 0.1
    mean_dir: tuple[float, float, float] = (0.0, 0.0, 1.0)
    L: float = 50.0
    buffer: float = 5.0
    n_fractures: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not 0 < self.r0 < self.ru:
            raise ValueError("need 0 < r0 < ru")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.L <= 0 or self.buffer < 0:
            raise ValueError("need L > 0 and buffer >= 0")
        if self.n_fractures < 0:
            raise ValueError("n_fractures must be >= 0")
        m = np.asarray(self.mean_dir, dtype=float)
        if abs(np.linalg.norm(m) - 1.0) > 1e-12:
            raise ValueError("mean_dir must be a unit vector")
        object.__setattr__(self, "mean_dir", tuple(float(x) for x in m))

    @property
    def domain(self) -> Box:
        return Box.cube(self.L)

    @property
    def generation_domain(self) -> Box:
        return Box.cube(self.L + 2.0 * self.buffer)


@dataclass(frozen=True)
class Fracture:
    """Planar circular disc: center, unit normal, radius and hydraulic aperture."""

    id: int
    center: np.ndarray
    normal: np.ndarray
    radius: float
    aperture: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ValueError(f"fracture {self.id}: normal must be unit length")
        if self.radius <= 0 or self.aperture <= 0:
            raise ValueError(f"fracture {self.id}: radius and aperture must be positive")


@dataclass
class FractureNetwork:
    """Fracture list plus the cubic flow domain it was generated for."""

    fractures: list[Fracture]
    domain: Box
    params: GenerationParams

    def __len__(self) -> int:
        return len(self.fractures)

    def polygons(self, m_vertices: int = 32) -> list:
        return [disc_to_polygon(f, m_vertices) for f in self.fractures]

    def subset(self, keep_ids) -> "FractureNetwork":
        """New network containing the given fractures, re-indexed contiguously."""
        keep = sorted(keep_ids)
        fracs = [
            replace(self.fractures[i], id=new_id)
            for new_id, i in enumerate(keep)
        ]
        return FractureNetwork(fracs, self.domain, self.params)


# ---------------------------------------------------------------------------
# sampling

def radius_pdf(r, params: GenerationParams):
    """Truncated power-law density on [r0, ru]."""
    a, r0, ru = params.alpha, params.r0, params.ru
    norm = 1.0 - (ru / r0) ** (-a)
    return (a / r0) * (np.asarray(r) / r0) ** (-1.0 - a) / norm


def radius_cdf(r, params: GenerationParams):
    a, r0, ru = params.alpha, params.r0, params.ru
    norm = 1.0 - (ru / r0) ** (-a)
    return (1.0 - (np.asarray(r) / r0) ** (-a)) / norm


def sample_radius(u, params: GenerationParams):
    """Closed-form inverse CDF of the truncated power law; u in [0, 1)."""
    a, r0, ru = params.alpha, params.r0, params.ru
    tail = (ru / r0) ** (-a)
    return r0 * (1.0 - np.asarray(u) * (1.0 - tail)) ** (-1.0 / a)


def aperture_from_radius(r):
    """Hydraulic aperture positively correlated with radius: 5e-4 * sqrt(r)."""
    return APERTURE_COEFF * np.sqrt(np.asarray(r))


def sample_orientation(rng: np.random.Generator, kappa: float, mean_dir) -> np.ndarray:
    """One unit normal from the von Mises-Fisher distribution on the sphere.

    The cosine of the polar angle about mean_dir has the closed-form inverse
    transform w = 1 + ln(u + (1-u) e^{-2 kappa}) / kappa; kappa = 0 is the
    exact uniform-sphere limit w = 2u - 1, not a division by zero.
    """
    mu = np.asarray(mean_dir, dtype=float)
    u = rng.random()
    if kappa < 1e-12:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
        w = min(1.0, max(-1.0, w))
    phi = 2.0 * np.pi * rng.random()
    s = np.sqrt(max(0.0, 1.0 - w * w))

    ref = np.array([1.0, 0.0, 0.0]) if abs(mu[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(mu, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(mu, e1)
    v = s * (np.cos(phi) * e1 + np.sin(phi) * e2) + w * mu
    return v / np.linalg.norm(v)


def generate_network(
    params: GenerationParams,
    *,
    count_in_expanded_domain: bool = False,
    m_vertices: int = 32,
    max_attempts_factor: int = 1000,
) -> FractureNetwork:
    """Sample a network of params.n_fractures discs.

    Centers are uniform in the buffered generation box.  By default a disc
    that misses the inner L^3 domain is rejected and resampled, so the count
    stays interpretable as in-domain fractures; with
    count_in_expanded_domain=True the literal expanded-domain count is kept
    instead (discs that never touch the inner domain are still dropped, as
    they cannot contribute to any in-domain quantity).
    """
    rng = make_rng(params.seed)
    domain = params.domain
    gen = params.generation_domain
    span = gen.hi - gen.lo

    fractures: list[Fracture] = []
    attempts = 0
    placed = 0
    cap = max(1, max_attempts_factor) * max(1, params.n_fractures)
    while placed < params.n_fractures:
        if attempts >= cap:
            raise GenerationError(
                f"placed {len(fractures)}/{params.n_fractures} fractures "
                f"after {attempts} attempts"
            )
        attempts += 1
        center = gen.lo + rng.random(3) * span
        radius = float(sample_radius(rng.random(), params))
        normal = sample_orientation(rng, params.kappa, params.mean_dir)
        cand = Fracture(
            id=len(fractures),
            center=center,
            normal=normal,
            radius=radius,
            aperture=float(aperture_from_radius(radius)),
        )
        touches = not clip_polygon_to_box(disc_to_polygon(cand, m_vertices), domain).is_empty
        if count_in_expanded_domain:
            placed += 1
            if touches:
                fractures.append(cand)
        elif touches:
            placed += 1
            fractures.append(cand)

    logger.info(
        "generated %d fractures (%d attempts, seed %d)", len(fractures), attempts, params.seed
    )
    return FractureNetwork(fractures, domain, params)


# ---------------------------------------------------------------------------
# density metrics

def expected_min_radius(params: GenerationParams, L: float) -> float:
    """E[min(r, alpha*L)] under the truncated power law.

    Closed form when alpha*L >= ru (the min is always r); adaptive
    quadrature otherwise.
    """
    a, r0, ru = params.alpha, params.r0, params.ru
    cut = a * L
    if cut >= ru:
        norm = 1.0 - (ru / r0) ** (-a)
        if abs(a - 1.0) < 1e-12:
            integral = a * r0 * np.log(ru / r0)
        else:
            integral = (a / (a - 1.0)) * r0 * (1.0 - (ru / r0) ** (1.0 - a))
        return float(integral / norm)
    val, _ = quad(
        lambda r: min(r, cut) * radius_pdf(r, params), r0, ru,
        points=[cut] if r0 < cut < ru else None, epsabs=1e-12, epsrel=1e-12,
    )
    return float(val)


def percolation_parameter(n: int, params: GenerationParams, L: float | None = None) -> float:
    """Dimensioned network density: (n / L^2) * E[min(r, alpha*L)]."""
    if n < 0:
        raise ValueError("fracture count must be >= 0")
    L = params.L if L is None else L
    return n / L**2 * expected_min_radius(params, L)


def critical_fracture_count(
    params: GenerationParams, L: float | None = None, *, override: int | None = None
) -> int:
    """Smallest N with percolation_parameter(N) >= 1, or a pinned value.

    The pin exists because published density/N pairings round the critical
    count; passing override returns it unchanged.
    """
    if override is not None:
        return int(override)
    L = params.L if L is None else L
    per = expected_min_radius(params, L) / L**2
    return int(np.ceil(1.0 / per - 1e-12))


def fracture_intensity(
    network: FractureNetwork,
    domain: Box | None = None,
    *,
    double_sided_area: bool = False,
    m_vertices: int = 32,
) -> float:
    """P32: total in-domain fracture surface area per unit volume [1/m].

    Single-sided clipped areas by default; double_sided_area counts both
    faces of each disc.
    """
    domain = network.domain if domain is None else domain
    if domain.volume <= 0:
        raise ValueError("domain volume must be positive")
    total = 0.0
    for f in network.fractures:
        total += polygon_area(clip_polygon_to_box(disc_to_polygon(f, m_vertices), domain))
    if double_sided_area:
        total *= 2.0
    return total / domain.volume


# ---------------------------------------------------------------------------
# serialization (jsonl: one header record, then one record per fracture)

def save_network(network: FractureNetwork, path) -> None:
    p = network.params
    header = {
        "record": "header",
        "n_fractures_stored": len(network.fractures),
        "params": {
            "alpha": p.alpha, "r0": p.r0, "ru": p.ru, "kappa": p.kappa,
            "mean_dir": list(p.mean_dir), "L": p.L, "buffer": p.buffer,
            "n_fractures": p.n_fractures, "seed": p.seed,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for f in network.fractures:
            rec = dict(zip(_FRACTURE_KEYS, (
                f.id, f.center[0], f.center[1], f.center[2],
                f.normal[0], f.normal[1], f.normal[2], f.radius, f.aperture,
            )))
            fh.write(json.dumps(rec) + "\n")


def load_network(path) -> FractureNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("record") != "header":
            raise ValueError(f"{path}: missing network header record")
        params = GenerationParams(**{
            **header["params"], "mean_dir": tuple(header["params"]["mean_dir"]),
        })
        fractures = []
        for line in fh:
            rec = json.loads(line)
            fractures.append(Fracture(
                id=int(rec["id"]),
                center=np.array([rec["cx"], rec["cy"], rec["cz"]]),
                normal=np.array([rec["nx"], rec["ny"], rec["nz"]]),
                radius=float(rec["radius"]),
                aperture=float(rec["aperture"]),
            ))
    if len(fractures) != header["n_fractures_stored"]:
        raise ValueError(f"{path}: header promises {header['n_fractures_stored']} records")
    return FractureNetwork(fractures, params.domain, params)
