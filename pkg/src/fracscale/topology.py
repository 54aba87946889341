"""Connectivity analysis of fracture networks and of upscaled meshes.

The intersection graph has one node per fracture plus two virtual nodes for
the inflow (x = -L/2) and outflow (x = +L/2) domain faces.  A network
percolates when the virtual nodes are connected.  On the mesh side, two
fractures that never intersect can still be upscaled into one control
volume; those pairs are the false connections counted here, and chains of
them can make the mesh percolate when the network does not.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import clip_polygon_to_box, discs_intersect
from .network import FractureNetwork

logger = logging.getLogger(__name__)

SOURCE = -1  # inflow plane x = -L/2
SINK = -2    # outflow plane x = +L/2

_FACE_TOUCH_EPS = 1e-9


class UnionFind:
    """Disjoint sets over 0..n-1 with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


@dataclass
class IntersectionGraph:
    """Undirected fracture intersection graph with boundary attachments."""

    n_fractures: int
    edges: list[tuple[int, int]]          # fracture-fracture pairs, i < j
    source_ids: list[int]                 # fractures touching the inflow plane
    sink_ids: list[int]                   # fractures touching the outflow plane

    @property
    def edge_set(self) -> set[tuple[int, int]]:
        if not hasattr(self, "_edge_set"):
            self._edge_set = set(self.edges)
        return self._edge_set

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        return (min(i, j), max(i, j)) in self.edge_set


def build_intersection_graph(
    network: FractureNetwork, *, eps: float = 1e-9, m_vertices: int = 32
) -> IntersectionGraph:
    """All intersecting disc pairs, pruned by a uniform spatial hash.

    Boundary edges attach a fracture to SOURCE/SINK when its polygon,
    clipped to the domain, reaches the respective x face.
    """
    fracs = network.fractures
    n = len(fracs)
    domain = network.domain

    # spatial hash on disc bounding boxes; bucket edge = max possible radius
    edges: list[tuple[int, int]] = []
    if n:
        cell = max(f.radius for f in fracs)
        buckets: dict[tuple[int, int, int], list[int]] = {}
        for idx, f in enumerate(fracs):
            lo = np.floor((f.center - f.radius) / cell).astype(int)
            hi = np.floor((f.center + f.radius) / cell).astype(int)
            for ix in range(lo[0], hi[0] + 1):
                for iy in range(lo[1], hi[1] + 1):
                    for iz in range(lo[2], hi[2] + 1):
                        buckets.setdefault((ix, iy, iz), []).append(idx)

        candidates: set[tuple[int, int]] = set()
        for members in buckets.values():
            for i, j in combinations(members, 2):
                candidates.add((i, j) if i < j else (j, i))

        for i, j in sorted(candidates):
            fi, fj = fracs[i], fracs[j]
            gap = np.linalg.norm(fi.center - fj.center)
            if gap > fi.radius + fj.radius:
                continue
            if discs_intersect(fi, fj, eps):
                edges.append((i, j))

    source_ids, sink_ids = [], []
    for idx, poly in enumerate(network.polygons(m_vertices)):
        clipped = clip_polygon_to_box(poly, domain)
        if clipped.is_empty:
            continue
        x = clipped.vertices[:, 0]
        if x.min() <= domain.lo[0] + _FACE_TOUCH_EPS:
            source_ids.append(idx)
        if x.max() >= domain.hi[0] - _FACE_TOUCH_EPS:
            sink_ids.append(idx)

    return IntersectionGraph(n, edges, source_ids, sink_ids)


def _components(graph: IntersectionGraph) -> UnionFind:
    # nodes 0..n-1 fractures, n = SOURCE, n+1 = SINK
    uf = UnionFind(graph.n_fractures + 2)
    src, snk = graph.n_fractures, graph.n_fractures + 1
    for i, j in graph.edges:
        uf.union(i, j)
    for i in graph.source_ids:
        uf.union(i, src)
    for i in graph.sink_ids:
        uf.union(i, snk)
    return uf


def dfn_percolates(graph: IntersectionGraph) -> bool:
    """True when a fracture path joins the inflow and outflow planes."""
    uf = _components(graph)
    return uf.connected(graph.n_fractures, graph.n_fractures + 1)


def remove_isolated(network: FractureNetwork, graph: IntersectionGraph) -> FractureNetwork:
    """Keep only the cluster connecting both boundary planes (possibly nothing)."""
    uf = _components(graph)
    src, snk = graph.n_fractures, graph.n_fractures + 1
    if not uf.connected(src, snk):
        logger.info("network does not percolate; all %d fractures removed", len(network))
        return network.subset([])
    root = uf.find(src)
    keep = [i for i in range(graph.n_fractures) if uf.find(i) == root]
    logger.info("retained %d / %d fractures", len(keep), len(network))
    return network.subset(keep)


@dataclass
class FalseConnectionReport:
    """Counts of fracture pairs sharing a control volume without intersecting."""

    num_false_pairs: int        # network-wide unique pairs (#f)
    cells_with_false: int       # fracture cells containing at least one such pair (fc)
    total_fracture_cells: int
    total_cells: int            # vc
    equivalent_cells: int       # uniform-mesh cell count at the same resolution (n)

    @property
    def fc_over_vc(self) -> float:
        return 100.0 * self.cells_with_false / self.total_cells if self.total_cells else 0.0

    @property
    def vc_over_n(self) -> float:
        return 100.0 * self.total_cells / self.equivalent_cells if self.equivalent_cells else 0.0

    def csv_row(self, p_prime: float) -> str:
        return (
            f"{p_prime},{self.num_false_pairs},{self.cells_with_false},"
            f"{self.total_cells},{self.fc_over_vc:.2f},{self.vc_over_n:.2f}"
        )


def count_false_connections(
    cell_fracture_map,
    graph: IntersectionGraph,
    *,
    total_cells: int,
    equivalent_cells: int,
    pair_per_cell: bool = False,
) -> FalseConnectionReport:
    """Count co-located non-intersecting fracture pairs on the finest fracture cells.

    cell_fracture_map is an iterable of per-cell fracture id sequences.  A
    pair sharing several cells counts once network-wide by default;
    pair_per_cell=True counts every (pair, cell) incidence instead.
    """
    false_pairs: set[tuple[int, int]] = set()
    incidences = 0
    cells_with_false = 0
    n_fracture_cells = 0
    for ids in cell_fracture_map:
        n_fracture_cells += 1
        found = False
        for i, j in combinations(sorted(set(ids)), 2):
            if not graph.has_edge(i, j):
                false_pairs.add((i, j))
                incidences += 1
                found = True
        if found:
            cells_with_false += 1
    return FalseConnectionReport(
        num_false_pairs=incidences if pair_per_cell else len(false_pairs),
        cells_with_false=cells_with_false,
        total_fracture_cells=n_fracture_cells,
        total_cells=total_cells,
        equivalent_cells=equivalent_cells,
    )


def mesh_percolates(mesh, props=None) -> bool:
    """True when face-adjacent fracture cells join the inflow and outflow planes.

    Face adjacency only (consistent with two-point flux coupling); corner
    and edge contacts do not connect.
    """
    is_frac = np.asarray(props.is_fracture if props is not None else mesh.is_fracture)
    if not is_frac.any():
        return False
    faces = mesh.faces
    n = mesh.num_cells
    uf = UnionFind(n + 2)
    src, snk = n, n + 1

    interior = faces.cell_b >= 0
    fa = faces.cell_a[interior]
    fb = faces.cell_b[interior]
    both = is_frac[fa] & is_frac[fb]
    for a, b in zip(fa[both], fb[both]):
        uf.union(int(a), int(b))

    inlet = (faces.btag == mesh.BTAG_XMIN) & is_frac[faces.cell_a]
    outlet = (faces.btag == mesh.BTAG_XMAX) & is_frac[faces.cell_a]
    for a in faces.cell_a[inlet]:
        uf.union(int(a), src)
    for a in faces.cell_a[outlet]:
        uf.union(int(a), snk)
    return uf.connected(src, snk)
