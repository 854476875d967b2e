"""Multilevel Euclidean graphs for the kernel operators.

Nodes at each scale are sampled uniformly without replacement from the
discretization grid (scales are not nested). Edges connect nodes within a
radius, both inside a scale and between adjacent scales; every edge carries
the attribute row [x_src, x_tgt, v0(x_src), v0(x_tgt)].

Scale 1 (index 0 here) is the finest; node counts decrease strictly with
the scale index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SeededRng


class GraphInvariantError(ValueError):
    """A constructed graph violates a structural invariant (named in args)."""


@dataclass(frozen=True)
class ScaleSpec:
    n_nodes: int
    radius_intra: float
    radius_cross: float  # for edges to the next coarser scale; unused at the coarsest

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.radius_intra <= 0 or self.radius_cross <= 0:
            raise ValueError("radii must be positive")


@dataclass
class EdgeSet:
    src: np.ndarray   # (E,) int64, indices into the source scale
    tgt: np.ndarray   # (E,) int64, indices into the target scale
    attrs: np.ndarray  # (E, 2*dim + 2*f_raw) float64

    def __len__(self) -> int:
        return len(self.src)


@dataclass
class GraphSkeleton:
    dim: int
    periodic_extent: float | None
    grid_indices: list[np.ndarray]
    positions: list[np.ndarray]       # per scale, (n_l, dim)
    node_features: list[np.ndarray]   # per scale, (n_l, dim + f_raw)


@dataclass
class MultiScaleGraph:
    dim: int
    periodic_extent: float | None
    grid_indices: list[np.ndarray]
    positions: list[np.ndarray]
    node_features: list[np.ndarray]
    intra: list[EdgeSet]   # one per scale
    down: list[EdgeSet]    # per adjacent pair, src at scale l, tgt at l+1
    up: list[EdgeSet]      # transpose of down

    @property
    def n_scales(self) -> int:
        return len(self.positions)

    @property
    def feature_dim(self) -> int:
        return self.node_features[0].shape[1]


def pairwise_distances(src_pos: np.ndarray, tgt_pos: np.ndarray,
                       periodic_extent: float | None = None) -> np.ndarray:
    """(n_src, n_tgt) distance matrix; wrap-around metric when periodic."""
    diff = src_pos[:, None, :] - tgt_pos[None, :, :]
    if periodic_extent is not None:
        if src_pos.shape[1] != 1:
            raise ValueError("periodic metric is only defined for 1-d domains")
        diff = np.abs(diff)
        diff = np.minimum(diff, periodic_extent - diff)
    return np.sqrt((diff ** 2).sum(axis=2))


def _sorted_pairs(src: np.ndarray, tgt: np.ndarray):
    order = np.lexsort((src, tgt))
    return src[order].astype(np.int64), tgt[order].astype(np.int64)


def build_radius_edges(src_pos: np.ndarray, tgt_pos: np.ndarray, radius: float,
                       periodic_extent: float | None = None):
    """All (src, tgt) pairs within the radius (inclusive), by brute force.

    Returned arrays are sorted by (target, source); self-loops appear when
    src_pos and tgt_pos are the same point set.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    dist = pairwise_distances(src_pos, tgt_pos, periodic_extent)
    src, tgt = np.nonzero(dist <= radius)
    return _sorted_pairs(src, tgt)


def build_radius_edges_bucketed(src_pos: np.ndarray, tgt_pos: np.ndarray, radius: float,
                                periodic_extent: float | None = None):
    """Grid-bucket accelerated radius search; output identical to brute force."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if periodic_extent is not None:
        # buckets would need wrap-around stitching; node counts here are small
        return build_radius_edges(src_pos, tgt_pos, radius, periodic_extent)
    dim = src_pos.shape[1]
    lo = np.minimum(src_pos.min(axis=0), tgt_pos.min(axis=0))
    cell_of = lambda pos: np.floor((pos - lo) / radius).astype(np.int64)
    src_cells, tgt_cells = cell_of(src_pos), cell_of(tgt_pos)

    buckets: dict[tuple, list[int]] = {}
    for j, cell in enumerate(map(tuple, tgt_cells)):
        buckets.setdefault(cell, []).append(j)

    offsets = np.stack(np.meshgrid(*([[-1, 0, 1]] * dim), indexing="ij"),
                       axis=-1).reshape(-1, dim)
    src_list, tgt_list = [], []
    for i, cell in enumerate(src_cells):
        cand = []
        for off in offsets:
            cand.extend(buckets.get(tuple(cell + off), ()))
        if not cand:
            continue
        cand = np.asarray(cand)
        d = np.sqrt(((src_pos[i] - tgt_pos[cand]) ** 2).sum(axis=1))
        hits = cand[d <= radius]
        src_list.extend([i] * len(hits))
        tgt_list.extend(hits)
    return _sorted_pairs(np.asarray(src_list, dtype=np.int64),
                         np.asarray(tgt_list, dtype=np.int64))


def sample_nodes(grid_positions: np.ndarray, grid_fields: np.ndarray,
                 specs: list[ScaleSpec], rng: SeededRng,
                 periodic_extent: float | None = None) -> GraphSkeleton:
    """Draw the per-scale node sets i.i.d. uniform over grid points.

    Scales are sampled independently (not nested). Node features are the
    position concatenated with the raw input fields at the sampled points.
    """
    n_grid = grid_positions.shape[0]
    if grid_fields.shape[0] != n_grid:
        raise ValueError("grid_fields and grid_positions disagree on point count")
    counts = [s.n_nodes for s in specs]
    if any(c > n_grid for c in counts):
        raise ValueError(f"cannot sample {max(counts)} nodes from {n_grid} grid points")
    if any(counts[i + 1] >= counts[i] for i in range(len(counts) - 1)):
        raise ValueError(f"scale node counts must decrease strictly, got {counts}")

    grid_indices, positions, features = [], [], []
    for level, spec in enumerate(specs):
        idx = np.sort(rng.split(level).choice_without_replacement(n_grid, spec.n_nodes))
        grid_indices.append(idx)
        positions.append(grid_positions[idx].astype(np.float64))
        features.append(np.concatenate(
            [grid_positions[idx], grid_fields[idx]], axis=1).astype(np.float64))
    return GraphSkeleton(dim=grid_positions.shape[1], periodic_extent=periodic_extent,
                         grid_indices=grid_indices, positions=positions,
                         node_features=features)


def _edge_attrs(skel: GraphSkeleton, src_scale: int, tgt_scale: int,
                src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    dim = skel.dim
    fields_s = skel.node_features[src_scale][:, dim:]
    fields_t = skel.node_features[tgt_scale][:, dim:]
    return np.concatenate([skel.positions[src_scale][src],
                           skel.positions[tgt_scale][tgt],
                           fields_s[src], fields_t[tgt]], axis=1)


def assemble(skel: GraphSkeleton, specs: list[ScaleSpec]) -> MultiScaleGraph:
    """Build all edge sets, attach attributes, and validate the invariants."""
    if len(specs) != len(skel.positions):
        raise ValueError("one ScaleSpec per sampled scale is required")
    ext = skel.periodic_extent

    intra, down, up = [], [], []
    for l, spec in enumerate(specs):
        src, tgt = build_radius_edges(skel.positions[l], skel.positions[l],
                                      spec.radius_intra, ext)
        intra.append(EdgeSet(src, tgt, _edge_attrs(skel, l, l, src, tgt)))
    for l in range(len(specs) - 1):
        src, tgt = build_radius_edges(skel.positions[l], skel.positions[l + 1],
                                      specs[l].radius_cross, ext)
        down.append(EdgeSet(src, tgt, _edge_attrs(skel, l, l + 1, src, tgt)))
        usrc, utgt = _sorted_pairs(tgt, src)
        up.append(EdgeSet(usrc, utgt, _edge_attrs(skel, l + 1, l, usrc, utgt)))

    graph = MultiScaleGraph(dim=skel.dim, periodic_extent=ext,
                            grid_indices=skel.grid_indices, positions=skel.positions,
                            node_features=skel.node_features,
                            intra=intra, down=down, up=up)
    validate(graph, specs)
    return graph


def validate(graph: MultiScaleGraph, specs: list[ScaleSpec]) -> None:
    """Re-check every structural invariant; raises GraphInvariantError."""
    counts = [p.shape[0] for p in graph.positions]
    if any(counts[i + 1] >= counts[i] for i in range(len(counts) - 1)):
        raise GraphInvariantError(f"monotone coarsening violated: node counts {counts}")

    def check_radius(edges: EdgeSet, pos_s, pos_t, radius, what):
        if len(edges) == 0:
            return
        d = _edge_lengths(pos_s[edges.src], pos_t[edges.tgt], graph.periodic_extent)
        if (d > radius + 1e-12).any():
            raise GraphInvariantError(f"radius predicate violated in {what}")

    for l, spec in enumerate(specs):
        check_radius(graph.intra[l], graph.positions[l], graph.positions[l],
                     spec.radius_intra, f"intra edges of scale {l + 1}")
    for l in range(len(specs) - 1):
        check_radius(graph.down[l], graph.positions[l], graph.positions[l + 1],
                     specs[l].radius_cross, f"down edges {l + 1}->{l + 2}")
        check_radius(graph.up[l], graph.positions[l + 1], graph.positions[l],
                     specs[l].radius_cross, f"up edges {l + 2}->{l + 1}")
        dpairs = set(zip(graph.down[l].src.tolist(), graph.down[l].tgt.tolist()))
        upairs = set(zip(graph.up[l].tgt.tolist(), graph.up[l].src.tolist()))
        if dpairs != upairs:
            raise GraphInvariantError(
                f"up edges are not the transpose of down edges at pair ({l + 1},{l + 2})")

    width = 2 * graph.dim + 2 * (graph.node_features[0].shape[1] - graph.dim)
    for es, what in [(e, "intra") for e in graph.intra] + \
                    [(e, "down") for e in graph.down] + [(e, "up") for e in graph.up]:
        if es.attrs.shape != (len(es), width):
            raise GraphInvariantError(f"attribute width mismatch in {what} edges")


def _edge_lengths(a: np.ndarray, b: np.ndarray, periodic_extent: float | None):
    diff = a - b
    if periodic_extent is not None:
        diff = np.abs(diff)
        diff = np.minimum(diff, periodic_extent - diff)
    return np.sqrt((diff ** 2).sum(axis=1))


def build_multiscale_graph(grid_positions, grid_fields, specs, rng,
                           periodic_extent=None) -> MultiScaleGraph:
    skel = sample_nodes(grid_positions, grid_fields, specs, rng, periodic_extent)
    return assemble(skel, specs)
