"""
Occlusion order and layer order of the instances in a scene. Both are derived from the amodal masks and the stack order only.
"""
import graphlib
import logging
from dataclasses import dataclass

import numpy as np

from amodalforge.errors import OcclusionCycleError

logger = logging.getLogger(__name__)

DIRECT = 'direct'
INDIRECT = 'indirect'
KINDS = (DIRECT, INDIRECT)


@dataclass(frozen=True)
class OcclusionGraph:
    """
    Pairwise occlusion order of n instances. edges is a sorted tuple of (occluder, occludee, kind) with kind 'direct' or 'indirect'. There is at most one edge per ordered pair.
    """
    n: int
    edges: tuple

    def __post_init__(self):
        seen = set()
        for i, j, kind in self.edges:
            if kind not in KINDS:
                raise ValueError(f"Edge ({i}, {j}) has unknown kind '{kind}'")
            if not (0 <= i < self.n and 0 <= j < self.n) or i == j:
                raise ValueError(f'Edge ({i}, {j}) is not between two of the {self.n} instances')
            if (i, j) in seen:
                raise ValueError(f'Duplicate edge ({i}, {j})')
            seen.add((i, j))
        object.__setattr__(self, 'edges', tuple(sorted((int(i), int(j), k) for i, j, k in self.edges)))

    def occluders_of(self, j, kind=None):
        """
        Instances with an edge onto j, optionally only edges of one kind.
        """
        return [a for a, b, k in self.edges if b == j and (kind is None or k == kind)]

    def direct_edges(self):
        return [(i, j) for i, j, k in self.edges if k == DIRECT]

    def to_triples(self):
        """
        Edges as JSON-ready [occluder, occludee, kind] lists.
        """
        return [[i, j, k] for i, j, k in self.edges]

    @classmethod
    def from_triples(cls, n, triples):
        return cls(n=int(n), edges=tuple((int(i), int(j), str(k)) for i, j, k in triples))


@dataclass(frozen=True)
class LayerAssignment:
    """
    Layer of each instance: 0 for instances with no direct occluder, otherwise 1 + the largest layer among its direct occluders.
    """
    layer: tuple

    def __len__(self):
        return len(self.layer)

    def __getitem__(self, i):
        return self.layer[i]

    def max_layer(self):
        return max(self.layer) if self.layer else -1


def build_occlusion_graph(amodalMasks):
    """
    Build the occlusion graph of a scene.

    Instance i occludes j when i is above j in the stack (i > j) and their amodal masks overlap. The edge is direct if i hides at least one pixel of j that no other instance above j covers, otherwise it is indirect.

    Parameters
    ----------
    amodalMasks : list
        Boolean HxW amodal masks in stack order (index 0 at the bottom).

    Returns
    -------
    graph : OcclusionGraph
    """
    n = len(amodalMasks)
    if n == 0:
        return OcclusionGraph(0, ())
    masks = np.asarray(amodalMasks, dtype=bool)
    edges = []
    # Number of instances above j covering each pixel, built from the top down
    coverAbove = np.zeros(masks.shape[1:], dtype=np.int16)
    for j in range(n - 1, -1, -1):
        for i in range(j + 1, n):
            overlap = masks[i] & masks[j]
            if overlap.any():
                kind = DIRECT if np.any(coverAbove[overlap] == 1) else INDIRECT
                edges.append((i, j, kind))
        coverAbove += masks[j]
    return OcclusionGraph(n, tuple(edges))


def assign_layers(graph):
    """
    Compute the layer order from the direct edges of an occlusion graph. Indirect edges are ignored.

    Parameters
    ----------
    graph : OcclusionGraph
        The occlusion graph. Its direct edges must be acyclic.

    Returns
    -------
    layers : LayerAssignment
    """
    occluders = {j: set() for j in range(graph.n)}
    for i, j in graph.direct_edges():
        occluders[j].add(i)
    sorter = graphlib.TopologicalSorter(occluders)
    try:
        order = list(sorter.static_order())
    except graphlib.CycleError as e:
        raise OcclusionCycleError(f'Occlusion graph has a cycle through instances {e.args[1]}') from e
    layer = [0] * graph.n
    for j in order:
        if occluders[j]:
            layer[j] = 1 + max(layer[i] for i in occluders[j])
    return LayerAssignment(tuple(layer))


def scene_orders(amodalMasks):
    """
    Returns the (OcclusionGraph, LayerAssignment) of a scene's amodal masks.
    """
    graph = build_occlusion_graph(amodalMasks)
    return graph, assign_layers(graph)


def layer_histogram(assignments):
    """
    Count instances at each layer.

    Parameters
    ----------
    assignments : iterable
        LayerAssignment objects (or sequences of layers), one per scene.

    Returns
    -------
    counts : numpy array
        counts[k] is the number of instances at layer k, for k = 0..max layer. Empty if there are no instances.
    """
    layers = [int(l) for a in assignments for l in (a.layer if isinstance(a, LayerAssignment) else a)]
    if len(layers) == 0:
        return np.zeros(0, dtype=int)
    return np.bincount(layers)
