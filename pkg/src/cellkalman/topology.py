"""Oriented cell-complex combinatorics.

A 2nd-order complex is described by an oriented edge list over dense node
indices plus a pool of candidate 2-cells, each given as a closed oriented
edge cycle.  Candidate cells may be switched on and off through a binary
activation vector without changing any matrix dimension.

Conventions (fixed here, used everywhere downstream):

* edge ``(u, v)`` has incidence ``b1[u] = -1``, ``b1[v] = +1``;
* a face cycle is a list of signed 1-based edge references, ``+(j+1)``
  meaning edge ``j`` traversed along its stored direction and ``-(j+1)``
  against it.  The same signed form is used in the JSON file format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import DanglingIndex, DuplicateFace, NonClosedCycle, PoolOverflow

__all__ = [
    "CellComplex",
    "build_complex",
    "masked_b2",
    "enumerate_candidate_cells",
    "save_complex",
    "load_complex",
]


@dataclass
class CellComplex:
    """Validated combinatorics of a 2nd-order cell complex.

    Immutable after construction except for ``activation``, which masks the
    candidate 2-cell pool.  All incidence matrices are integer-valued so the
    boundary identities hold exactly.
    """

    n_nodes: int
    n_edges: int
    b1: np.ndarray          # (n_nodes, n_edges), entries in {-1, 0, +1}
    b2_full: np.ndarray     # (n_edges, n_faces_pool), candidate pool B2*
    activation: np.ndarray  # (n_faces_pool,), entries in {0, 1}
    edge_list: list = field(repr=False)
    face_cycles: list = field(repr=False)

    @property
    def n_faces_pool(self) -> int:
        return self.b2_full.shape[1]

    @property
    def n_total(self) -> int:
        """Total cell count N = N0 + N1 + N2."""
        return self.n_nodes + self.n_edges + self.n_faces_pool

    def with_activation(self, activation) -> "CellComplex":
        """Copy of this complex with a different activation vector."""
        act = _check_activation(activation, self.n_faces_pool)
        return CellComplex(
            n_nodes=self.n_nodes,
            n_edges=self.n_edges,
            b1=self.b1,
            b2_full=self.b2_full,
            activation=act,
            edge_list=self.edge_list,
            face_cycles=self.face_cycles,
        )

    def face_edge_indices(self, k: int) -> np.ndarray:
        """0-based indices of the boundary edges of candidate face ``k``."""
        return np.flatnonzero(self.b2_full[:, k])


def _check_activation(activation, n_faces: int) -> np.ndarray:
    act = np.asarray(activation, dtype=np.int64).reshape(-1)
    if act.shape[0] != n_faces:
        raise DanglingIndex(
            f"activation has length {act.shape[0]}, pool has {n_faces} faces"
        )
    if not np.isin(act, (0, 1)).all():
        raise ValueError("activation entries must be 0 or 1")
    return act


def build_complex(edge_list, face_cycles=(), n_nodes=None, activation=None) -> CellComplex:
    """Build and validate a :class:`CellComplex`.

    Parameters
    ----------
    edge_list:
        Oriented node pairs ``(u, v)``; node indices must lie in
        ``[0, n_nodes)``.
    face_cycles:
        One candidate 2-cell per entry, each a list of signed 1-based edge
        references forming a closed cycle.
    n_nodes:
        Optional explicit node count; allows isolated nodes beyond the
        largest referenced index.
    activation:
        Initial activation mask; defaults to all-ones.

    Raises
    ------
    DanglingIndex
        An edge references a node outside ``[0, n_nodes)`` or a face
        references a nonexistent edge.
    NonClosedCycle
        A face's boundary does not vanish under ``b1``.
    DuplicateFace
        Two faces share the same unordered edge set.
    """
    edges = [(int(u), int(v)) for u, v in edge_list]
    n_edges = len(edges)
    max_node = max((max(u, v) for u, v in edges), default=-1)
    if n_nodes is None:
        n_nodes = max_node + 1
    if max_node >= n_nodes or any(min(u, v) < 0 for u, v in edges):
        raise DanglingIndex("edge references a node outside [0, n_nodes)")
    if any(u == v for u, v in edges):
        raise ValueError("self-loop edges are not allowed in a regular complex")

    b1 = np.zeros((n_nodes, n_edges), dtype=np.int64)
    for j, (u, v) in enumerate(edges):
        b1[u, j] = -1
        b1[v, j] = +1

    cycles = [list(map(int, cyc)) for cyc in face_cycles]
    n_faces = len(cycles)
    b2 = np.zeros((n_edges, n_faces), dtype=np.int64)
    seen: dict[frozenset, int] = {}
    for k, cyc in enumerate(cycles):
        refs = set()
        for s in cyc:
            if s == 0:
                raise DanglingIndex(f"face {k}: zero edge reference")
            j = abs(s) - 1
            if j >= n_edges:
                raise DanglingIndex(f"face {k}: edge reference {s} out of range")
            if j in refs:
                raise ValueError(f"face {k}: edge {j} traversed more than once")
            refs.add(j)
            b2[j, k] = 1 if s > 0 else -1
        key = frozenset(refs)
        if key in seen:
            raise DuplicateFace(f"faces {seen[key]} and {k} share the same edge set")
        seen[key] = k

    boundary = b1 @ b2
    bad = np.flatnonzero(np.any(boundary != 0, axis=0))
    if bad.size:
        raise NonClosedCycle(f"face {int(bad[0])} is not a closed cycle")

    if activation is None:
        act = np.ones(n_faces, dtype=np.int64)
    else:
        act = _check_activation(activation, n_faces)

    return CellComplex(
        n_nodes=n_nodes,
        n_edges=n_edges,
        b1=b1,
        b2_full=b2,
        activation=act,
        edge_list=edges,
        face_cycles=cycles,
    )


def masked_b2(cc: CellComplex) -> np.ndarray:
    """Masked incidence B2 = B2* diag(e); dimensions never change with ``e``."""
    return cc.b2_full * cc.activation[np.newaxis, :]


def _canonical_walk(nodes: list) -> list:
    """Rotate/reflect a cyclic node sequence into a content-determined orientation.

    Starts at the smallest node id and proceeds toward its smaller cycle
    neighbour, so the result does not depend on traversal discovery order.
    """
    n = len(nodes)
    i = nodes.index(min(nodes))
    nxt, prv = nodes[(i + 1) % n], nodes[(i - 1) % n]
    if nxt <= prv:
        return [nodes[(i + t) % n] for t in range(n)]
    return [nodes[(i - t) % n] for t in range(n)]


def enumerate_candidate_cells(edge_list, max_cycle_len: int = 8, *, pool_cap: int = 512) -> list:
    """All simple cycles of the 1-skeleton up to ``max_cycle_len`` edges.

    Cycles are deduplicated by unordered edge set, oriented canonically, and
    returned in lexicographic order of their sorted edge indices, in the
    signed 1-based form accepted by :func:`build_complex`.

    Raises :class:`PoolOverflow` when more than ``pool_cap`` cycles exist,
    signalling the caller to lower ``max_cycle_len``.
    """
    if max_cycle_len < 3:
        raise ValueError("max_cycle_len must be at least 3")
    edges = [(int(u), int(v)) for u, v in edge_list]
    pair_to_idx: dict[frozenset, int] = {}
    for j, (u, v) in enumerate(edges):
        key = frozenset((u, v))
        if key in pair_to_idx:
            raise ValueError("parallel edges are not supported by cycle enumeration")
        pair_to_idx[key] = j

    graph = nx.Graph()
    graph.add_nodes_from(sorted({n for e in edges for n in e}))
    graph.add_edges_from(edges)

    found: dict[tuple, list] = {}
    for nodes in nx.simple_cycles(graph, length_bound=max_cycle_len):
        walk = _canonical_walk(list(nodes))
        signed = []
        for a, b in zip(walk, walk[1:] + walk[:1]):
            j = pair_to_idx[frozenset((a, b))]
            signed.append(j + 1 if edges[j] == (a, b) else -(j + 1))
        key = tuple(sorted(abs(s) - 1 for s in signed))
        if key not in found:
            found[key] = signed
            if len(found) > pool_cap:
                raise PoolOverflow(
                    f"more than {pool_cap} candidate cycles at max_cycle_len={max_cycle_len}"
                )
    return [found[key] for key in sorted(found)]


def save_complex(cc: CellComplex, path, *, active_only: bool = False) -> None:
    """Write the complex description file (JSON).

    Format: ``{"nodes": N0, "edges": [[u, v], ...], "faces": [[s, ...], ...]}``
    with faces in signed 1-based edge form.  With ``active_only`` only the
    currently active faces are exported.
    """
    faces = [
        cyc
        for k, cyc in enumerate(cc.face_cycles)
        if not active_only or cc.activation[k]
    ]
    doc = {"nodes": cc.n_nodes, "edges": [list(e) for e in cc.edge_list], "faces": faces}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_complex(path) -> CellComplex:
    """Load a complex description file written by :func:`save_complex`."""
    with open(path) as fh:
        doc = json.load(fh)
    return build_complex(doc["edges"], doc["faces"], n_nodes=doc["nodes"])
