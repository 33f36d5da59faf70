"""Graph partitioning, overlap/halo layers, partition of unity and colouring.

Index sets are 0-based ``int64`` arrays internally; the text dump uses
1-based indices.
"""

from __future__ import annotations

import heapq
import math
import os
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.sparse import csgraph

from .sparse import AdjacencyGraph


@dataclass(frozen=True)
class PartitionQuality:
    sizes: tuple[int, ...]
    balance: float  # max size / (n / N)
    edge_cut: int
    balanced: bool  # max size <= ceil(1.2 n / N)

    def as_dict(self) -> dict:
        return {
            "min_size": min(self.sizes),
            "max_size": max(self.sizes),
            "balance": round(self.balance, 6),
            "edge_cut": self.edge_cut,
            "balanced": self.balanced,
        }


def _seeds_per_component(sizes: np.ndarray, n_parts: int) -> np.ndarray:
    """Parts per connected component: largest remainder, at most one part
    per vertex, at least one per component while parts last."""
    n = sizes.sum()
    if n_parts < sizes.size:
        alloc = np.zeros(sizes.size, dtype=np.int64)
        alloc[np.argsort(-sizes, kind="stable")[:n_parts]] = 1
        return alloc
    exact = sizes * n_parts / n
    alloc = np.minimum(np.maximum(np.floor(exact).astype(np.int64), 1), sizes)
    while alloc.sum() > n_parts:
        cand = np.flatnonzero(alloc > 1)
        j = cand[np.argmin((exact - alloc)[cand])]
        alloc[j] -= 1
    while alloc.sum() < n_parts:
        rem = np.where(alloc < sizes, exact - alloc, -np.inf)
        alloc[int(np.argmax(rem))] += 1
    return alloc


def _farthest_pair(adj: sps.csr_matrix, rng) -> tuple[int, int]:
    """Pseudo-peripheral pair: farthest from a random start, then farthest
    from that.  ``argmax`` breaks ties by smallest index."""
    n = adj.shape[0]
    start = int(rng.integers(n))
    d = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=start)
    a = int(np.argmax(np.where(np.isfinite(d), d, -1)))
    d = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=a)
    d[a] = -1
    b = int(np.argmax(np.where(np.isfinite(d), d, -1)))
    return a, b


def _grow(adj: sps.csr_matrix, seeds: list[int], caps: list[int]) -> np.ndarray:
    """Breadth-first growth of one region per seed.

    The least-filled region (relative to its cap) claims the next vertex of
    its frontier.  Regions at their cap only grow once every region below
    its cap is boxed in.  Vertices unreachable from every seed stay -1.
    """
    n = adj.shape[0]
    indptr, indices = adj.indptr, adj.indices
    owner = np.full(n, -1, dtype=np.int64)
    sizes = [1] * len(seeds)
    frontier = [deque() for _ in seeds]
    for p, s in enumerate(seeds):
        owner[s] = p
    for p, s in enumerate(seeds):
        frontier[p].extend(int(v) for v in indices[indptr[s] : indptr[s + 1]] if owner[v] < 0)

    def key(p):
        return (sizes[p] >= caps[p], sizes[p] / caps[p], p)

    heap = [key(p) for p in range(len(seeds))]
    heapq.heapify(heap)
    remaining = n - len(seeds)
    while remaining and heap:
        p = heapq.heappop(heap)[2]
        q = frontier[p]
        while q and owner[q[0]] >= 0:
            q.popleft()
        if not q:
            continue  # an exhausted frontier never refills
        v = q.popleft()
        owner[v] = p
        sizes[p] += 1
        remaining -= 1
        q.extend(int(u) for u in indices[indptr[v] : indptr[v + 1]] if owner[u] < 0)
        heapq.heappush(heap, key(p))
    return owner


def _bisect(adj: sps.csr_matrix, k: int, rng) -> list[np.ndarray]:
    """Recursive bisection of a vertex set into ``k`` parts (local indices)."""
    n = adj.shape[0]
    if k == 1:
        return [np.arange(n, dtype=np.int64)]
    k1 = k // 2
    t1 = max(1, min(n - 1, int(round(n * k1 / k))))
    a, b = _farthest_pair(adj, rng)
    if a == b:
        b = int(np.flatnonzero(np.arange(n) != a)[0])
    owner = _grow(adj, [a, b], [t1, n - t1])
    # pieces unreachable from both seeds go to the side with the larger deficit
    loose = np.flatnonzero(owner < 0)
    if loose.size:
        _, lab = csgraph.connected_components(adj[loose][:, loose], directed=False)
        for c in np.unique(lab):
            piece = loose[lab == c]
            deficit = [t1 - np.count_nonzero(owner == 0), (n - t1) - np.count_nonzero(owner == 1)]
            owner[piece] = int(np.argmax(deficit))
    parts = []
    for side, kk in ((0, k1), (1, k - k1)):
        sel = np.flatnonzero(owner == side)
        if sel.size < kk:
            # too few vertices for the requested parts: borrow from the other side
            other = np.flatnonzero(owner != side)
            sel = np.sort(np.concatenate([sel, other[: kk - sel.size]]))
            owner[sel] = side
        parts.append((sel, kk))
    out = []
    for sel, kk in parts:
        sub = adj[sel][:, sel]
        out.extend(sel[p] for p in _bisect(sub, kk, rng))
    return out


def partition_graph(graph: AdjacencyGraph, n_parts: int, seed: int = 0) -> list[np.ndarray]:
    """Split the vertices into ``n_parts`` disjoint, non-empty interiors.

    Connected components receive parts in proportion to their size.  Each
    component is then split by recursive bisection; every bisection grows
    two breadth-first regions from a farthest-point seed pair, with the
    region sizes capped at the balanced targets.
    """
    n = graph.n_vertices
    if not 1 <= n_parts <= n:
        raise ValueError(f"cannot split {n} vertices into {n_parts} subdomains")
    if n_parts == 1:
        return [np.arange(n, dtype=np.int64)]
    rng = np.random.default_rng(seed)
    adj = graph.to_scipy()
    n_comp, labels = csgraph.connected_components(adj, directed=False)
    comps = [np.flatnonzero(labels == c) for c in range(n_comp)]
    alloc = _seeds_per_component(np.array([c.size for c in comps]), n_parts)

    parts: list[np.ndarray] = []
    orphans = []
    for comp, k in zip(comps, alloc):
        if k == 0:
            orphans.append(comp)
            continue
        sub = adj[comp][:, comp]
        parts.extend(comp[p] for p in _bisect(sub, int(k), rng))
    for comp in orphans:
        j = int(np.argmin([p.size for p in parts]))
        parts[j] = np.concatenate([parts[j], comp])
    # canonical order: by smallest vertex
    parts = [np.sort(p).astype(np.int64) for p in parts]
    parts.sort(key=lambda p: p[0])
    return parts


def partition_quality(graph: AdjacencyGraph, interiors: list[np.ndarray]) -> PartitionQuality:
    n = graph.n_vertices
    owner = np.empty(n, dtype=np.int64)
    for p, s in enumerate(interiors):
        owner[s] = p
    adj = graph.to_scipy().tocoo()
    cut = int(np.count_nonzero(owner[adj.row] != owner[adj.col]) // 2)
    sizes = tuple(int(s.size) for s in interiors)
    nparts = len(interiors)
    return PartitionQuality(
        sizes=sizes,
        balance=max(sizes) * nparts / n,
        edge_cut=cut,
        balanced=max(sizes) <= math.ceil(1.2 * n / nparts),
    )


@dataclass(frozen=True, eq=False)
class SubdomainLayout:
    """Interior, overlap boundary and halo index sets of every subdomain.

    The overlapping set is ``[interior, boundary]`` and the extended set
    ``[interior, boundary, halo]``; that concatenation order is what every
    local matrix downstream is laid out in.
    """

    n: int
    interiors: tuple[np.ndarray, ...]
    boundaries: tuple[np.ndarray, ...]
    halos: tuple[np.ndarray, ...]

    @property
    def n_subdomains(self) -> int:
        return len(self.interiors)

    def overlapping(self, i: int) -> np.ndarray:
        return np.concatenate([self.interiors[i], self.boundaries[i]])

    def extended(self, i: int) -> np.ndarray:
        return np.concatenate([self.interiors[i], self.boundaries[i], self.halos[i]])

    def sizes(self, i: int) -> tuple[int, int]:
        """``(n_i, ntilde_i)``: overlapping and extended sizes."""
        ni = self.interiors[i].size + self.boundaries[i].size
        return ni, ni + self.halos[i].size

    def owner(self) -> np.ndarray:
        own = np.empty(self.n, dtype=np.int64)
        for p, s in enumerate(self.interiors):
            own[s] = p
        return own

    def restriction(self, i: int) -> sps.csr_matrix:
        """``R_i = I_n(Omega_i, :)`` as a sparse matrix."""
        idx = self.overlapping(i)
        return sps.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, self.n))

    def dump(self, path: str | os.PathLike) -> None:
        """Text audit file: one block per subdomain, 1-based indices."""
        with open(path, "w") as fh:
            fh.write(f"# n={self.n} subdomains={self.n_subdomains}\n")
            for i in range(self.n_subdomains):
                fh.write(f"subdomain {i + 1}\n")
                for name, s in (("interior", self.interiors[i]), ("boundary", self.boundaries[i]), ("halo", self.halos[i])):
                    fh.write(name + ":" + "".join(f" {v + 1}" for v in s) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SubdomainLayout":
        parts = {"interior": [], "boundary": [], "halo": []}
        n = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("# n="):
                    n = int(line.split()[1].split("=")[1])
                elif ":" in line:
                    key, _, rest = line.partition(":")
                    parts[key].append(np.array([int(t) - 1 for t in rest.split()], dtype=np.int64))
        if n is None:
            raise ValueError(f"{path}: missing '# n=' header")
        return cls(n, tuple(parts["interior"]), tuple(parts["boundary"]), tuple(parts["halo"]))


def build_layout(graph: AdjacencyGraph, interiors: list[np.ndarray]) -> SubdomainLayout:
    """Derive overlap boundaries (distance one from the interior) and halos
    (distance one from the boundary, outside the overlapping set)."""
    n = graph.n_vertices
    seen = np.zeros(n, dtype=np.int64)
    for s in interiors:
        seen[s] += 1
    if np.any(seen != 1):
        raise ValueError("interiors must be disjoint and cover all vertices")
    ints, bnds, halos = [], [], []
    for s in interiors:
        interior = np.sort(np.asarray(s, dtype=np.int64))
        gamma = np.setdiff1d(graph.neighbors_of_set(interior), interior, assume_unique=True)
        omega = np.union1d(interior, gamma)
        delta = np.setdiff1d(graph.neighbors_of_set(gamma), omega, assume_unique=True)
        ints.append(interior)
        bnds.append(gamma)
        halos.append(delta)
    return SubdomainLayout(n, tuple(ints), tuple(bnds), tuple(halos))


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Diagonal weights ``d_i`` on each overlapping set."""

    scheme: str
    weights: tuple[np.ndarray, ...]

    def apply(self, layout: SubdomainLayout, u: np.ndarray) -> np.ndarray:
        """``sum_i R_i^T D_i R_i u``."""
        out = np.zeros_like(np.asarray(u, dtype=np.float64))
        for i, d in enumerate(self.weights):
            idx = layout.overlapping(i)
            out[idx] += d * u[idx]
        return out


def build_partition_of_unity(layout: SubdomainLayout, scheme: str = "boolean") -> PartitionOfUnity:
    if scheme == "boolean":
        weights = tuple(
            np.concatenate([np.ones(layout.interiors[i].size), np.zeros(layout.boundaries[i].size)])
            for i in range(layout.n_subdomains)
        )
    elif scheme == "multiplicity":
        count = np.zeros(layout.n)
        for i in range(layout.n_subdomains):
            count[layout.overlapping(i)] += 1
        weights = tuple(1.0 / count[layout.overlapping(i)] for i in range(layout.n_subdomains))
    else:
        raise ValueError(f"unknown partition-of-unity scheme '{scheme}'")
    return PartitionOfUnity(scheme, weights)


@dataclass(frozen=True)
class Coloring:
    colors: tuple[int, ...]
    n_colors: int


def subdomain_adjacency(layout: SubdomainLayout) -> sps.csr_matrix:
    """Subdomain graph: ``i ~ j`` iff their overlapping sets intersect."""
    rows, cols = [], []
    for i in range(layout.n_subdomains):
        idx = layout.overlapping(i)
        rows.append(idx)
        cols.append(np.full(idx.size, i))
    member = sps.csr_matrix(
        (np.ones(sum(r.size for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
        shape=(layout.n, layout.n_subdomains),
    )
    share = (member.T @ member).tocsr()
    share.setdiag(0)
    share.eliminate_zeros()
    return share


def color_subdomains(layout: SubdomainLayout) -> Coloring:
    """Greedy colouring, vertices visited by decreasing degree then index."""
    adj = subdomain_adjacency(layout)
    nsub = layout.n_subdomains
    degree = np.diff(adj.indptr)
    order = sorted(range(nsub), key=lambda i: (-degree[i], i))
    colors = [-1] * nsub
    for i in order:
        taken = {colors[j] for j in adj.indices[adj.indptr[i] : adj.indptr[i + 1]]}
        c = 0
        while c in taken:
            c += 1
        colors[i] = c
    return Coloring(tuple(colors), max(colors) + 1)
