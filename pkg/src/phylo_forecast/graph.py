"""Fully connected phylogenetic network over a product panel.

Products are nodes.  Every product of one generation (distinct year)
links to every product of the next generation, weighted by the Jaccard
similarity of their attribute sets.  Zero-weight links are kept: the
network is fully connected between consecutive generations by
construction, so the edge count is the sum of N_t * N_{t+1} over
consecutive generation pairs.
"""

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .kernels import jaccard_block, spmm
from .panel import ChromosomeMatrix


def jaccard_similarity(a, b) -> float:
    """|a n b| / |a u b| for two attribute sets; 0.0 when both are empty."""
    a, b = set(a), set(b)
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


@dataclass
class FCPNetwork:
    """Directed ancestor-to-descendant graph with Jaccard edge weights.

    ``weights`` is an N x N CSR matrix aligned with the chromosome rows;
    explicit zeros are stored so the bipartite blocks stay complete.
    """

    weights: sp.csr_matrix
    years: np.ndarray
    product_ids: list
    generations: np.ndarray = field(init=False)
    generation_years: np.ndarray = field(init=False)

    def __post_init__(self):
        self.generation_years = np.unique(self.years)
        self.generations = np.searchsorted(self.generation_years, self.years)

    @property
    def num_nodes(self):
        return self.weights.shape[0]

    @property
    def num_edges(self):
        # stored entries, explicit zeros included
        return self.weights.indptr[-1]

    @property
    def num_generations(self):
        return len(self.generation_years)

    def generation_rows(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.generations == g)

    def block(self, g: int) -> np.ndarray:
        """Dense weight block from generation g to generation g+1."""
        rows_a = self.generation_rows(g)
        rows_b = self.generation_rows(g + 1)
        a0, a1 = rows_a[0], rows_a[-1] + 1
        b0, b1 = rows_b[0], rows_b[-1] + 1
        return self.weights[a0:a1, b0:b1].toarray()


def build_fcpn(chrom: ChromosomeMatrix) -> FCPNetwork:
    """Build the fully connected phylogenetic network for a panel."""
    groups = chrom.year_groups()
    if len(groups) < 1:
        raise ValidationError("panel has no year groups")
    n = chrom.num_products

    indptr = np.zeros(n + 1, dtype=np.int64)
    blocks = []
    for (year_a, rows_a), (year_b, rows_b) in zip(groups, groups[1:]):
        blocks.append((rows_a, rows_b, jaccard_block(chrom.data, rows_a, rows_b)))
        indptr[rows_a + 1] = len(rows_b)
    np.cumsum(indptr, out=indptr)

    indices = np.empty(indptr[-1], dtype=np.int32)
    data = np.empty(indptr[-1], dtype=np.float64)
    for rows_a, rows_b, block in blocks:
        for i, r in enumerate(rows_a):
            lo, hi = indptr[r], indptr[r + 1]
            indices[lo:hi] = rows_b
            data[lo:hi] = block[i]

    weights = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    return FCPNetwork(
        weights=weights, years=chrom.years.copy(), product_ids=list(chrom.product_ids)
    )


@dataclass
class PhyloTree:
    """Best-ancestor subgraph of an FCPN: in-degree at most one per node.

    ``edges`` holds (src, dst, weight) sorted by dst; nodes whose best
    incoming similarity falls below ``threshold`` stay orphans.
    """

    edges: list
    threshold: float
    years: np.ndarray
    product_ids: list


def phylo_tree(network: FCPNetwork, threshold: float = 0.0) -> PhyloTree:
    """Keep, per descendant, the strongest link from the previous
    generation when its weight reaches ``threshold``.  Ties break toward
    the lowest ancestor row.  The result is a subset of the network edges.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"tree threshold must be in [0, 1], got {threshold}")
    edges = []
    for g in range(network.num_generations - 1):
        rows_a = network.generation_rows(g)
        rows_b = network.generation_rows(g + 1)
        block = network.block(g)
        # argmax returns the first maximum, i.e. the lowest ancestor row
        best = np.argmax(block, axis=0)
        for j, dst in enumerate(rows_b):
            w = block[best[j], j]
            if w >= threshold:
                edges.append((int(rows_a[best[j]]), int(dst), float(w)))
    edges.sort(key=lambda e: e[1])
    return PhyloTree(
        edges=edges,
        threshold=threshold,
        years=network.years.copy(),
        product_ids=list(network.product_ids),
    )


def build_product_tree(chrom: ChromosomeMatrix, threshold: float = 0.0) -> PhyloTree:
    return phylo_tree(build_fcpn(chrom), threshold)


@dataclass
class LaplacianResult:
    """Symmetric-normalized Laplacian and its Chebyshev rescaling."""

    laplacian: sp.csr_matrix
    l_tilde: sp.csr_matrix
    lam_max: float
    power_converged: bool


def normalized_laplacian(weights: sp.csr_matrix) -> sp.csr_matrix:
    """I - D^{-1/2} (W + W^T) D^{-1/2}, with d^{-1/2} := 0 for isolated
    nodes so they contribute nothing off-diagonal."""
    n = weights.shape[0]
    if n == 0:
        raise ValidationError("empty graph")
    sym = (weights + weights.T).tocsr()
    sym.eliminate_zeros()
    deg = np.asarray(sym.sum(axis=1)).ravel()
    inv_sqrt = np.zeros(n, dtype=np.float64)
    np.divide(1.0, np.sqrt(deg), out=inv_sqrt, where=deg > 0)
    scaled = sym.multiply(inv_sqrt[:, None]).multiply(inv_sqrt[None, :]).tocsr()
    eye = sp.identity(n, format="csr", dtype=np.float64)
    return (eye - scaled).tocsr()


def _power_lambda_max(lap: sp.csr_matrix, tol: float, max_iter: int):
    """Power iteration on L + I; the +I shift keeps the target eigenvalue
    dominant (L is positive semi-definite with spectrum in [0, 2])."""
    n = lap.shape[0]
    eye = sp.identity(n, format="csr", dtype=np.float64)
    shifted = (lap + eye).tocsr()
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = spmm(shifted, v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 2.0, False
        v = w / norm
        av = spmm(shifted, v)
        estimate = float(v @ av)
        # Stop on the residual, not on successive estimates: the Rayleigh
        # quotient climbs from below, so consecutive values can agree to tol
        # while still sitting well under the true eigenvalue.
        resid = float(np.linalg.norm(av - estimate * v))
        if resid <= tol * abs(estimate):
            if estimate > 1.0:
                return estimate - 1.0, True
            return 2.0, False
    return 2.0, False


def estimate_lambda_max(
    lap, tol: float = 1e-6, max_iter: int = 1000
) -> float:
    """Largest eigenvalue of a symmetric matrix via shifted power iteration.

    Falls back to the spectral bound 2.0 (with a log warning) when the
    iteration does not settle within ``max_iter`` steps.
    """
    lap = sp.csr_matrix(lap, dtype=np.float64)
    asym = abs(lap - lap.T)
    if asym.nnz and asym.max() > 1e-10:
        raise ValidationError("matrix is not symmetric")
    lam, converged = _power_lambda_max(lap, tol, max_iter)
    if not converged:
        logging.getLogger(__name__).warning(
            "power iteration did not converge; using fallback lambda_max=2.0"
        )
    return lam


def scaled_laplacian(
    weights: sp.csr_matrix, tol: float = 1e-6, max_iter: int = 1000
) -> LaplacianResult:
    """Rescale the symmetric-normalized Laplacian to eigenvalue range [-1, 1].

    L_tilde = (2 / lambda_max) L - I; an edgeless graph gives L = I,
    lambda_max = 1, L_tilde = I.
    """
    lap = normalized_laplacian(weights)
    lam_max, converged = _power_lambda_max(lap, tol, max_iter)
    if not converged:
        logging.getLogger(__name__).warning(
            "power iteration did not converge; using fallback lambda_max=2.0"
        )
    n = lap.shape[0]
    eye = sp.identity(n, format="csr", dtype=np.float64)
    l_tilde = ((2.0 / lam_max) * lap - eye).tocsr()
    return LaplacianResult(
        laplacian=lap, l_tilde=l_tilde, lam_max=lam_max, power_converged=converged
    )


def write_nodes_csv(graph, path):
    """Node table for either graph kind (needs product_ids and years)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "product_id", "year"])
        for i, (pid, year) in enumerate(zip(graph.product_ids, graph.years)):
            writer.writerow([i, pid, int(year)])


def write_edges_csv(edges, path):
    """Write (src, dst, weight) triples with fixed 9-decimal weights."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "weight"])
        for src, dst, w in edges:
            writer.writerow([src, dst, f"{w:.9f}"])


def network_edge_list(network: FCPNetwork) -> list:
    """All stored edges as (src, dst, weight), row-major order."""
    w = network.weights
    out = []
    for i in range(network.num_nodes):
        lo, hi = w.indptr[i], w.indptr[i + 1]
        for jj in range(lo, hi):
            out.append((i, int(w.indices[jj]), float(w.data[jj])))
    return out


def export_graph(graph, out_dir) -> list:
    """Write nodes.csv and edges.csv for a network or a tree.

    Returns the written paths.  Ordering is deterministic, so re-export
    of the same graph produces byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(graph, FCPNetwork):
        edges = network_edge_list(graph)
    elif isinstance(graph, PhyloTree):
        edges = graph.edges
    else:
        raise ValidationError(f"cannot export {type(graph).__name__}")
    nodes_path = os.path.join(out_dir, "nodes.csv")
    edges_path = os.path.join(out_dir, "edges.csv")
    write_nodes_csv(graph, nodes_path)
    write_edges_csv(edges, edges_path)
    return [nodes_path, edges_path]
