"""Homogeneous graphs, normalized Laplacians and meta-path subgraphs."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import yaml

from .errors import InputError, LoadError, SchemaError

# Above this size the top eigenvalue is replaced by the bound 2.
EXACT_LAMBDA_MAX_NODES = 2000


@dataclass(frozen=True)
class Graph:
    """Undirected, unweighted graph without self-loops.

    ``adjacency`` is a symmetric CSR matrix with 0/1 entries and an empty
    diagonal. ``edges`` holds each undirected edge once as ``(i, j)`` with
    ``i < j``.
    """

    num_nodes: int
    adjacency: sp.csr_matrix = field(repr=False)

    @property
    def edges(self) -> list[tuple[int, int]]:
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[i]), int(upper.col[i])) for i in order]

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.nnz // 2)

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()


@dataclass(frozen=True)
class NormalizedLaplacian:
    matrix: sp.csr_matrix = field(repr=False)
    lambda_max: float

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


def _adjacency_from_pairs(n: int, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    adj = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n)).tocsr()
    adj.sum_duplicates()
    adj.data[:] = 1.0
    adj.sort_indices()
    return adj


def build_graph(num_nodes: int, edge_list: Iterable[Sequence[int]]) -> Graph:
    """Build a deduplicated, symmetric, self-loop-free graph.

    Args:
        num_nodes: number of vertices, must be positive.
        edge_list: pairs ``(i, j)`` of 0-based node indices. Mirrors,
            duplicates and self-loops are accepted and normalised away.

    Raises:
        InputError: if ``num_nodes`` is not positive or an index is out of range.
    """
    num_nodes = int(num_nodes)
    if num_nodes <= 0:
        raise InputError(f"num_nodes must be positive, got {num_nodes}")
    pairs = np.asarray(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
        bad = pairs[(pairs < 0).any(axis=1) | (pairs >= num_nodes).any(axis=1)][0]
        raise InputError(f"edge {tuple(bad)} out of range for {num_nodes} nodes")
    adj = _adjacency_from_pairs(num_nodes, pairs[:, 0], pairs[:, 1])
    return Graph(num_nodes, adj)


def graph_from_adjacency(adj) -> Graph:
    """Wrap any square (possibly weighted or asymmetric) matrix as a Graph."""
    adj = sp.coo_matrix(adj)
    if adj.shape[0] != adj.shape[1]:
        raise InputError(f"adjacency must be square, got {adj.shape}")
    nz = adj.data != 0
    return Graph(adj.shape[0], _adjacency_from_pairs(adj.shape[0], adj.row[nz], adj.col[nz]))


def normalized_laplacian(g: Graph) -> NormalizedLaplacian:
    """Return ``I - D^{-1/2} A D^{-1/2}`` with zero rows for isolated nodes."""
    deg = g.degrees()
    isolated = deg == 0
    inv_sqrt = np.zeros_like(deg)
    inv_sqrt[~isolated] = 1.0 / np.sqrt(deg[~isolated])
    dinv = sp.diags(inv_sqrt)
    identity = sp.diags((~isolated).astype(float))
    lap = (identity - dinv @ g.adjacency @ dinv).tocsr()
    # Symmetrize structurally so the transpose is bit-identical.
    lap = ((lap + lap.T) * 0.5).tocsr()
    lap.sort_indices()

    n = g.num_nodes
    if n <= EXACT_LAMBDA_MAX_NODES:
        lam = float(np.linalg.eigvalsh(lap.toarray())[-1])
        lam = min(max(lam, 0.0), 2.0)
    else:
        lam = 2.0
    return NormalizedLaplacian(lap, lam)


# -- heterogeneous graphs ----------------------------------------------------


@dataclass(frozen=True)
class Relation:
    source: str
    target: str
    matrix: sp.csr_matrix = field(repr=False)


@dataclass(frozen=True)
class HeteroGraph:
    """Typed node sets plus named relation incidence matrices."""

    node_types: Mapping[str, int]
    relations: Mapping[str, Relation]

    def __post_init__(self):
        for name, rel in self.relations.items():
            for t in (rel.source, rel.target):
                if t not in self.node_types:
                    raise SchemaError(f"relation {name!r} uses unknown node type {t!r}")
            expected = (self.node_types[rel.source], self.node_types[rel.target])
            if rel.matrix.shape != expected:
                raise SchemaError(
                    f"relation {name!r} has shape {rel.matrix.shape}, expected {expected}"
                )

    def step_matrix(self, src: str, dst: str) -> sp.csr_matrix:
        """Incidence matrix for one meta-path hop ``src -> dst``.

        A relation declared in the opposite direction is used transposed.
        """
        for rel in self.relations.values():
            if rel.source == src and rel.target == dst:
                return rel.matrix
        for rel in self.relations.values():
            if rel.source == dst and rel.target == src:
                return rel.matrix.T.tocsr()
        raise SchemaError(f"no relation connects {src!r} to {dst!r}")


def make_hetero_graph(node_types: Mapping[str, int], relations: Mapping[str, tuple]) -> HeteroGraph:
    """Build a HeteroGraph from ``name -> (src_type, dst_type, pairs_or_matrix)``."""
    rels = {}
    for name, (src, dst, data) in relations.items():
        if src not in node_types or dst not in node_types:
            raise SchemaError(f"relation {name!r} uses an undeclared node type")
        shape = (int(node_types[src]), int(node_types[dst]))
        if sp.issparse(data) or isinstance(data, np.ndarray):
            mat = sp.csr_matrix(data, dtype=float)
        else:
            pairs = np.asarray(list(data), dtype=np.int64).reshape(-1, 2)
            if pairs.size and (
                pairs.min() < 0 or (pairs[:, 0] >= shape[0]).any() or (pairs[:, 1] >= shape[1]).any()
            ):
                raise SchemaError(f"relation {name!r} has an index out of range")
            mat = sp.csr_matrix(
                (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=shape
            )
        mat.sum_duplicates()
        mat.data[:] = 1.0
        rels[name] = Relation(src, dst, mat)
    return HeteroGraph(dict(node_types), rels)


@dataclass(frozen=True)
class MetaPath:
    type_sequence: tuple[str, ...]

    def __post_init__(self):
        seq = self.type_sequence
        if len(seq) < 3:
            raise SchemaError(f"meta-path needs at least 3 types, got {'-'.join(seq)}")
        if seq[0] != seq[-1]:
            raise SchemaError(f"meta-path must start and end on one type: {'-'.join(seq)}")

    @classmethod
    def parse(cls, text: str) -> "MetaPath":
        return cls(tuple(part.strip() for part in text.split("-") if part.strip()))

    def __str__(self) -> str:
        return "-".join(self.type_sequence)


def metapath_adjacency(hg: HeteroGraph, path: MetaPath | str, weighted: bool = False):
    """Homogeneous graph over the end type connecting nodes linked by ``path``.

    The relation matrices along the path are multiplied in order; an entry is
    an edge when the product is positive. Self-connections are dropped.

    With ``weighted=True`` the symmetrized path-count matrix (zero diagonal)
    is returned instead of a Graph.
    """
    if isinstance(path, str):
        path = MetaPath.parse(path)
    seq = path.type_sequence
    for t in seq:
        if t not in hg.node_types:
            raise SchemaError(f"unknown node type {t!r} in meta-path {path}")
    prod = hg.step_matrix(seq[0], seq[1])
    for a, b in zip(seq[1:-1], seq[2:]):
        prod = (prod @ hg.step_matrix(a, b)).tocsr()
    prod = prod.tolil()
    prod.setdiag(0)
    prod = prod.tocsr()
    prod.eliminate_zeros()
    if weighted:
        return ((prod + prod.T) * 0.5).tocsr()
    return graph_from_adjacency(prod + prod.T)


# -- file formats -------------------------------------------------------------


def read_edge_list(path: str | Path) -> list[tuple[int, int]]:
    """Read ``src<TAB>dst`` lines (0-based). Blank lines and ``#`` comments are skipped."""
    pairs = []
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise LoadError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
    return pairs


def write_edge_list(path: str | Path, edges: Iterable[tuple[int, int]]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for i, j in edges:
            fh.write(f"{i}\t{j}\n")


def load_hetero_schema(path: str | Path) -> HeteroGraph:
    """Load a hetero schema file.

    The YAML layout is::

        node_types: {A: 2, P: 2}
        relations:
          writes: {source: A, target: P, edges: writes.tsv}

    Edge paths are resolved relative to the schema file.
    """
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise LoadError(f"{path}: {exc}") from None
    if not isinstance(cfg, dict) or "node_types" not in cfg or "relations" not in cfg:
        raise SchemaError(f"{path}: schema needs 'node_types' and 'relations'")
    rels = {}
    for name, spec in cfg["relations"].items():
        try:
            src, dst, edge_file = spec["source"], spec["target"], spec["edges"]
        except (KeyError, TypeError):
            raise SchemaError(f"{path}: relation {name!r} needs source, target, edges") from None
        try:
            pairs = read_edge_list(path.parent / edge_file)
        except OSError as exc:
            raise LoadError(f"{path}: relation {name!r}: {exc}") from None
        rels[name] = (src, dst, pairs)
    return make_hetero_graph({k: int(v) for k, v in cfg["node_types"].items()}, rels)
