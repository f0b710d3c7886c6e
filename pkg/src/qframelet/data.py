"""Datasets, noise injection, metrics and synthetic fixtures."""
from __future__ import annotations

import json
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import yaml

from .errors import InputError, LoadError
from .exact import EigenSystem, eigendecompose
from .graph import (
    Graph,
    HeteroGraph,
    MetaPath,
    build_graph,
    graph_from_adjacency,
    load_hetero_schema,
    metapath_adjacency,
    normalized_laplacian,
    read_edge_list,
    write_edge_list,
)
from .rng import keyed_normal, keyed_uniform, stream

FIXTURE_DIR = Path(__file__).parent / "fixtures"


@dataclass
class NodeDataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    graph: Graph | None = None
    hetero: HeteroGraph | None = None
    target_type: str | None = None
    metapaths: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        for name in ("train_idx", "val_idx", "test_idx"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        validate_dataset(self)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def is_hetero(self) -> bool:
        return self.hetero is not None

    def metapath_graphs(self) -> list[Graph]:
        return [metapath_adjacency(self.hetero, MetaPath.parse(p)) for p in self.metapaths]

    def with_features(self, features: np.ndarray) -> "NodeDataset":
        return NodeDataset(
            self.name, features, self.labels, self.train_idx, self.val_idx, self.test_idx,
            self.graph, self.hetero, self.target_type, list(self.metapaths),
        )


def validate_dataset(ds: NodeDataset) -> None:
    n = ds.features.shape[0]
    if ds.features.ndim != 2:
        raise LoadError(f"{ds.name}: features must be a matrix")
    if ds.labels.shape != (n,):
        raise LoadError(f"{ds.name}: {ds.labels.size} labels for {n} feature rows")
    if ds.labels.size and ds.labels.min() < 0:
        raise LoadError(f"{ds.name}: negative label")
    if ds.graph is not None and ds.graph.num_nodes != n:
        raise LoadError(f"{ds.name}: graph has {ds.graph.num_nodes} nodes but {n} feature rows")
    if ds.hetero is not None:
        if ds.target_type not in ds.hetero.node_types:
            raise LoadError(f"{ds.name}: unknown target type {ds.target_type!r}")
        if ds.hetero.node_types[ds.target_type] != n:
            raise LoadError(f"{ds.name}: target type count differs from feature rows")
        if not ds.metapaths:
            raise LoadError(f"{ds.name}: heterogeneous dataset needs meta-paths")
    seen = {}
    for name in ("train_idx", "val_idx", "test_idx"):
        idx = getattr(ds, name)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise LoadError(f"{ds.name}: {name} index out of range")
        if np.unique(idx).size != idx.size:
            raise LoadError(f"{ds.name}: {name} has duplicate indices")
        for other, prev in seen.items():
            if np.intersect1d(prev, idx).size:
                raise LoadError(f"{ds.name}: {name} overlaps {other}")
        seen[name] = idx


# -- loading ------------------------------------------------------------------


def _read_matrix_csv(path: Path, dtype=float) -> np.ndarray:
    rows = []
    width = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise LoadError(f"{path}:{lineno}: expected {width} fields, got {len(parts)}")
            try:
                rows.append([dtype(p) for p in parts])
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=dtype).reshape(len(rows), width or 0)


def _read_labels(path: Path) -> np.ndarray:
    labels = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                value = int(line)
            except ValueError:
                raise LoadError(f"{path}:{lineno}: label {line!r} is not an integer") from None
            if value < 0:
                raise LoadError(f"{path}:{lineno}: label {value} out of range")
            labels.append(value)
    return np.array(labels, dtype=np.int64)


def load_dataset(manifest_path: str | Path) -> NodeDataset:
    """Load a dataset described by a YAML manifest.

    Homogeneous manifests name ``edges``, ``features``, ``labels`` and
    ``splits``; heterogeneous ones replace ``edges`` with ``hetero_schema``,
    ``target_type`` and ``metapaths``. Paths are relative to the manifest.
    An optional ``num_classes`` bounds the labels.
    """
    manifest_path = Path(manifest_path)
    try:
        cfg = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise LoadError(f"{manifest_path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise LoadError(f"{manifest_path}: manifest must be a mapping")
    root = manifest_path.parent

    def need(key):
        if key not in cfg:
            raise LoadError(f"{manifest_path}: missing key {key!r}")
        path = root / cfg[key]
        if not path.exists():
            raise LoadError(f"{manifest_path}: {key} file {path} not found")
        return path

    features = _read_matrix_csv(need("features"))
    labels = _read_labels(need("labels"))
    n = features.shape[0]
    if labels.size != n:
        raise LoadError(f"{manifest_path}: {labels.size} labels for {n} feature rows")
    num_classes = cfg.get("num_classes")
    if num_classes is not None and labels.size and labels.max() >= int(num_classes):
        bad = int(np.argmax(labels >= int(num_classes)))
        raise LoadError(f"{cfg['labels']}:{bad + 1}: label {labels[bad]} >= num_classes {num_classes}")
    try:
        splits = json.loads(need("splits").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LoadError(f"{cfg['splits']}: {exc}") from None

    graph = hetero = target = None
    metapaths: list[str] = []
    if "hetero_schema" in cfg:
        hetero = load_hetero_schema(need("hetero_schema"))
        target = cfg.get("target_type")
        metapaths = list(cfg.get("metapaths", []))
        for p in metapaths:
            mp = MetaPath.parse(p)
            if mp.type_sequence[0] != target:
                raise LoadError(f"{manifest_path}: meta-path {p} does not start at {target}")
    else:
        edges = read_edge_list(need("edges"))
        try:
            graph = build_graph(int(cfg.get("num_nodes", n)), edges)
        except InputError as exc:
            raise LoadError(f"{cfg['edges']}: {exc}") from None
        if graph.num_nodes != n:
            raise LoadError(f"{manifest_path}: num_nodes {graph.num_nodes} but {n} feature rows")

    return NodeDataset(
        str(cfg.get("name", manifest_path.stem)),
        features, labels,
        splits.get("train", []), splits.get("val", []), splits.get("test", []),
        graph, hetero, target, metapaths,
    )


def write_dataset(ds: NodeDataset, directory: str | Path) -> Path:
    """Write a homogeneous dataset in manifest layout; returns the manifest path."""
    if ds.graph is None:
        raise InputError("write_dataset supports homogeneous datasets only")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(out / "edges.tsv", ds.graph.edges)
    np.savetxt(out / "features.csv", ds.features, delimiter=",", fmt="%.17g")
    np.savetxt(out / "labels.csv", ds.labels, fmt="%d")
    splits = {k: getattr(ds, f"{k}_idx").tolist() for k in ("train", "val", "test")}
    (out / "splits.json").write_text(json.dumps(splits), encoding="utf-8")
    manifest = {
        "name": ds.name, "num_nodes": ds.num_nodes, "num_classes": ds.num_classes,
        "edges": "edges.tsv", "features": "features.csv", "labels": "labels.csv",
        "splits": "splits.json",
    }
    path = out / "manifest.yaml"
    path.write_text(yaml.safe_dump(manifest, sort_keys=False), encoding="utf-8")
    return path


def load_planetoid(raw_dir: str | Path, name: str = "cora") -> NodeDataset:
    """Read the classic ``ind.<name>.*`` Planetoid files with the public split.

    Train is the first ``len(y)`` nodes, validation the next 500, and test
    the nodes listed in ``ind.<name>.test.index``.
    """
    raw_dir = Path(raw_dir)
    objs = {}
    for key in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        path = raw_dir / f"ind.{name}.{key}"
        try:
            with path.open("rb") as fh:
                objs[key] = pickle.load(fh, encoding="latin1")
        except OSError as exc:
            raise LoadError(f"{path}: {exc}") from None
    test_index = [int(line) for line in (raw_dir / f"ind.{name}.test.index").read_text().split()]
    test_sorted = np.sort(test_index)

    tx, ty = objs["tx"], objs["ty"]
    if name == "citeseer":
        # isolated test nodes are missing from tx; pad with zero rows
        full = range(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        tx, ty = tx_ext, ty_ext
    feats = sp.vstack((objs["allx"], tx)).tolil()
    feats[test_index, :] = feats[test_sorted, :]
    onehot = np.vstack((objs["ally"], ty))
    onehot[test_index, :] = onehot[test_sorted, :]
    labels = np.argmax(onehot, axis=1)

    n = feats.shape[0]
    edges = [(int(u), int(v)) for u, nbrs in objs["graph"].items() for v in nbrs if int(v) < n and int(u) < n]
    graph = build_graph(n, edges)
    n_train = objs["y"].shape[0]
    return NodeDataset(
        name, np.asarray(feats.todense()), labels,
        np.arange(n_train), np.arange(n_train, n_train + 500), test_sorted,
        graph=graph,
    )


def normalize_rows(X: np.ndarray) -> np.ndarray:
    s = X.sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return X / s


# -- noise --------------------------------------------------------------------


def inject_binary_noise(X, rate: float, seed: int, per_node: bool = False) -> np.ndarray:
    """Flip 0/1 entries independently with probability ``rate``.

    With ``per_node=True`` every feature of a ``rate`` fraction of nodes is
    flipped instead.
    """
    X = np.asarray(X, dtype=float)
    if not np.all((X == 0) | (X == 1)):
        raise InputError("binary noise needs a 0/1 feature matrix")
    if not 0 <= rate <= 1:
        raise InputError(f"rate must lie in [0, 1], got {rate}")
    if per_node:
        hit = stream(seed, "binary-noise-node").random(X.shape[0]) < rate
        flip = np.repeat(hit[:, None], X.shape[1], axis=1)
    else:
        flip = keyed_uniform(seed, "binary-noise", X.shape) < rate
    return np.where(flip, 1.0 - X, X)


def inject_gaussian_noise(X, sigma: float, seed: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if sigma < 0:
        raise InputError("sigma must be non-negative")
    if sigma == 0:
        return X.copy()
    return X + sigma * keyed_normal(seed, "gaussian-noise", X.shape)


def top_eigenvectors(graph: Graph, F: int, es: EigenSystem | None = None) -> np.ndarray:
    """Eigenvectors of the ``F`` largest Laplacian eigenvalues, shape ``(N, F)``."""
    if es is None:
        es = eigendecompose(normalized_laplacian(graph))
    return es.U[:, es.num_nodes - F:][:, ::-1]


def inject_highfreq_noise(X, es: EigenSystem, F: int, nl: float, seed: int) -> np.ndarray:
    """Add ``U_top @ w_c`` to each channel, ``w_c ~ N(0, nl^2 I_F)``.

    ``U_top`` holds the eigenvectors of the ``F`` largest eigenvalues.
    """
    X = np.asarray(X, dtype=float)
    n = es.num_nodes
    if not 1 <= F <= n:
        raise InputError(f"F must lie in [1, {n}], got {F}")
    if X.shape[0] != n:
        raise InputError("signal and eigensystem disagree on N")
    top = es.U[:, n - F:][:, ::-1]
    d = X.shape[1]
    w = np.empty((F, d))
    for c in range(d):
        w[:, c] = stream(seed, "highfreq-noise", c).standard_normal(F)
    return X + top @ (nl * w)


# -- metrics ------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    macro_f1: float
    micro_f1: float


def compute_metrics(pred, true, mask=None) -> Metrics:
    """Accuracy, macro-F1 and micro-F1 over the masked nodes.

    Macro-F1 averages per-class F1 over every class that appears in either
    the predictions or the truth; such a class missing on one side scores 0.
    """
    pred = np.asarray(pred)
    true = np.asarray(true)
    if mask is not None:
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        pred, true = pred[idx], true[idx]
    if true.size == 0:
        raise InputError("metrics need at least one node")
    correct = pred == true
    acc = float(np.mean(correct))
    f1s = []
    for c in np.union1d(pred, true):
        tp = np.sum((pred == c) & correct)
        fp = np.sum((pred == c) & ~correct)
        fn = np.sum((true == c) & ~correct)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    # pooled counts: every error is one FP and one FN, so micro-F1 == accuracy
    tp = int(np.sum(correct))
    fp = fn = true.size - tp
    micro = 2 * tp / (2 * tp + fp + fn)
    return Metrics(acc, float(np.mean(f1s)), float(micro))


# -- synthetic datasets -------------------------------------------------------


def two_clique_dataset(clique: int = 5, seed: int = 0) -> NodeDataset:
    """Two cliques joined by a single edge with cluster-indicator features."""
    n = 2 * clique
    edges = [(i, j) for c in (0, clique) for i in range(c, c + clique) for j in range(i + 1, c + clique)]
    edges.append((clique - 1, clique))
    labels = np.repeat([0, 1], clique)
    features = np.eye(2)[labels]
    order = stream(seed, "split").permutation(clique)
    train = [int(order[0]), clique + int(order[0])]
    val = [int(order[1]), clique + int(order[1])]
    test = sorted(set(range(n)) - set(train) - set(val))
    return NodeDataset("two-clique", features, labels, train, val, test, graph=build_graph(n, edges))


def two_cluster_dataset(
    num_nodes: int = 200,
    p_in: float = 0.1,
    p_out: float = 0.01,
    num_features: int = 16,
    feature_noise: float = 0.5,
    binary: bool = False,
    train_per_class: int = 10,
    num_val: int = 40,
    seed: int = 0,
) -> NodeDataset:
    """Two-block stochastic block model with class-correlated features.

    Continuous features are ``+-1`` class indicators plus Gaussian noise of
    std ``feature_noise``. Binary features switch on with probability
    ``0.5 + feature_noise`` in a class's half of the columns and
    ``0.5 - feature_noise`` elsewhere.
    """
    rng = stream(seed, "two-cluster")
    half = num_nodes // 2
    labels = np.repeat([0, 1], [half, num_nodes - half])
    same = labels[:, None] == labels[None, :]
    probs = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((num_nodes, num_nodes)) < probs, k=1)
    graph = graph_from_adjacency(upper)
    if binary:
        cols = np.arange(num_features) % 2
        p = np.where(cols[None, :] == labels[:, None], 0.5 + feature_noise, 0.5 - feature_noise)
        features = (rng.random((num_nodes, num_features)) < p).astype(float)
    else:
        sign = np.where(labels == 0, -1.0, 1.0)[:, None]
        features = sign + feature_noise * rng.standard_normal((num_nodes, num_features))
    train, val, test = stratified_split(labels, train_per_class, num_val, seed)
    return NodeDataset("two-cluster", features, labels, train, val, test, graph=graph)


def stratified_split(labels: np.ndarray, train_per_class: int, num_val: int, seed: int):
    rng = stream(seed, "split")
    train = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        train.extend(rng.permutation(members)[:train_per_class].tolist())
    rest = rng.permutation(np.setdiff1d(np.arange(labels.size), train))
    return sorted(train), sorted(rest[:num_val].tolist()), sorted(rest[num_val:].tolist())


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture manifest, e.g. ``toy10`` or ``hetero_apa``."""
    path = FIXTURE_DIR / name / "manifest.yaml"
    if not path.exists():
        raise LoadError(f"no bundled fixture {name!r}")
    return path
