"""Graphs, covariates, ensembles and their on-disk formats.

Three formats are supported by :func:`load_ensemble` / :func:`save_ensemble`:

``json-bundle``
    A single JSON file with keys ``n``, ``directed``, ``node_attrs``,
    ``edge_attrs`` and ``graphs`` (a list of edge lists). Optional keys:
    ``labels`` (node labels; edges then refer to labels), ``index_base``
    (0 or 1, for integer edges when no labels are given), ``covariates``
    (per-graph ``{"node_attrs", "edge_attrs"}`` overrides) and ``truth``
    (ground-truth component labels, ignored by fitting).
``edge-list-dir``
    A directory holding ``meta.json`` (same header keys as the bundle, plus
    an optional ordered ``files`` list) and one whitespace separated
    ``src dst`` file per graph.
``adjacency-csv``
    A JSON manifest (header keys plus ``files``) pointing at one dense 0/1
    CSV matrix per graph, paths relative to the manifest.

Node labels are mapped to 0-based indices by sorting the label set, so the
map is deterministic and is written back out with every saved ensemble.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError, StructuralError

__all__ = [
    "Graph",
    "Covariates",
    "Ensemble",
    "toggle_edge",
    "load_ensemble",
    "save_ensemble",
    "FORMATS",
]

FORMATS = ("edge-list-dir", "adjacency-csv", "json-bundle")


class Graph:
    """Binary graph on ``n`` nodes with no self-loops.

    The adjacency matrix is a dense ``uint8`` array that is frozen after
    construction; undirected graphs store both triangles.
    """

    __slots__ = ("_adj", "directed")

    def __init__(self, adjacency, directed=False, *, _trusted=False):
        adj = np.array(adjacency, dtype=np.uint8, copy=True)
        if not _trusted:
            if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
                raise StructuralError(f"adjacency must be a non-empty square matrix, got shape {adj.shape}")
            if np.any(adj > 1):
                raise StructuralError("adjacency entries must be 0 or 1")
            if np.any(np.diag(adj)):
                i = int(np.flatnonzero(np.diag(adj))[0])
                raise StructuralError(f"self-loop at node {i}")
            if not directed and not np.array_equal(adj, adj.T):
                raise StructuralError("undirected adjacency must be symmetric")
        adj.setflags(write=False)
        self._adj = adj
        self.directed = bool(directed)

    @classmethod
    def empty(cls, n, directed=False):
        return cls(np.zeros((n, n), dtype=np.uint8), directed, _trusted=True)

    @classmethod
    def complete(cls, n, directed=False):
        adj = np.ones((n, n), dtype=np.uint8)
        np.fill_diagonal(adj, 0)
        return cls(adj, directed, _trusted=True)

    @classmethod
    def from_edges(cls, n, edges, directed=False):
        adj = np.zeros((n, n), dtype=np.uint8)
        for i, j in edges:
            if i == j:
                raise StructuralError(f"self-loop at node {i}")
            adj[i, j] = 1
            if not directed:
                adj[j, i] = 1
        return cls(adj, directed, _trusted=True)

    @property
    def n(self):
        return self._adj.shape[0]

    @property
    def adjacency(self):
        """Read-only ``(n, n)`` uint8 view."""
        return self._adj

    @property
    def n_dyads(self):
        n = self.n
        return n * (n - 1) if self.directed else n * (n - 1) // 2

    def has_edge(self, i, j):
        return bool(self._adj[i, j])

    def edge_count(self):
        total = int(self._adj.sum())
        return total if self.directed else total // 2

    def edges(self):
        """Edge list; ``(i, j)`` with ``i < j`` for undirected graphs."""
        a = self._adj if self.directed else np.triu(self._adj, 1)
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(a))]

    def dyads(self):
        """All dyads in canonical order, as an ``(n_dyads, 2)`` int array."""
        return dyad_index(self.n, self.directed)

    def toggle(self, i, j):
        return toggle_edge(self, i, j)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.directed == other.directed and np.array_equal(self._adj, other._adj)

    def __hash__(self):
        return hash((self.directed, self._adj.tobytes()))

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.n}, {kind}, edges={self.edge_count()})"


def dyad_index(n, directed):
    """Canonical dyad ordering: row-major ``i < j`` (undirected) or ``i != j``."""
    if directed:
        r, s = np.nonzero(~np.eye(n, dtype=bool))
    else:
        r, s = np.triu_indices(n, 1)
    return np.column_stack([r, s]).astype(np.int64)


def toggle_edge(g, i, j):
    """Return a copy of ``g`` with dyad ``(i, j)`` flipped."""
    n = g.n
    if not (0 <= i < n and 0 <= j < n):
        raise DomainError(f"dyad ({i}, {j}) out of range for n={n}")
    if i == j:
        raise DomainError("cannot toggle a self-loop")
    adj = g.adjacency.copy()
    adj[i, j] ^= 1
    if not g.directed:
        adj[j, i] = adj[i, j]
    return Graph(adj, g.directed, _trusted=True)


@dataclass
class Covariates:
    """Node and edge covariates for graphs on ``n`` nodes.

    Categorical node attributes are stored as integer codes (as floats) with
    the original values kept in ``levels[name]``; numeric ones are stored
    as-is and have no entry in ``levels``.
    """

    n: int
    node_attrs: dict = field(default_factory=dict)
    edge_attrs: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, vec in list(self.node_attrs.items()):
            vec = np.asarray(vec)
            if vec.dtype.kind in "OUSb":
                lv = sorted(set(vec.tolist()), key=_sort_key)
                lookup = {v: k for k, v in enumerate(lv)}
                vec = np.array([lookup[v] for v in vec.tolist()], dtype=float)
                self.levels[name] = lv
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.n,):
                raise StructuralError(f"node attribute {name!r} has shape {vec.shape}, expected ({self.n},)")
            self.node_attrs[name] = vec
        for name, mat in list(self.edge_attrs.items()):
            mat = np.asarray(mat, dtype=float)
            if mat.shape != (self.n, self.n):
                raise StructuralError(
                    f"edge attribute {name!r} has shape {mat.shape}, expected ({self.n}, {self.n})")
            self.edge_attrs[name] = mat

    def node_values(self, name):
        """Original (decoded) values of a node attribute."""
        vec = self.node_attrs[name]
        if name in self.levels:
            return [self.levels[name][int(c)] for c in vec]
        return vec.tolist()

    def permuted(self, perm):
        """Covariates with node ``perm[k]`` moved to position ``k``."""
        perm = np.asarray(perm)
        return Covariates(
            self.n,
            {k: v[perm] for k, v in self.node_attrs.items()},
            {k: m[np.ix_(perm, perm)] for k, m in self.edge_attrs.items()},
            dict(self.levels),
        )

    def equals(self, other):
        if self.n != other.n or set(self.node_attrs) != set(other.node_attrs):
            return False
        if set(self.edge_attrs) != set(other.edge_attrs):
            return False
        for k in self.node_attrs:
            if self.node_values(k) != other.node_values(k):
                return False
        return all(np.array_equal(self.edge_attrs[k], other.edge_attrs[k]) for k in self.edge_attrs)


@dataclass
class Ensemble:
    """``N`` graphs on a common node set.

    ``covariates`` is either one :class:`Covariates` shared by all graphs or a
    list with one entry per graph.
    """

    graphs: list
    covariates: object = None
    labels: list = None
    truth: list = None

    def __post_init__(self):
        if len(self.graphs) < 1:
            raise StructuralError("an ensemble needs at least one graph")
        n, directed = self.graphs[0].n, self.graphs[0].directed
        for k, g in enumerate(self.graphs):
            if g.n != n:
                raise StructuralError(f"graph {k} has n={g.n}, expected {n}")
            if g.directed != directed:
                raise StructuralError(f"graph {k} directedness differs from graph 0")
        if self.covariates is None:
            self.covariates = Covariates(n)
        covs = self.covariates if isinstance(self.covariates, list) else [self.covariates]
        if isinstance(self.covariates, list) and len(covs) != len(self.graphs):
            raise StructuralError("per-graph covariates must have one entry per graph")
        for c in covs:
            if c.n != n:
                raise StructuralError(f"covariates are for n={c.n}, graphs have n={n}")
        if self.labels is None:
            self.labels = list(range(n))
        if len(self.labels) != n:
            raise StructuralError("label list length differs from n")

    @property
    def N(self):
        return len(self.graphs)

    @property
    def n(self):
        return self.graphs[0].n

    @property
    def directed(self):
        return self.graphs[0].directed

    def covariates_for(self, i):
        if isinstance(self.covariates, list):
            return self.covariates[i]
        return self.covariates

    def subset(self, idx):
        idx = list(idx)
        cov = [self.covariates[i] for i in idx] if isinstance(self.covariates, list) else self.covariates
        truth = None if self.truth is None else [self.truth[i] for i in idx]
        return Ensemble([self.graphs[i] for i in idx], cov, list(self.labels), truth)

    def equals(self, other):
        if self.N != other.N or self.labels != other.labels:
            return False
        if any(a != b for a, b in zip(self.graphs, other.graphs)):
            return False
        return all(self.covariates_for(i).equals(other.covariates_for(i)) for i in range(self.N))


# --------------------------------------------------------------------------
# label handling


def _sort_key(v):
    # numbers before strings; numbers numerically
    if isinstance(v, (bool, np.bool_)):
        return (0, int(v), "")
    if isinstance(v, (int, float, np.integer, np.floating)):
        return (0, float(v), "")
    return (1, 0.0, str(v))


class _NodeMap:
    """Maps file-level node tokens to 0-based indices."""

    def __init__(self, n, labels=None, index_base=0):
        self.n = n
        self.file_labels = None if labels is None else list(labels)
        if labels is not None:
            if len(labels) != n:
                raise StructuralError(f"labels list has {len(labels)} entries, expected n={n}")
            if len(set(map(str, labels))) != n:
                raise StructuralError("node labels must be unique")
            self.sorted_labels = sorted(labels, key=_sort_key)
            self._lookup = {str(lab): k for k, lab in enumerate(self.sorted_labels)}
            # file order -> internal order
            self.perm = np.array([self._lookup[str(lab)] for lab in labels])
            self.inverse = np.argsort(self.perm)
        else:
            if index_base not in (0, 1):
                raise StructuralError("index_base must be 0 or 1")
            self.sorted_labels = list(range(index_base, index_base + n))
            self._lookup = None
            self.index_base = index_base
            self.inverse = np.arange(n)

    def index(self, token):
        if self._lookup is not None:
            key = str(token)
            if key not in self._lookup:
                raise KeyError(f"unknown node label {token!r}")
            return self._lookup[key]
        try:
            if isinstance(token, float) and not token.is_integer():
                raise ValueError
            k = int(token) - self.index_base
        except (TypeError, ValueError):
            raise KeyError(f"node token {token!r} is not an integer index") from None
        if not 0 <= k < self.n:
            raise KeyError(f"node index {token!r} out of range")
        return k

    def reorder_vector(self, vec):
        """Reorder an attribute vector given in file label order."""
        vec = np.asarray(vec)
        return vec[self.inverse]

    def reorder_matrix(self, mat):
        mat = np.asarray(mat)
        return mat[np.ix_(self.inverse, self.inverse)]


def _covariates_from(header, nmap, n, where):
    try:
        node = {k: nmap.reorder_vector(v) for k, v in (header.get("node_attrs") or {}).items()}
        edge = {k: nmap.reorder_matrix(np.asarray(v, dtype=float))
                for k, v in (header.get("edge_attrs") or {}).items()}
        return Covariates(n, node, edge)
    except (StructuralError, ValueError, IndexError) as exc:
        raise StructuralError(f"{where}: {exc}") from None


def _build_graph(n, directed, edge_iter, nmap, path):
    adj = np.zeros((n, n), dtype=np.uint8)
    for line, (a, b) in edge_iter:
        try:
            i, j = nmap.index(a), nmap.index(b)
        except KeyError as exc:
            raise ParseError(path, exc.args[0], line) from None
        if i == j:
            raise StructuralError(f"{path}:{line}: self-loop at node {a!r}")
        adj[i, j] = 1
        if not directed:
            adj[j, i] = 1
    return Graph(adj, directed, _trusted=True)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.msg, exc.lineno) from None
    except OSError as exc:
        raise ParseError(path, str(exc)) from None


def _header(data, path):
    if not isinstance(data, dict):
        raise ParseError(path, "top-level JSON value must be an object")
    if "directed" in data and not isinstance(data["directed"], bool):
        raise ParseError(path, "'directed' must be a boolean")
    if "n" in data and (not isinstance(data["n"], int) or isinstance(data["n"], bool) or data["n"] < 1):
        raise ParseError(path, "'n' must be a positive integer")
    return data


# --------------------------------------------------------------------------
# loaders


def load_ensemble(path, format="json-bundle"):
    """Read an ensemble in one of :data:`FORMATS`."""
    path = Path(path)
    if not path.exists():
        raise ParseError(path, "no such file or directory")
    if format == "json-bundle":
        return _load_bundle(path)
    if format == "edge-list-dir":
        return _load_edge_dir(path)
    if format == "adjacency-csv":
        return _load_adjacency_csv(path)
    raise ValueError(f"unknown ensemble format {format!r}; expected one of {FORMATS}")


def _load_bundle(path):
    data = _header(_read_json(path), path)
    for key in ("n", "graphs"):
        if key not in data:
            raise ParseError(path, f"missing required field {key!r}")
    n, directed = data["n"], data.get("directed", False)
    nmap = _NodeMap(n, data.get("labels"), data.get("index_base", 0))
    graphs = []
    for k, edges in enumerate(data["graphs"]):
        if not isinstance(edges, list):
            raise ParseError(path, f"graph {k} must be a list of edges")
        for e, edge in enumerate(edges):
            if not isinstance(edge, list) or len(edge) != 2:
                raise ParseError(path, f"graph {k}, edge {e}: expected a 2-element array")
        where = f"{path} (graph {k})"
        graphs.append(_build_graph(n, directed, ((None, tuple(e)) for e in edges), nmap, where))
    shared = _covariates_from(data, nmap, n, str(path))
    cov = shared
    if data.get("covariates") is not None:
        per = data["covariates"]
        if not isinstance(per, list) or len(per) != len(graphs):
            raise StructuralError(f"{path}: 'covariates' must list one entry per graph")
        cov = [_covariates_from(c, nmap, n, f"{path} (covariates {k})") for k, c in enumerate(per)]
    return Ensemble(graphs, cov, nmap.sorted_labels, data.get("truth"))


def _read_edge_file(path):
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                text = raw.split("#", 1)[0].strip()
                if not text:
                    continue
                parts = text.split()
                if len(parts) != 2:
                    raise ParseError(path, f"expected 'src dst', got {text!r}", lineno)
                yield lineno, (_maybe_int(parts[0]), _maybe_int(parts[1]))
    except OSError as exc:
        raise ParseError(path, str(exc)) from None


def _maybe_int(tok):
    try:
        return int(tok)
    except ValueError:
        return tok


def _load_edge_dir(path):
    if not path.is_dir():
        raise ParseError(path, "edge-list-dir format expects a directory")
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise ParseError(meta_path, "missing meta.json")
    meta = _header(_read_json(meta_path), meta_path)
    if "n" not in meta:
        raise ParseError(meta_path, "missing required field 'n'")
    n, directed = meta["n"], meta.get("directed", False)
    nmap = _NodeMap(n, meta.get("labels"), meta.get("index_base", 0))
    files = meta.get("files")
    if files is None:
        files = sorted(p.name for p in path.iterdir() if p.is_file() and p.name != "meta.json")
    graphs = [_build_graph(n, directed, _read_edge_file(path / f), nmap, path / f) for f in files]
    return Ensemble(graphs, _covariates_from(meta, nmap, n, str(meta_path)), nmap.sorted_labels,
                    meta.get("truth"))


def _read_csv_matrix(path):
    rows = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    vals = [int(c) for c in row]
                except ValueError:
                    raise ParseError(path, f"non-integer entry in row {row!r}", lineno) from None
                if any(v not in (0, 1) for v in vals):
                    raise ParseError(path, "entries must be 0 or 1", lineno)
                if rows and len(vals) != len(rows[0]):
                    raise ParseError(path, f"row has {len(vals)} columns, expected {len(rows[0])}", lineno)
                rows.append(vals)
    except OSError as exc:
        raise ParseError(path, str(exc)) from None
    if not rows:
        raise ParseError(path, "empty matrix")
    mat = np.array(rows, dtype=np.uint8)
    if mat.shape[0] != mat.shape[1]:
        raise ParseError(path, f"matrix is {mat.shape[0]}x{mat.shape[1]}, expected square")
    return mat


def _load_adjacency_csv(path):
    manifest = _header(_read_json(path), path)
    files = manifest.get("files")
    if not files:
        raise ParseError(path, "manifest must list at least one CSV under 'files'")
    directed = manifest.get("directed", False)
    mats = [(path.parent / f, _read_csv_matrix(path.parent / f)) for f in files]
    n = manifest.get("n", mats[0][1].shape[0])
    nmap = _NodeMap(n, manifest.get("labels"), 0)
    graphs = []
    for fpath, mat in mats:
        if mat.shape[0] != n:
            raise StructuralError(f"{fpath}: matrix has n={mat.shape[0]}, expected {n}")
        if np.any(np.diag(mat)):
            i = int(np.flatnonzero(np.diag(mat))[0])
            raise StructuralError(f"{fpath}:{i + 1}: self-loop at node {i}")
        if not directed and not np.array_equal(mat, mat.T):
            raise StructuralError(f"{fpath}: undirected adjacency matrix is not symmetric")
        graphs.append(Graph(nmap.reorder_matrix(mat), directed, _trusted=True))
    return Ensemble(graphs, _covariates_from(manifest, nmap, n, str(path)), nmap.sorted_labels,
                    manifest.get("truth"))


# --------------------------------------------------------------------------
# writers


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _cov_header(cov):
    return {
        "node_attrs": {k: [_jsonable(x) for x in cov.node_values(k)] for k in cov.node_attrs},
        "edge_attrs": {k: m.tolist() for k, m in cov.edge_attrs.items()},
    }


def _header_dict(ens):
    out = {"n": ens.n, "directed": ens.directed, "labels": [_jsonable(x) for x in ens.labels]}
    shared = ens.covariates if not isinstance(ens.covariates, list) else Covariates(ens.n)
    out.update(_cov_header(shared))
    if isinstance(ens.covariates, list):
        out["covariates"] = [_cov_header(c) for c in ens.covariates]
    if ens.truth is not None:
        out["truth"] = [_jsonable(t) for t in ens.truth]
    return out


def _labelled_edges(g, labels):
    return [[_jsonable(labels[i]), _jsonable(labels[j])] for i, j in g.edges()]


def save_ensemble(ens, path, format="json-bundle"):
    """Write ``ens`` so that :func:`load_ensemble` reproduces it exactly."""
    path = Path(path)
    header = _header_dict(ens)
    if format == "json-bundle":
        header["graphs"] = [_labelled_edges(g, ens.labels) for g in ens.graphs]
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(header, fh)
        return path
    if format == "edge-list-dir":
        path.mkdir(parents=True, exist_ok=True)
        width = len(str(ens.N))
        files = [f"graph_{k:0{width}d}.txt" for k in range(ens.N)]
        header["files"] = files
        for fname, g in zip(files, ens.graphs):
            with open(path / fname, "w") as fh:
                for a, b in _labelled_edges(g, ens.labels):
                    fh.write(f"{a} {b}\n")
        with open(path / "meta.json", "w") as fh:
            json.dump(header, fh)
        return path
    if format == "adjacency-csv":
        path.parent.mkdir(parents=True, exist_ok=True)
        stem = path.stem
        width = len(str(ens.N))
        files = [f"{stem}_{k:0{width}d}.csv" for k in range(ens.N)]
        header["files"] = files
        for fname, g in zip(files, ens.graphs):
            np.savetxt(path.parent / fname, g.adjacency, fmt="%d", delimiter=",")
        with open(path, "w") as fh:
            json.dump(header, fh)
        return path
    raise ValueError(f"unknown ensemble format {format!r}; expected one of {FORMATS}")


def graphs_to_bundle(graphs, path, labels=None, truth=None):
    """Convenience writer for a bare list of graphs."""
    ens = Ensemble(list(graphs), None, labels, truth)
    return save_ensemble(ens, path, "json-bundle")
