"""Atomic truth values: the provider interface, the exact (graph-lookup)
backend, and the calibrated-score backend with its log-normalizer cache.

A provider answers three questions about a directed relation r:
truth(r, a, b) for a single atom, truth_matrix over a rows x cols domain
block, and relation_tail(r, t) ("how plausible is t as some tail of r").
Head-side queries are expressed through reverse relation ids, so every
kernel is tail-directed.

Calibration turns raw real-valued scores f_r(a, b) into truth values

    P_r(a, b) = min(1, exp(f_r(a, b) - S[a, r]))

where S[a, r] is the log-sum-exp of f_r(a, .) over the observed tails of
(a, r) when any exist, else over all entities (which makes P the plain
softmax row).  Observed triples are forced to exactly 1 after scaling.
The alternative "ratio of sums" scaling multiplies by the observed-tail
count before clamping; both modes share the same cache.
"""

from __future__ import annotations

import abc
import struct
import threading
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from .algebra import ScoreMatrix
from .kg import KnowledgeGraph

__all__ = [
    "TruthValueProvider",
    "ExactProvider",
    "CalibratedProvider",
    "DenseScoreStore",
    "SparseScoreStore",
    "build_cache",
    "write_score_file",
    "read_score_file",
    "write_relation_tail_table",
    "read_relation_tail_table",
    "ScoreFileError",
]

SCALING_MODES = ("log_scale", "ratio_of_sums")


class ScoreFileError(ValueError):
    """A score file is malformed or disagrees with the graph's dimensions."""


# ----------------------------------------------------------- shared pieces


class _AdjacencyCache:
    """Per-relation CSR indicator matrices over the full entity square,
    built lazily; shared by both providers for observed-edge masks."""

    def __init__(self, graph: KnowledgeGraph):
        self.graph = graph
        self._cache: dict[int, sparse.csr_matrix] = {}
        self._lock = threading.Lock()

    def csr(self, relation: int) -> sparse.csr_matrix:
        with self._lock:
            got = self._cache.get(relation)
            if got is None:
                heads, tails = self.graph.relation_pairs(relation)
                n = self.graph.num_entities
                got = sparse.csr_matrix(
                    (np.ones(heads.shape[0], dtype=np.float64), (heads, tails)),
                    shape=(n, n),
                )
                got.data[:] = 1.0  # collapse any summed duplicates
                self._cache[relation] = got
            return got

    def block_dense(self, relation: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Fresh 0/1 float64 indicator over rows x cols, safe to mutate."""
        if rows.size == 0 or cols.size == 0:
            return np.zeros((rows.size, cols.size))
        return self.csr(relation)[rows][:, cols].toarray()

    def block(self, relation: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Boolean observed-edge indicator over rows x cols."""
        return self.block_dense(relation, rows, cols) > 0.0

    def pairs(self, relation: int, heads: np.ndarray, tails: np.ndarray) -> np.ndarray:
        if heads.size == 0:
            return np.zeros(0, dtype=bool)
        vals = np.asarray(self.csr(relation)[heads, tails]).ravel()
        return vals > 0.0


def _as_id_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a one-dimensional id array")
    return arr


class TruthValueProvider(abc.ABC):
    """Truth values for relational atoms over a fixed knowledge graph."""

    def __init__(self, graph: KnowledgeGraph):
        self._graph = graph

    @property
    def graph(self) -> KnowledgeGraph:
        return self._graph

    @property
    def num_entities(self) -> int:
        return self._graph.num_entities

    @property
    def num_relations(self) -> int:
        return self._graph.num_relations

    @abc.abstractmethod
    def truth(self, relation: int, head: int, tail: int) -> float:
        """Truth value of the atom relation(head, tail), in [0, 1]."""

    @abc.abstractmethod
    def truth_matrix(
        self, relation: int, rows: np.ndarray, cols: np.ndarray, negated: bool = False
    ) -> ScoreMatrix:
        """Blockwise truths: entry (i, j) = truth(relation, rows[i], cols[j]),
        complemented when negated."""

    @abc.abstractmethod
    def relation_tail(self, relation: int, tail: int) -> float:
        """Truth that `tail` is a tail of some `relation` edge."""

    def truth_pairs(self, relation: int, heads: np.ndarray, tails: np.ndarray) -> np.ndarray:
        """Aligned per-pair truths; default is a scalar loop."""
        heads = _as_id_array(heads, "heads")
        tails = _as_id_array(tails, "tails")
        if heads.shape != tails.shape:
            raise ValueError("heads and tails must align")
        return np.array([self.truth(relation, int(a), int(b)) for a, b in zip(heads, tails)])

    def relation_tail_vector(self, relation: int, tails: np.ndarray) -> np.ndarray:
        tails = _as_id_array(tails, "tails")
        return np.array([self.relation_tail(relation, int(t)) for t in tails])


# ----------------------------------------------------------- exact backend


class ExactProvider(TruthValueProvider):
    """Graph-lookup truths: observed triples score 1, everything else a
    configurable epsilon (default 0, which keeps traversal semantics exact).
    """

    def __init__(self, graph: KnowledgeGraph, epsilon: float = 0.0):
        super().__init__(graph)
        if not 0.0 <= epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {epsilon!r}")
        self.epsilon = float(epsilon)
        self._adjacency = _AdjacencyCache(graph)

    def truth(self, relation: int, head: int, tail: int) -> float:
        return 1.0 if self._graph.has_triple(head, relation, tail) else self.epsilon

    def truth_matrix(
        self, relation: int, rows: np.ndarray, cols: np.ndarray, negated: bool = False
    ) -> ScoreMatrix:
        rows = _as_id_array(rows, "rows")
        cols = _as_id_array(cols, "cols")
        # affine remap of the fresh 0/1 block in place; cheaper than a
        # boolean mask plus np.where at large domain sizes
        values = self._adjacency.block_dense(relation, rows, cols)
        if negated:
            # observed -> 0, the rest -> 1 - epsilon
            np.multiply(values, -(1.0 - self.epsilon), out=values)
            np.add(values, 1.0 - self.epsilon, out=values)
        elif self.epsilon:
            # observed -> 1, the rest -> epsilon
            np.multiply(values, 1.0 - self.epsilon, out=values)
            np.add(values, self.epsilon, out=values)
        return ScoreMatrix(rows, cols, values)

    def truth_pairs(self, relation: int, heads: np.ndarray, tails: np.ndarray) -> np.ndarray:
        heads = _as_id_array(heads, "heads")
        tails = _as_id_array(tails, "tails")
        if heads.shape != tails.shape:
            raise ValueError("heads and tails must align")
        observed = self._adjacency.pairs(relation, heads, tails)
        return np.where(observed, 1.0, self.epsilon)

    def relation_tail(self, relation: int, tail: int) -> float:
        tails = self._graph.tails_of_relation(relation)
        at = np.searchsorted(tails, tail)
        hit = at < tails.shape[0] and tails[at] == tail
        return 1.0 if hit else self.epsilon

    def relation_tail_vector(self, relation: int, tails: np.ndarray) -> np.ndarray:
        tails = _as_id_array(tails, "tails")
        member = np.isin(tails, self._graph.tails_of_relation(relation))
        return np.where(member, 1.0, self.epsilon)


# ------------------------------------------------------------ score stores


class DenseScoreStore:
    """Raw scores as a full |R| x |E| x |E| float32 tensor."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError(f"expected (relations, entities, entities), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("raw scores must be finite")
        self.values = values

    @property
    def num_relations(self) -> int:
        return self.values.shape[0]

    @property
    def num_entities(self) -> int:
        return self.values.shape[1]

    def relation_block(self, relation: int) -> tuple[np.ndarray, np.ndarray]:
        block = self.values[relation].astype(np.float64)
        return block, np.zeros(self.num_entities, dtype=bool)

    def gather(self, relation: int, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        block = self.values[relation][np.ix_(rows, cols)].astype(np.float64)
        return block, np.zeros(rows.shape[0], dtype=bool)

    def pair_lookup(self, relation: int, heads: np.ndarray, tails: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        vals = self.values[relation][heads, tails].astype(np.float64)
        return vals, np.zeros(heads.shape[0], dtype=bool)

    def lookup(self, relation: int, head: int, tail: int) -> tuple[float, bool]:
        return float(self.values[relation, head, tail]), False


class SparseScoreStore:
    """Top-k-per-row scores: stored (column, value) pairs per (relation,
    head) row plus a per-row floor for the unstored tail mass.  A NaN floor
    marks the row as missing entirely."""

    def __init__(
        self,
        num_relations: int,
        num_entities: int,
        indptr: np.ndarray,
        cols: np.ndarray,
        vals: np.ndarray,
        floors: np.ndarray,
    ):
        self.nr = int(num_relations)
        self.ne = int(num_entities)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.uint32)
        self.vals = np.asarray(vals, dtype=np.float32)
        self.floors = np.asarray(floors, dtype=np.float32)
        if self.indptr.shape != (self.nr * self.ne + 1,):
            raise ValueError("indptr length must be relations*entities + 1")
        if self.floors.shape != (self.nr, self.ne):
            raise ValueError("floors must be (relations, entities)")
        if self.cols.shape != self.vals.shape:
            raise ValueError("cols and vals must align")
        if not np.all(np.isfinite(self.vals)):
            raise ValueError("raw scores must be finite")
        # floors: finite, or NaN for a missing row
        bad = ~np.isfinite(self.floors) & ~np.isnan(self.floors)
        if np.any(bad):
            raise ValueError("floors must be finite or NaN")

    @property
    def num_relations(self) -> int:
        return self.nr

    @property
    def num_entities(self) -> int:
        return self.ne

    @classmethod
    def from_dense(cls, values: np.ndarray, k: int) -> "SparseScoreStore":
        """Keep the k largest scores per (relation, head) row; the floor is
        the largest score left out (row minimum when nothing is)."""
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError(f"expected (relations, entities, entities), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("raw scores must be finite")
        if k < 1:
            raise ValueError("k must be at least 1")
        nr, ne, _ = values.shape
        k = min(k, ne)
        indptr = [0]
        all_cols: list[np.ndarray] = []
        all_vals: list[np.ndarray] = []
        floors = np.empty((nr, ne), dtype=np.float32)
        for r in range(nr):
            for a in range(ne):
                row = values[r, a]
                if k >= ne:
                    keep = np.arange(ne)
                    floors[r, a] = row.min()
                else:
                    keep = np.argpartition(row, ne - k)[ne - k:]
                    keep.sort()
                    left_out = np.delete(row, keep)
                    floors[r, a] = left_out.max()
                all_cols.append(keep.astype(np.uint32))
                all_vals.append(row[keep])
                indptr.append(indptr[-1] + keep.shape[0])
        return cls(
            nr,
            ne,
            np.asarray(indptr),
            np.concatenate(all_cols) if all_cols else np.zeros(0, np.uint32),
            np.concatenate(all_vals) if all_vals else np.zeros(0, np.float32),
            floors,
        )

    def _row_slice(self, relation: int, head: int) -> tuple[np.ndarray, np.ndarray]:
        at = relation * self.ne + head
        lo, hi = self.indptr[at], self.indptr[at + 1]
        return self.cols[lo:hi], self.vals[lo:hi]

    def row_missing(self, relation: int, head: int) -> bool:
        return bool(np.isnan(self.floors[relation, head]))

    def relation_block(self, relation: int) -> tuple[np.ndarray, np.ndarray]:
        block = np.empty((self.ne, self.ne), dtype=np.float64)
        missing = np.zeros(self.ne, dtype=bool)
        for a in range(self.ne):
            if self.row_missing(relation, a):
                missing[a] = True
                block[a] = 0.0
                continue
            block[a] = self.floors[relation, a]
            cols, vals = self._row_slice(relation, a)
            block[a, cols] = vals
        return block, missing

    def gather(self, relation: int, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out = np.empty((rows.shape[0], cols.shape[0]), dtype=np.float64)
        missing = np.zeros(rows.shape[0], dtype=bool)
        for i, a in enumerate(rows):
            if self.row_missing(relation, int(a)):
                missing[i] = True
                out[i] = 0.0
                continue
            out[i] = self.floors[relation, a]
            row_cols, row_vals = self._row_slice(relation, int(a))
            if row_cols.shape[0] and cols.shape[0]:
                at = np.searchsorted(row_cols, cols)
                at = np.minimum(at, row_cols.shape[0] - 1)
                hit = row_cols[at] == cols
                out[i, hit] = row_vals[at[hit]]
        return out, missing

    def pair_lookup(self, relation: int, heads: np.ndarray, tails: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        vals = np.empty(heads.shape[0], dtype=np.float64)
        missing = np.zeros(heads.shape[0], dtype=bool)
        for i, (a, b) in enumerate(zip(heads, tails)):
            vals[i], missing[i] = self.lookup(relation, int(a), int(b))
        return vals, missing

    def lookup(self, relation: int, head: int, tail: int) -> tuple[float, bool]:
        if self.row_missing(relation, head):
            return 0.0, True
        row_cols, row_vals = self._row_slice(relation, head)
        at = np.searchsorted(row_cols, tail)
        if at < row_cols.shape[0] and row_cols[at] == tail:
            return float(row_vals[at]), False
        return float(self.floors[relation, head]), False


TruthStore = Union[DenseScoreStore, SparseScoreStore]


# ------------------------------------------------------- calibrated backend


class CalibratedProvider(TruthValueProvider):
    """Truths from raw scores via cached log-normalizers.

    The cache S has one entry per (entity, relation): the log-sum-exp of
    the row's scores over observed tails when the row has any, else over
    all entities.  truth() is then a gather plus one exp; observed triples
    are forced to exactly 1 afterwards.  Missing sparse rows return
    `missing_value` and bump the `missing_score_rows` counter.
    """

    def __init__(
        self,
        store: TruthStore,
        graph: KnowledgeGraph,
        scaling: str = "log_scale",
        missing_value: float = 0.0,
        relation_tail_table: np.ndarray | None = None,
        _cache: tuple[np.ndarray, np.ndarray] | None = None,
    ):
        super().__init__(graph)
        if scaling not in SCALING_MODES:
            raise ValueError(f"scaling must be one of {SCALING_MODES}, got {scaling!r}")
        if not 0.0 <= missing_value <= 1.0:
            raise ValueError(f"missing_value must lie in [0, 1], got {missing_value!r}")
        if store.num_entities != graph.num_entities or store.num_relations != graph.num_relations:
            raise ScoreFileError(
                f"score store is {store.num_relations} x {store.num_entities}^2 but the graph "
                f"needs {graph.num_relations} x {graph.num_entities}^2 (reverse relations included)"
            )
        self.store = store
        self.scaling = scaling
        self.missing_value = float(missing_value)
        self._adjacency = _AdjacencyCache(graph)
        if relation_tail_table is not None:
            relation_tail_table = np.asarray(relation_tail_table, dtype=np.float64)
            if relation_tail_table.shape != (graph.num_relations, graph.num_entities):
                raise ScoreFileError(
                    f"relation-tail table shape {relation_tail_table.shape} does not match "
                    f"({graph.num_relations}, {graph.num_entities})"
                )
            relation_tail_table = np.clip(relation_tail_table, 0.0, 1.0)
        self.relation_tail_table = relation_tail_table
        if _cache is None:
            self._s_cache, self._obs_counts = self._build_cache()
        else:
            self._s_cache, self._obs_counts = _cache
        self._missing_rows = 0
        self._telemetry_lock = threading.Lock()

    # cache construction -------------------------------------------------

    def _build_cache(self) -> tuple[np.ndarray, np.ndarray]:
        n, nr = self.num_entities, self.num_relations
        s_cache = np.zeros((n, nr), dtype=np.float64)
        counts = np.zeros((n, nr), dtype=np.int64)
        for r in range(nr):
            block, missing = self.store.relation_block(r)
            observed = self._adjacency.csr(r).toarray() > 0.0
            counts[:, r] = observed.sum(axis=1)
            s_all = logsumexp(block, axis=1)
            masked = np.where(observed, block, -np.inf)
            with np.errstate(divide="ignore"):
                s_obs = logsumexp(masked, axis=1)
            s = np.where(counts[:, r] > 0, s_obs, s_all)
            s[missing] = 0.0
            s_cache[:, r] = s
        return s_cache, counts

    @property
    def missing_score_rows(self) -> int:
        """How many lookups hit a row absent from the sparse store."""
        with self._telemetry_lock:
            return self._missing_rows

    def _flag_missing(self, count: int) -> None:
        if count:
            with self._telemetry_lock:
                self._missing_rows += int(count)

    # calibration math ----------------------------------------------------

    def _calibrate(self, raw: np.ndarray, heads: np.ndarray, relation: int) -> np.ndarray:
        """raw scores (rows aligned with `heads`) -> clamped truths."""
        z = raw - self._s_cache[heads, relation].reshape(-1, *([1] * (raw.ndim - 1)))
        if self.scaling == "ratio_of_sums":
            n_obs = np.maximum(self._obs_counts[heads, relation], 1).astype(np.float64)
            z = z + np.log(n_obs).reshape(-1, *([1] * (raw.ndim - 1)))
        return np.exp(np.minimum(z, 0.0))

    def truth(self, relation: int, head: int, tail: int) -> float:
        if self._graph.has_triple(head, relation, tail):
            return 1.0
        raw, missing = self.store.lookup(relation, head, tail)
        if missing:
            self._flag_missing(1)
            return self.missing_value
        value = self._calibrate(np.array([raw]), np.array([head]), relation)
        return float(value[0])

    def truth_matrix(
        self, relation: int, rows: np.ndarray, cols: np.ndarray, negated: bool = False
    ) -> ScoreMatrix:
        rows = _as_id_array(rows, "rows")
        cols = _as_id_array(cols, "cols")
        if rows.size == 0 or cols.size == 0:
            values = np.zeros((rows.size, cols.size))
            return ScoreMatrix(rows, cols, values)
        raw, missing = self.store.gather(relation, rows, cols)
        values = self._calibrate(raw, rows, relation)
        if np.any(missing):
            self._flag_missing(int(missing.sum()))
            values[missing] = self.missing_value
        observed = self._adjacency.block(relation, rows, cols)
        values[observed] = 1.0
        if negated:
            values = 1.0 - values
        return ScoreMatrix(rows, cols, values)

    def truth_pairs(self, relation: int, heads: np.ndarray, tails: np.ndarray) -> np.ndarray:
        heads = _as_id_array(heads, "heads")
        tails = _as_id_array(tails, "tails")
        if heads.shape != tails.shape:
            raise ValueError("heads and tails must align")
        if heads.size == 0:
            return np.zeros(0)
        raw, missing = self.store.pair_lookup(relation, heads, tails)
        z = raw - self._s_cache[heads, relation]
        if self.scaling == "ratio_of_sums":
            z = z + np.log(np.maximum(self._obs_counts[heads, relation], 1).astype(np.float64))
        values = np.exp(np.minimum(z, 0.0))
        if np.any(missing):
            self._flag_missing(int(missing.sum()))
            values[missing] = self.missing_value
        observed = self._adjacency.pairs(relation, heads, tails)
        values[observed] = 1.0
        return values

    def relation_tail(self, relation: int, tail: int) -> float:
        if self.relation_tail_table is not None:
            return float(self.relation_tail_table[relation, tail])
        tails = self._graph.tails_of_relation(relation)
        at = np.searchsorted(tails, tail)
        return 1.0 if at < tails.shape[0] and tails[at] == tail else 0.0

    def relation_tail_vector(self, relation: int, tails: np.ndarray) -> np.ndarray:
        tails = _as_id_array(tails, "tails")
        if self.relation_tail_table is not None:
            return self.relation_tail_table[relation, tails].copy()
        member = np.isin(tails, self._graph.tails_of_relation(relation))
        return member.astype(np.float64)

    # cache round-trips ----------------------------------------------------

    def save_cache(self, path: str | Path) -> None:
        """Persist the normalizer cache so later runs skip the build."""
        np.savez(
            path,
            s_cache=self._s_cache,
            obs_counts=self._obs_counts,
            num_entities=self.num_entities,
            num_relations=self.num_relations,
        )

    @classmethod
    def from_cache(
        cls,
        store: TruthStore,
        graph: KnowledgeGraph,
        cache_path: str | Path,
        scaling: str = "log_scale",
        missing_value: float = 0.0,
        relation_tail_table: np.ndarray | None = None,
    ) -> "CalibratedProvider":
        with np.load(cache_path) as data:
            if (
                int(data["num_entities"]) != graph.num_entities
                or int(data["num_relations"]) != graph.num_relations
            ):
                raise ScoreFileError("cached normalizers were built for a different graph")
            cache = (data["s_cache"].copy(), data["obs_counts"].copy())
        return cls(
            store,
            graph,
            scaling=scaling,
            missing_value=missing_value,
            relation_tail_table=relation_tail_table,
            _cache=cache,
        )


def build_cache(
    raw_scores: TruthStore | np.ndarray | str | Path,
    graph: KnowledgeGraph,
    scaling: str = "log_scale",
    missing_value: float = 0.0,
    relation_tail_table: np.ndarray | None = None,
) -> CalibratedProvider:
    """Build a calibrated provider from raw scores.

    `raw_scores` may be a store, a (relations, entities, entities) array,
    or a path to a score file.
    """
    if isinstance(raw_scores, (str, Path)):
        raw_scores = read_score_file(raw_scores, graph)
    elif isinstance(raw_scores, np.ndarray):
        raw_scores = DenseScoreStore(raw_scores)
    return CalibratedProvider(
        raw_scores,
        graph,
        scaling=scaling,
        missing_value=missing_value,
        relation_tail_table=relation_tail_table,
    )


# -------------------------------------------------------------- file format
#
# Little-endian layout, shared header:
#   magic "NLIS" | version u32 | num_entities u64 | num_relations u64 |
#   storage flag u32 (0 = dense, 1 = sparse top-k)
# Dense score payload: num_relations blocks of num_entities^2 f32.
# Sparse payload, per (relation, head) row:
#   k u32 | k x col u32 | k x score f32 | floor f32   (k=0 with NaN floor
#   marks the row missing).
# Relation-tail tables use the same header with a dense flag and one
# num_relations x num_entities f32 block.

_MAGIC = b"NLIS"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQI")
_FLAG_DENSE = 0
_FLAG_SPARSE = 1


def _write_header(fh: BinaryIO, num_entities: int, num_relations: int, flag: int) -> None:
    fh.write(_HEADER.pack(_MAGIC, _VERSION, num_entities, num_relations, flag))


def _read_header(fh: BinaryIO, path) -> tuple[int, int, int]:
    blob = fh.read(_HEADER.size)
    if len(blob) != _HEADER.size:
        raise ScoreFileError(f"{path}: truncated header")
    magic, version, n_ent, n_rel, flag = _HEADER.unpack(blob)
    if magic != _MAGIC:
        raise ScoreFileError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ScoreFileError(f"{path}: unsupported version {version}")
    if flag not in (_FLAG_DENSE, _FLAG_SPARSE):
        raise ScoreFileError(f"{path}: unknown storage flag {flag}")
    return int(n_ent), int(n_rel), int(flag)


def _read_exact(fh: BinaryIO, dtype: str, count: int, path) -> np.ndarray:
    out = np.frombuffer(fh.read(count * np.dtype(dtype).itemsize), dtype=dtype)
    if out.shape[0] != count:
        raise ScoreFileError(f"{path}: truncated payload")
    return out


def write_score_file(path: str | Path, store: TruthStore) -> None:
    if not isinstance(store, (DenseScoreStore, SparseScoreStore)):
        raise TypeError(f"unsupported store type {type(store).__name__}")
    with open(path, "wb") as fh:
        if isinstance(store, DenseScoreStore):
            _write_header(fh, store.num_entities, store.num_relations, _FLAG_DENSE)
            for r in range(store.num_relations):
                fh.write(store.values[r].astype("<f4").tobytes())
            return
        _write_header(fh, store.num_entities, store.num_relations, _FLAG_SPARSE)
        for r in range(store.num_relations):
            for a in range(store.num_entities):
                cols, vals = store._row_slice(r, a)
                fh.write(struct.pack("<I", cols.shape[0]))
                fh.write(cols.astype("<u4").tobytes())
                fh.write(vals.astype("<f4").tobytes())
                fh.write(struct.pack("<f", float(store.floors[r, a])))


def read_score_file(path: str | Path, graph: KnowledgeGraph | None = None) -> TruthStore:
    """Load a score file; with `graph` given, validate dimensions against it
    (reverse relations count, so stores carry 2x the base relation count)."""
    with open(path, "rb") as fh:
        n_ent, n_rel, flag = _read_header(fh, path)
        if graph is not None and (
            n_ent != graph.num_entities or n_rel != graph.num_relations
        ):
            raise ScoreFileError(
                f"{path}: file is {n_rel} x {n_ent}^2 but the graph needs "
                f"{graph.num_relations} x {graph.num_entities}^2"
            )
        if flag == _FLAG_DENSE:
            raw = _read_exact(fh, "<f4", n_rel * n_ent * n_ent, path)
            if fh.read(1):
                raise ScoreFileError(f"{path}: trailing bytes after dense payload")
            return DenseScoreStore(raw.reshape(n_rel, n_ent, n_ent))
        indptr = [0]
        all_cols: list[np.ndarray] = []
        all_vals: list[np.ndarray] = []
        floors = np.empty((n_rel, n_ent), dtype=np.float32)
        for r in range(n_rel):
            for a in range(n_ent):
                k = int(_read_exact(fh, "<u4", 1, path)[0])
                if k > n_ent:
                    raise ScoreFileError(f"{path}: row ({r}, {a}) claims {k} > {n_ent} entries")
                cols = _read_exact(fh, "<u4", k, path)
                vals = _read_exact(fh, "<f4", k, path)
                if k and (np.any(cols >= n_ent) or np.any(np.diff(cols.astype(np.int64)) <= 0)):
                    raise ScoreFileError(f"{path}: row ({r}, {a}) columns invalid or unsorted")
                floors[r, a] = _read_exact(fh, "<f4", 1, path)[0]
                all_cols.append(cols)
                all_vals.append(vals)
                indptr.append(indptr[-1] + k)
        if fh.read(1):
            raise ScoreFileError(f"{path}: trailing bytes after sparse payload")
        return SparseScoreStore(
            n_rel,
            n_ent,
            np.asarray(indptr),
            np.concatenate(all_cols) if all_cols else np.zeros(0, np.uint32),
            np.concatenate(all_vals) if all_vals else np.zeros(0, np.float32),
            floors,
        )


def write_relation_tail_table(path: str | Path, table: np.ndarray) -> None:
    """Write a num_relations x num_entities f32 relation-tail score table."""
    table = np.asarray(table, dtype=np.float32)
    if table.ndim != 2:
        raise ValueError(f"expected (relations, entities), got shape {table.shape}")
    if not np.all(np.isfinite(table)):
        raise ValueError("relation-tail scores must be finite")
    with open(path, "wb") as fh:
        _write_header(fh, table.shape[1], table.shape[0], _FLAG_DENSE)
        fh.write(table.astype("<f4").tobytes())


def read_relation_tail_table(path: str | Path, graph: KnowledgeGraph | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        n_ent, n_rel, flag = _read_header(fh, path)
        if flag != _FLAG_DENSE:
            raise ScoreFileError(f"{path}: relation-tail tables must use the dense flag")
        if graph is not None and (
            n_ent != graph.num_entities or n_rel != graph.num_relations
        ):
            raise ScoreFileError(
                f"{path}: table is {n_rel} x {n_ent} but the graph needs "
                f"{graph.num_relations} x {graph.num_entities}"
            )
        raw = _read_exact(fh, "<f4", n_rel * n_ent, path)
        if fh.read(1):
            raise ScoreFileError(f"{path}: trailing bytes after table payload")
        return raw.reshape(n_rel, n_ent).astype(np.float64)
