"""Approximate query answering over reduced domains.

Pipeline per conjunct: fold constant-incident edges into per-variable
fuzzy vectors, eliminate leaf variables exactly by max-reduction, then
assign any remaining cyclic-core variables greedily per free-variable
candidate (closest to the free variable first).  Every edge truth value
and every variable's fuzzy membership is folded into a candidate's score
exactly once, so each reported score is the query objective evaluated at
the reported witness assignment: a lower bound that is exact whenever the
conjunct is acyclic.

Disjuncts share one free-variable domain and combine by t-conorm.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .algebra import TNormKind, binary_tconorm, binary_tnorm
from .formula import (
    FREE_VARIABLE_NAME,
    Constant,
    EFO1Formula,
    QueryEdge,
    QueryGraph,
    Variable,
    find_leaves,
    order_by_distance,
)
from .indices import DomainAssignment, GlobalScorer, cut_domain, local_indices, top_k_by_score
from .providers import TruthValueProvider

__all__ = [
    "SearchConfig",
    "SearchTelemetry",
    "SearchState",
    "AnswerRanking",
    "remove_const_node",
    "remove_leaf_node",
    "local_optimize",
    "answer_conjunct",
    "answer_formula",
]


@dataclass
class SearchConfig:
    """Knobs for one engine run; None domain sizes mean the full entity set."""

    tnorm: TNormKind | str = TNormKind.PRODUCT
    k_existential: int | None = None
    k_free: int | None = None
    block_size: int = 512
    record_witnesses: bool = False
    include_negated_in_indices: bool = False

    def __post_init__(self) -> None:
        self.tnorm = TNormKind.coerce(self.tnorm)
        if self.block_size < 1:
            raise ValueError("block_size must be at least 1")
        for k in (self.k_existential, self.k_free):
            if k is not None and k < 1:
                raise ValueError("domain sizes must be at least 1")


@dataclass
class SearchTelemetry:
    """Per-step timings and counters, accumulated across queries."""

    leaf_step_seconds: list[float] = field(default_factory=list)
    local_step_seconds: list[float] = field(default_factory=list)
    const_folds: int = 0
    isolated_folds: int = 0

    @property
    def leaf_steps(self) -> int:
        return len(self.leaf_step_seconds)

    @property
    def local_steps(self) -> int:
        return len(self.local_step_seconds)


@dataclass(frozen=True)
class AnswerRanking:
    """Scores over the free variable's candidate domain.

    `domain` is ascending entity ids; `witnesses`, when recorded, maps each
    existential variable to its chosen entity per candidate (aligned with
    `domain`).
    """

    domain: np.ndarray
    scores: np.ndarray
    num_entities: int
    witnesses: dict[str, np.ndarray] | None = None

    def __post_init__(self) -> None:
        domain = np.asarray(self.domain, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if domain.ndim != 1 or scores.shape != domain.shape:
            raise ValueError("scores must align with the candidate domain")
        if domain.size and (domain.min() < 0 or domain.max() >= self.num_entities):
            raise ValueError("domain ids out of range")
        if np.any(np.diff(domain) <= 0):
            raise ValueError("domain must be strictly ascending")
        if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "scores", scores)

    def dense_scores(self) -> np.ndarray:
        """Scores over all entities; candidates outside the domain get 0."""
        out = np.zeros(self.num_entities)
        out[self.domain] = self.scores
        return out

    def top(self, n: int = 10) -> list[tuple[int, float]]:
        """Best n (entity id, score) pairs, score desc then id asc."""
        order = np.lexsort((self.domain, -self.scores))[:n]
        return [(int(self.domain[i]), float(self.scores[i])) for i in order]

    def witness_for(self, entity: int) -> dict[str, int]:
        if self.witnesses is None:
            raise ValueError("witnesses were not recorded for this ranking")
        at = np.searchsorted(self.domain, entity)
        if at >= self.domain.shape[0] or self.domain[at] != entity:
            raise KeyError(f"entity {entity} is not in the candidate domain")
        return {name: int(ids[at]) for name, ids in self.witnesses.items()}


class SearchState:
    """Mutable per-conjunct search bookkeeping.

    Holds the live edge list, each variable's domain (sorted ascending for
    the kernels) and fuzzy vector, the per-candidate running score, and the
    records needed to rebuild witness assignments.
    """

    def __init__(
        self,
        q: QueryGraph,
        domains: DomainAssignment,
        provider: TruthValueProvider,
        kind: TNormKind | str = TNormKind.PRODUCT,
        block_size: int = 512,
        record_witnesses: bool = False,
    ):
        if not q.has_free_variable:
            raise ValueError("conjunct has no free variable")
        self.kind = TNormKind.coerce(kind)
        self.tnorm = binary_tnorm(self.kind)
        self.provider = provider
        self.block_size = int(block_size)
        self.record_witnesses = bool(record_witnesses)
        self.scalar_prefix = q.scalar_prefix
        self.edges: list[QueryEdge] = list(q.edges)
        self.domains: dict[str, np.ndarray] = {}
        self.mu: dict[str, np.ndarray] = {}
        for name in q.variable_names:
            dom = np.sort(np.asarray(domains.domain(name), dtype=np.int64))
            self.domains[name] = dom
            self.mu[name] = np.ones(dom.shape[0])
        self.free_domain = self.domains[FREE_VARIABLE_NAME]
        n = self.free_domain.shape[0]
        self.running = np.ones(n)
        # existentials still to be eliminated; shrinks as the pipeline runs
        self.active: set[str] = set(q.variable_names) - {FREE_VARIABLE_NAME}
        # per-candidate chosen index into the variable's domain (local phase)
        self.assigned_idx: dict[str, np.ndarray] = {}
        # (leaf, neighbor, argmax backpointers per neighbor index)
        self.leaf_records: list[tuple[str, str, np.ndarray]] = []
        # (variable, chosen domain index) for variables isolated by folding
        self.isolated_records: list[tuple[str, int]] = []

    # helpers --------------------------------------------------------------

    def edges_of(self, name: str) -> list[QueryEdge]:
        return [e for e in self.edges if e.touches(name)]

    def variable_neighbors(self, name: str) -> set[str]:
        out: set[str] = set()
        for e in self.edges_of(name):
            out.update(n for n in e.variable_names() if n != name)
        return out

    def live_graph(self) -> QueryGraph:
        return QueryGraph(self.edges, 1.0)

    def oriented_values(self, edge: QueryEdge, rows: str, cols: str) -> np.ndarray:
        """Edge truth values as a (|D_rows|, |D_cols|) block, evaluated in
        the atom's literal direction."""
        head = edge.head.name if isinstance(edge.head, Variable) else None
        if head == rows:
            m = self.provider.truth_matrix(
                edge.relation, self.domains[rows], self.domains[cols], edge.negated
            )
            return m.values
        m = self.provider.truth_matrix(
            edge.relation, self.domains[cols], self.domains[rows], edge.negated
        )
        return m.values.T


def _other_endpoint(edge: QueryEdge, name: str) -> str:
    names = edge.variable_names()
    if len(names) != 2:
        raise ValueError("edge does not connect two variables")
    return names[1] if names[0] == name else names[0]


def remove_const_node(state: SearchState, telemetry: SearchTelemetry | None = None) -> SearchState:
    """Fold constant-incident edges (and variable self-loops) into fuzzy
    vectors, then fold existentials left without edges into the running
    score as scalar maxima."""
    kept: list[QueryEdge] = []
    for edge in state.edges:
        if edge.is_self_loop():
            name = edge.head.name
            dom = state.domains[name]
            vals = state.provider.truth_pairs(edge.relation, dom, dom)
            if edge.negated:
                vals = 1.0 - vals
            state.mu[name] = state.tnorm(state.mu[name], vals)
            if telemetry:
                telemetry.const_folds += 1
            continue
        if isinstance(edge.head, Constant):
            name = edge.tail.name
            block = state.provider.truth_matrix(
                edge.relation,
                np.asarray([edge.head.entity], dtype=np.int64),
                state.domains[name],
                edge.negated,
            )
            state.mu[name] = state.tnorm(state.mu[name], block.values[0])
            if telemetry:
                telemetry.const_folds += 1
            continue
        if isinstance(edge.tail, Constant):
            name = edge.head.name
            block = state.provider.truth_matrix(
                edge.relation,
                state.domains[name],
                np.asarray([edge.tail.entity], dtype=np.int64),
                edge.negated,
            )
            state.mu[name] = state.tnorm(state.mu[name], block.values[:, 0])
            if telemetry:
                telemetry.const_folds += 1
            continue
        kept.append(edge)
    state.edges = kept
    # A variable can lose all its edges here (it was tied to the rest of
    # the query only through constants); its best membership is a scalar
    # factor of every candidate's score.
    for name in sorted(state.active):
        if not state.edges_of(name):
            best = int(np.argmax(state.mu[name]))
            state.running = state.tnorm(state.running, state.mu[name][best])
            state.isolated_records.append((name, best))
            state.active.discard(name)
            if telemetry:
                telemetry.isolated_folds += 1
    return state


def remove_leaf_node(name: str, state: SearchState) -> SearchState:
    """Eliminate leaf variable `name` exactly: t-norm its parallel edges
    and membership, max-reduce over its domain into the neighbor's fuzzy
    vector, and record argmax backpointers for witnesses."""
    if name not in state.active:
        raise ValueError(f"{name!r} is not an active existential variable")
    neighbors = state.variable_neighbors(name)
    if len(neighbors) != 1:
        raise ValueError(f"{name!r} is not a leaf (neighbors: {sorted(neighbors)})")
    other = next(iter(neighbors))
    merged: np.ndarray | None = None
    for edge in state.edges_of(name):
        vals = state.oriented_values(edge, name, other)
        merged = vals if merged is None else state.tnorm(merged, vals)
    merged = state.tnorm(merged, state.mu[name][:, None])
    best = merged.max(axis=0)
    state.mu[other] = state.tnorm(state.mu[other], best)
    if state.record_witnesses:
        # axis-0 argmax scans column-wise and costs an order of magnitude
        # more than the max reduction, so only witness runs pay for it
        backpointers = np.argmax(merged, axis=0)
        state.leaf_records.append((name, other, backpointers))
    state.edges = [e for e in state.edges if not e.touches(name)]
    state.active.discard(name)
    return state


def _prepared_edges(state: SearchState, name: str):
    """Classify `name`'s incident edges for the local step.

    Returns (to_free, to_assigned, optimistic) where
      to_free: (edge, values (|D_y|, |D_name|)),
      to_assigned: (edge, other, values (|D_name|, |D_other|)),
      optimistic: per-edge upper-bound vectors over D_name for edges whose
      other endpoint is not assigned yet.
    """
    to_free = []
    to_assigned = []
    optimistic = []
    for edge in state.edges_of(name):
        other = _other_endpoint(edge, name)
        if other == FREE_VARIABLE_NAME:
            to_free.append((edge, state.oriented_values(edge, FREE_VARIABLE_NAME, name)))
        elif other in state.assigned_idx:
            to_assigned.append((edge, other, state.oriented_values(edge, name, other)))
        else:
            vals = state.oriented_values(edge, name, other)
            weighted = state.tnorm(vals, state.mu[other][None, :])
            optimistic.append(weighted.max(axis=1))
    return to_free, to_assigned, optimistic


def local_optimize(name: str, state: SearchState) -> SearchState:
    """Assign `name` per free-variable candidate by maximizing the t-norm
    fold of its membership and incident-edge truths; edges to the free
    variable and to already-assigned variables are instantiated, edges to
    unassigned variables contribute an optimistic (max) factor.

    Instantiated edge truths and the chosen membership fold into the
    candidate's running score; the optimistic factors do not (their edges
    are folded later, at the step that assigns their other endpoint)."""
    if name not in state.active:
        raise ValueError(f"{name!r} is not an active existential variable")
    if not state.edges_of(name):
        raise ValueError(f"{name!r} has no incident edges; folding is the caller's job")
    to_free, to_assigned, optimistic = _prepared_edges(state, name)
    n = state.free_domain.shape[0]
    m = state.domains[name].shape[0]
    chosen = np.empty(n, dtype=np.int64)
    static = state.mu[name].copy()
    for vec in optimistic:
        static = state.tnorm(static, vec)
    for start in range(0, n, state.block_size):
        block = slice(start, min(start + state.block_size, n))
        width = block.stop - block.start
        obj = np.broadcast_to(static, (width, m)).copy()
        for _, vals in to_free:
            obj = state.tnorm(obj, vals[block])
        for _, other, vals in to_assigned:
            obj = state.tnorm(obj, vals[:, state.assigned_idx[other][block]].T)
        best = np.argmax(obj, axis=1)
        chosen[block] = best
        state.running[block] = state.tnorm(state.running[block], state.mu[name][best])
        rows = np.arange(width)
        for _, vals in to_free:
            state.running[block] = state.tnorm(
                state.running[block], vals[block][rows, best]
            )
        for _, other, vals in to_assigned:
            state.running[block] = state.tnorm(
                state.running[block], vals[best, state.assigned_idx[other][block]]
            )
    state.assigned_idx[name] = chosen
    consumed = {id(e) for e, _ in to_free} | {id(e) for e, _, _ in to_assigned}
    state.edges = [e for e in state.edges if id(e) not in consumed]
    state.active.discard(name)
    return state


def _pick_leaf(state: SearchState) -> str | None:
    """Next leaf to eliminate: smallest domain first, then lexicographic."""
    live = state.live_graph() if state.edges else None
    if live is None:
        return None
    candidates = [v for v in find_leaves(live) if v in state.active]
    if not candidates:
        return None
    return min(candidates, key=lambda v: (state.domains[v].shape[0], v))


def _rebuild_witnesses(state: SearchState) -> dict[str, np.ndarray]:
    """Chain backpointers into one chosen entity id per candidate per
    existential variable."""
    n = state.free_domain.shape[0]
    chosen_idx: dict[str, np.ndarray] = {FREE_VARIABLE_NAME: np.arange(n)}
    for name, idx in state.assigned_idx.items():
        chosen_idx[name] = idx
    for name, neighbor, backpointers in reversed(state.leaf_records):
        chosen_idx[name] = backpointers[chosen_idx[neighbor]]
    witnesses: dict[str, np.ndarray] = {}
    for name, idx in chosen_idx.items():
        if name != FREE_VARIABLE_NAME:
            witnesses[name] = state.domains[name][idx]
    for name, best in state.isolated_records:
        witnesses[name] = np.full(n, state.domains[name][best], dtype=np.int64)
    return witnesses


def answer_conjunct(
    q: QueryGraph,
    domains: DomainAssignment,
    provider: TruthValueProvider,
    config: SearchConfig | None = None,
    telemetry: SearchTelemetry | None = None,
) -> AnswerRanking:
    """Run the full elimination pipeline on one conjunct."""
    config = config or SearchConfig()
    state = SearchState(
        q,
        domains,
        provider,
        kind=config.tnorm,
        block_size=config.block_size,
        record_witnesses=config.record_witnesses,
    )
    remove_const_node(state, telemetry)
    while True:
        leaf = _pick_leaf(state)
        if leaf is None:
            break
        tick = time.perf_counter()
        remove_leaf_node(leaf, state)
        if telemetry:
            telemetry.leaf_step_seconds.append(time.perf_counter() - tick)
    if state.active:
        order = [v for v in order_by_distance(state.live_graph()) if v in state.active]
        for name in order:
            tick = time.perf_counter()
            local_optimize(name, state)
            if telemetry:
                telemetry.local_step_seconds.append(time.perf_counter() - tick)
    scores = state.tnorm(state.mu[FREE_VARIABLE_NAME], state.running)
    if state.scalar_prefix != 1.0:
        scores = state.tnorm(scores, np.full(scores.shape, state.scalar_prefix))
    scores = np.clip(scores, 0.0, 1.0)
    witnesses = _rebuild_witnesses(state) if config.record_witnesses else None
    return AnswerRanking(
        domain=state.free_domain,
        scores=scores,
        num_entities=provider.num_entities,
        witnesses=witnesses,
    )


def _shared_free_domain(
    f: EFO1Formula,
    provider: TruthValueProvider,
    config: SearchConfig,
    global_scorer: GlobalScorer | None,
) -> np.ndarray:
    n = provider.num_entities
    k_y = n if config.k_free is None else min(config.k_free, n)
    if global_scorer is not None:
        combined: np.ndarray | None = None
        for conjunct in f:
            scores = np.asarray(
                global_scorer.score_all(conjunct, FREE_VARIABLE_NAME), dtype=np.float64
            )
            if scores.shape != (n,) or not np.all(np.isfinite(scores)):
                raise ValueError("global scorer must return finite scores over all entities")
            combined = scores if combined is None else np.maximum(combined, scores)
        return top_k_by_score(combined, k_y)
    if k_y >= n:
        return np.arange(n, dtype=np.int64)
    return local_indices(
        f,
        FREE_VARIABLE_NAME,
        k_y,
        provider,
        config.tnorm,
        config.include_negated_in_indices,
    )


def answer_formula(
    f: EFO1Formula,
    provider: TruthValueProvider,
    config: SearchConfig | None = None,
    global_scorer: GlobalScorer | None = None,
    telemetry: SearchTelemetry | None = None,
) -> AnswerRanking:
    """Answer a DNF formula: one shared free-variable domain, per-conjunct
    pipelines, t-conorm combination of the per-conjunct scores.

    Witnesses are attached only for single-conjunct formulas (a witness is
    per-conjunct by nature)."""
    config = config or SearchConfig()
    n = provider.num_entities
    k_x = n if config.k_existential is None else min(config.k_existential, n)
    k_y = n if config.k_free is None else min(config.k_free, n)
    free = _shared_free_domain(f, provider, config, global_scorer)
    join = binary_tconorm(config.tnorm)
    combined: np.ndarray | None = None
    witnesses: dict[str, np.ndarray] | None = None
    for conjunct in f:
        domains = cut_domain(
            conjunct,
            k_x,
            k_y,
            provider,
            kind=config.tnorm,
            include_negated=config.include_negated_in_indices,
            free_domain=free,
        )
        ranking = answer_conjunct(conjunct, domains, provider, config, telemetry)
        combined = ranking.scores if combined is None else join(combined, ranking.scores)
        if len(f) == 1:
            witnesses = ranking.witnesses
    return AnswerRanking(
        domain=np.sort(free),
        scores=np.clip(combined, 0.0, 1.0),
        num_entities=n,
        witnesses=witnesses,
    )
