"""Exact reference answerers.

`brute_force` enumerates every existential assignment for every candidate
answer and keeps the fuzzy maximum: exponential, but exact for any conjunct
shape, so it anchors correctness checks for the search engine.
`traversal_answers` solves the Boolean (closed-world) problem directly on
an observed graph by backtracking over adjacency lists.

The fuzzy connectives here are written out locally on purpose: the oracle
must not share kernels with the code it is checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .algebra import TNormKind
from .formula import (
    FREE_VARIABLE_NAME,
    Constant,
    EFO1Formula,
    QueryEdge,
    QueryGraph,
    Term,
    Variable,
)
from .kg import KnowledgeGraph
from .providers import TruthValueProvider

__all__ = [
    "BudgetExceededError",
    "OracleResult",
    "brute_force",
    "brute_force_formula",
    "objective_at",
    "traversal_answers",
]

# elements per candidate-block matrix during enumeration, bounds memory
_BLOCK_ELEMENTS = 4_000_000


class BudgetExceededError(RuntimeError):
    """The existential assignment space is too large to enumerate."""

    def __init__(self, required: float, budget: float):
        super().__init__(
            f"brute force needs {required:.3g} assignments per candidate, "
            f"budget is {budget:.3g}"
        )
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class OracleResult:
    """Exact optima over all entities.

    `optima[i]` is the best objective value with the free variable bound to
    entity i; `assignments[name][i]` is an existential witness achieving it.
    """

    free_domain: np.ndarray
    optima: np.ndarray
    assignments: dict[str, np.ndarray]


def _fold(kind: TNormKind, a, b):
    if kind is TNormKind.GODEL:
        return np.minimum(a, b)
    if kind is TNormKind.PRODUCT:
        return a * b
    return np.maximum(a + b - 1.0, 0.0)


def _join(kind: TNormKind, a, b):
    if kind is TNormKind.GODEL:
        return np.maximum(a, b)
    if kind is TNormKind.PRODUCT:
        return a + b - a * b
    return np.minimum(a + b, 1.0)


def _term_ids(term: Term, y_ids: np.ndarray, exist_ids: Mapping[str, np.ndarray], width: int):
    """Resolve a term to per-(candidate, assignment) entity ids, shaped to
    broadcast against a (block, width) objective."""
    if isinstance(term, Constant):
        return np.full((1, 1), term.entity, dtype=np.int64)
    if term.name == FREE_VARIABLE_NAME:
        return y_ids[:, None]
    return exist_ids[term.name][None, :]


def brute_force(
    q: QueryGraph,
    provider: TruthValueProvider,
    kind: TNormKind | str = TNormKind.PRODUCT,
    budget: float = 10_000_000,
) -> OracleResult:
    """Exact fuzzy optimum of one conjunct for every candidate answer.

    Enumerates the full cross product of existential assignments (mixed
    radix over the entity set), so it requires |E|**num_existentials to be
    within `budget`.
    """
    kind = TNormKind.coerce(kind)
    if not q.has_free_variable:
        raise ValueError("conjunct has no free variable")
    n = provider.num_entities
    exist_names = sorted(q.existential_names)
    width = float(n) ** len(exist_names)
    if width > budget:
        raise BudgetExceededError(width, budget)
    width = int(width)
    # mixed-radix decode: column j of the assignment space, one id row per var
    exist_ids: dict[str, np.ndarray] = {}
    if exist_names:
        grid = np.unravel_index(np.arange(width), (n,) * len(exist_names))
        for name, ids in zip(exist_names, grid):
            exist_ids[name] = ids.astype(np.int64)
    all_ids = np.arange(n, dtype=np.int64)
    block = max(1, min(n, _BLOCK_ELEMENTS // width))
    optima = np.empty(n)
    best_flat = np.empty(n, dtype=np.int64)
    for start in range(0, n, block):
        y_ids = all_ids[start : start + block]
        obj = np.full((y_ids.shape[0], width), float(q.scalar_prefix))
        for edge in q.edges:
            heads = _term_ids(edge.head, y_ids, exist_ids, width)
            tails = _term_ids(edge.tail, y_ids, exist_ids, width)
            h, t = np.broadcast_arrays(heads, tails)
            vals = provider.truth_pairs(edge.relation, h.ravel(), t.ravel()).reshape(h.shape)
            if edge.negated:
                vals = 1.0 - vals
            obj = _fold(kind, obj, vals)
        flat = np.argmax(obj, axis=1)
        best_flat[start : start + block] = flat
        optima[start : start + block] = obj[np.arange(y_ids.shape[0]), flat]
    assignments = {name: ids[best_flat] for name, ids in exist_ids.items()}
    return OracleResult(free_domain=all_ids, optima=optima, assignments=assignments)


def brute_force_formula(
    f: EFO1Formula,
    provider: TruthValueProvider,
    kind: TNormKind | str = TNormKind.PRODUCT,
    budget: float = 10_000_000,
) -> np.ndarray:
    """Exact scores of a DNF formula over all entities: per-conjunct optima
    combined by t-conorm."""
    kind = TNormKind.coerce(kind)
    combined: np.ndarray | None = None
    for conjunct in f:
        optima = brute_force(conjunct, provider, kind, budget).optima
        combined = optima if combined is None else _join(kind, combined, optima)
    return combined


def objective_at(
    q: QueryGraph,
    assignment: Mapping[str, int],
    provider: TruthValueProvider,
    kind: TNormKind | str = TNormKind.PRODUCT,
) -> float:
    """Conjunct objective at one full variable assignment."""
    kind = TNormKind.coerce(kind)
    value = float(q.scalar_prefix)
    for edge in q.edges:
        ends = []
        for term in (edge.head, edge.tail):
            if isinstance(term, Constant):
                ends.append(term.entity)
            elif term.name in assignment:
                ends.append(int(assignment[term.name]))
            else:
                raise ValueError(f"assignment is missing variable {term.name!r}")
        truth = provider.truth(edge.relation, ends[0], ends[1])
        if edge.negated:
            truth = 1.0 - truth
        value = float(_fold(kind, value, truth))
    return value


# ----------------------------------------------- Boolean traversal oracle


def _known(term: Term, assignment: dict[str, int]) -> int | None:
    if isinstance(term, Constant):
        return term.entity
    return assignment.get(term.name)


def _edges_ok_around(
    name: str, edges: list[QueryEdge], assignment: dict[str, int], g: KnowledgeGraph
) -> bool:
    """Closed-world check of every fully grounded edge touching `name`."""
    for edge in edges:
        if not edge.touches(name):
            continue
        head = _known(edge.head, assignment)
        tail = _known(edge.tail, assignment)
        if head is None or tail is None:
            continue
        if g.has_triple(head, edge.relation, tail) == edge.negated:
            return False
    return True


def _candidates(
    name: str, edges: list[QueryEdge], assignment: dict[str, int], g: KnowledgeGraph
) -> list[int] | None:
    """Values of `name` consistent with its positive edges whose other
    endpoint is already known; None when no such edge constrains it."""
    found: set[int] | None = None
    for edge in edges:
        if edge.negated or not edge.touches(name):
            continue
        if edge.is_self_loop():
            heads, tails = g.relation_pairs(edge.relation)
            current = set(heads[heads == tails].tolist())
        elif isinstance(edge.head, Variable) and edge.head.name == name:
            tail = _known(edge.tail, assignment)
            if tail is None:
                continue
            current = set(g.observed_tails(tail, KnowledgeGraph.reverse(edge.relation)).tolist())
        else:
            head = _known(edge.head, assignment)
            if head is None:
                continue
            current = set(g.observed_tails(head, edge.relation).tolist())
        found = current if found is None else found & current
        if not found:
            return []
    if found is None:
        return None
    return sorted(found)


def _conjunct_answers(q: QueryGraph, g: KnowledgeGraph) -> set[int]:
    edges = list(q.edges)
    names = [FREE_VARIABLE_NAME] + sorted(q.existential_names)
    answers: set[int] = set()
    assignment: dict[str, int] = {}

    def explore() -> bool:
        pending = [v for v in names if v not in assignment]
        if not pending:
            answers.add(assignment[FREE_VARIABLE_NAME])
            return True
        scored = []
        for v in pending:
            cands = _candidates(v, edges, assignment, g)
            size = g.num_entities if cands is None else len(cands)
            scored.append((size, v, cands))
        size, name, cands = min(scored, key=lambda item: (item[0], item[1]))
        if cands is None:
            cands = range(g.num_entities)
        # once the free variable is bound, one completion settles it
        y_known = FREE_VARIABLE_NAME in assignment
        found = False
        for value in cands:
            assignment[name] = value
            ok = _edges_ok_around(name, edges, assignment, g) and explore()
            del assignment[name]
            if ok:
                found = True
                if y_known:
                    return True
        return found

    explore()
    return answers


def traversal_answers(f: EFO1Formula, g: KnowledgeGraph) -> set[int]:
    """Exact Boolean answers of a formula on an observed graph: entities
    with a satisfying existential assignment in some disjunct, where an
    atom is true iff its triple is present (closed world)."""
    answers: set[int] = set()
    for q in f:
        if q.scalar_prefix <= 0.0:
            continue
        answers |= _conjunct_answers(q, g)
    return answers
