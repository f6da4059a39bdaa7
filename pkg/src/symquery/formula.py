"""Query structures: terms, edges, conjunct multigraphs, and the
disjunctive formulas the search engine consumes, plus the structural
operations (leaf finding, distance ordering, cycle detection) that drive
the elimination pipeline.

A formula is a disjunction of conjuncts.  Each conjunct is a multigraph
whose nodes are constants and variables and whose edges are (possibly
negated) relational atoms; parallel edges between the same node pair are
legal.  The single free variable is canonically named "y".
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

__all__ = [
    "FREE_VARIABLE_NAME",
    "Constant",
    "Variable",
    "Term",
    "QueryEdge",
    "QueryGraph",
    "EFO1Formula",
    "find_leaf",
    "find_leaves",
    "order_by_distance",
    "is_cyclic",
    "swap_free_variable",
    "pretty",
    "DisconnectedQueryError",
]

FREE_VARIABLE_NAME = "y"


class DisconnectedQueryError(ValueError):
    """A conjunct's nodes do not form one connected component."""


@dataclass(frozen=True, slots=True)
class Constant:
    """A grounded entity endpoint."""

    entity: int


@dataclass(frozen=True, slots=True)
class Variable:
    """A variable endpoint; the free variable is the one named "y"."""

    name: str

    @property
    def is_free(self) -> bool:
        return self.name == FREE_VARIABLE_NAME


Term = Union[Constant, Variable]


@dataclass(frozen=True, slots=True)
class QueryEdge:
    """One relational atom; `negated` marks atom-level negation."""

    head: Term
    relation: int
    tail: Term
    negated: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.head, Constant) and isinstance(self.tail, Constant):
            raise ValueError("constant-constant atoms must be folded before building edges")

    def variable_names(self) -> tuple[str, ...]:
        names = []
        if isinstance(self.head, Variable):
            names.append(self.head.name)
        if isinstance(self.tail, Variable):
            names.append(self.tail.name)
        return tuple(names)

    def touches(self, name: str) -> bool:
        return name in self.variable_names()

    def is_self_loop(self) -> bool:
        return (
            isinstance(self.head, Variable)
            and isinstance(self.tail, Variable)
            and self.head.name == self.tail.name
        )


class QueryGraph:
    """One conjunct: an edge multiset plus the scalar truth value folded
    out of any constant-only atoms at parse time."""

    __slots__ = ("edges", "scalar_prefix", "_var_names")

    def __init__(self, edges: Sequence[QueryEdge], scalar_prefix: float = 1.0):
        if not 0.0 <= scalar_prefix <= 1.0:
            raise ValueError(f"scalar_prefix outside [0, 1]: {scalar_prefix!r}")
        self.edges: tuple[QueryEdge, ...] = tuple(edges)
        self.scalar_prefix = float(scalar_prefix)
        names: set[str] = set()
        for e in self.edges:
            names.update(e.variable_names())
        self._var_names = frozenset(names)

    @property
    def variable_names(self) -> frozenset[str]:
        return self._var_names

    @property
    def existential_names(self) -> tuple[str, ...]:
        return tuple(sorted(self._var_names - {FREE_VARIABLE_NAME}))

    @property
    def has_free_variable(self) -> bool:
        return FREE_VARIABLE_NAME in self._var_names

    def constants(self) -> tuple[int, ...]:
        out: set[int] = set()
        for e in self.edges:
            for term in (e.head, e.tail):
                if isinstance(term, Constant):
                    out.add(term.entity)
        return tuple(sorted(out))

    def edges_of(self, name: str) -> tuple[QueryEdge, ...]:
        return tuple(e for e in self.edges if e.touches(name))

    def variable_neighbors(self, name: str) -> frozenset[str]:
        """Distinct other variables sharing an edge with `name`."""
        out: set[str] = set()
        for e in self.edges:
            if e.touches(name):
                out.update(n for n in e.variable_names() if n != name)
        return frozenset(out)

    def __repr__(self) -> str:
        return f"QueryGraph(edges={len(self.edges)}, scalar_prefix={self.scalar_prefix})"


@dataclass(frozen=True)
class EFO1Formula:
    """Disjunction of conjuncts sharing the free variable "y"."""

    conjuncts: tuple[QueryGraph, ...]

    def __post_init__(self) -> None:
        if not self.conjuncts:
            raise ValueError("formula needs at least one conjunct")
        object.__setattr__(self, "conjuncts", tuple(self.conjuncts))

    def __iter__(self) -> Iterator[QueryGraph]:
        return iter(self.conjuncts)

    def __len__(self) -> int:
        return len(self.conjuncts)


# --------------------------------------------------------------- structure


def _node_key(term: Term):
    if isinstance(term, Variable):
        return ("var", term.name)
    return ("const", term.entity)


def find_leaves(q: QueryGraph) -> list[str]:
    """Existential variables adjacent to exactly one distinct other
    variable, ordered by name.  Constant-incident edges and self-loops are
    ignored; the free variable is never a leaf."""
    out = []
    for name in sorted(q.variable_names - {FREE_VARIABLE_NAME}):
        if len(q.variable_neighbors(name)) == 1:
            out.append(name)
    return out


def find_leaf(q: QueryGraph) -> str | None:
    """First leaf by name, or None when no leaf exists."""
    leaves = find_leaves(q)
    return leaves[0] if leaves else None


def order_by_distance(q: QueryGraph) -> list[str]:
    """Existential variables sorted by unweighted BFS hop distance from the
    free variable (through constants too), ties broken lexicographically.

    Negated edges count as connectivity.  Raises DisconnectedQueryError if
    any variable is unreachable from "y".
    """
    if not q.has_free_variable:
        raise ValueError("query graph has no free variable")
    adjacency: dict[tuple, set[tuple]] = {}
    for e in q.edges:
        a, b = _node_key(e.head), _node_key(e.tail)
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)
    start = ("var", FREE_VARIABLE_NAME)
    dist = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in adjacency.get(node, ()):
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    out = []
    for name in sorted(q.variable_names - {FREE_VARIABLE_NAME}):
        key = ("var", name)
        if key not in dist:
            raise DisconnectedQueryError(f"variable {name!r} is unreachable from the free variable")
        out.append((dist[key], name))
    out.sort()
    return [name for _, name in out]


def is_cyclic(q: QueryGraph) -> bool:
    """True iff a cycle over distinct variables survives constant removal
    and iterative leaf elimination.  Parallel edges merge into one adjacency
    and self-loops are unary constraints, so neither makes a graph cyclic.
    """
    adjacency: dict[str, set[str]] = {name: set() for name in q.variable_names}
    for e in q.edges:
        names = e.variable_names()
        if len(names) == 2 and names[0] != names[1]:
            adjacency[names[0]].add(names[1])
            adjacency[names[1]].add(names[0])
    pending = deque(n for n, nbrs in adjacency.items() if len(nbrs) <= 1)
    while pending:
        node = pending.popleft()
        nbrs = adjacency.pop(node, None)
        if nbrs is None:
            continue
        for other in nbrs:
            if other in adjacency:
                adjacency[other].discard(node)
                if len(adjacency[other]) <= 1:
                    pending.append(other)
    return any(adjacency.values())


def swap_free_variable(q: QueryGraph, target: str) -> QueryGraph:
    """Re-root the conjunct so `target` becomes the free variable.

    The original free variable becomes an existential; swapping to "y"
    itself is the identity.
    """
    if target == FREE_VARIABLE_NAME:
        return q
    if target not in q.variable_names:
        raise ValueError(f"variable {target!r} not in query graph")
    fresh = "x0"
    while fresh in q.variable_names:
        fresh += "_"
    mapping = {target: FREE_VARIABLE_NAME, FREE_VARIABLE_NAME: fresh}

    def remap(term: Term) -> Term:
        if isinstance(term, Variable) and term.name in mapping:
            return Variable(mapping[term.name])
        return term

    edges = [QueryEdge(remap(e.head), e.relation, remap(e.tail), e.negated) for e in q.edges]
    return QueryGraph(edges, q.scalar_prefix)


def check_connected(q: QueryGraph) -> None:
    """Raise DisconnectedQueryError unless all nodes form one component."""
    if not q.edges:
        return
    adjacency: dict[tuple, set[tuple]] = {}
    for e in q.edges:
        a, b = _node_key(e.head), _node_key(e.tail)
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)
    seen = set()
    queue = deque([next(iter(adjacency))])
    while queue:
        node = queue.popleft()
        if node in seen:
            continue
        seen.add(node)
        queue.extend(adjacency[node] - seen)
    if len(seen) != len(adjacency):
        missing = sorted(str(k) for k in set(adjacency) - seen)
        raise DisconnectedQueryError(f"query graph is disconnected; unreachable nodes: {missing}")


# ------------------------------------------------------------------ pretty


def _term_text(term: Term, graph) -> str:
    if isinstance(term, Variable):
        return term.name
    return graph.entity_name(term.entity)


def _atoms_text(q: QueryGraph, graph) -> str:
    atoms = []
    for e in q.edges:
        sign = "!" if e.negated else ""
        rel = graph.relation_name(e.relation)
        atoms.append(f"{sign}{rel}({_term_text(e.head, graph)}, {_term_text(e.tail, graph)})")
    return " & ".join(atoms)


def pretty_conjunct(q: QueryGraph, graph) -> str:
    """Render one conjunct in the query grammar (folded constant atoms are
    not reconstructed)."""
    body = _atoms_text(q, graph)
    existentials = q.existential_names
    if existentials:
        return f"EX {', '.join(existentials)}. {body}"
    return body


def pretty(f: EFO1Formula, graph) -> str:
    """Render a formula so that parsing it again yields the same structure.

    The quantifier prefix is emitted once for the union of existential
    names: the grammar only allows a prefix quantifier, and an existential
    distributes over the disjunction."""
    if len(f.conjuncts) == 1:
        return pretty_conjunct(f.conjuncts[0], graph)
    names = sorted(set().union(*(set(c.existential_names) for c in f.conjuncts)))
    body = " | ".join(f"({_atoms_text(c, graph)})" for c in f.conjuncts)
    if names:
        return f"EX {', '.join(names)}. {body}"
    return body
