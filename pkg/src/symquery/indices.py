"""Reduced per-variable candidate domains (top-k indices).

The local strategy scores every entity e for a variable v by t-norm
folding relation_tail(r', e) over v's positive incident edges, where r'
is the edge relation when v sits at the tail and its reverse when v sits
at the head.  When the free variable appears in several DNF disjuncts the
per-disjunct scores combine by t-conorm.  The global strategy delegates
whole-query scoring to a pluggable GlobalScorer.

Top-k selection is deterministic: partial selection by score with
boundary ties resolved by ascending entity id, and the returned subset is
ordered by (score desc, id asc).
"""

from __future__ import annotations

import abc
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .algebra import TNormKind, binary_tconorm, binary_tnorm
from .formula import (
    FREE_VARIABLE_NAME,
    Constant,
    EFO1Formula,
    QueryGraph,
    Variable,
    swap_free_variable,
)
from .kg import KnowledgeGraph
from .providers import TruthValueProvider

__all__ = [
    "DomainAssignment",
    "GlobalScorer",
    "PrecomputedGlobalScorer",
    "local_scores",
    "local_indices",
    "top_k_by_score",
    "cut_domain",
    "oracle_global_scorer",
    "load_global_rankings",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainAssignment:
    """Reduced domains per variable, each ordered by (score desc, id asc)."""

    domains: Mapping[str, np.ndarray]
    k_existential: int
    k_free: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "domains", dict(self.domains))
        for name, ids in self.domains.items():
            ids = np.asarray(ids, dtype=np.int64)
            if ids.ndim != 1 or ids.size == 0:
                raise ValueError(f"domain for {name!r} must be a non-empty id vector")
            if np.unique(ids).size != ids.size:
                raise ValueError(f"domain for {name!r} contains duplicate ids")
            self.domains[name] = ids
        if FREE_VARIABLE_NAME not in self.domains:
            raise ValueError("the free variable has no domain")

    def domain(self, name: str) -> np.ndarray:
        return self.domains[name]

    def __contains__(self, name: str) -> bool:
        return name in self.domains


class GlobalScorer(abc.ABC):
    """Whole-query candidate scorer for a single target variable."""

    @abc.abstractmethod
    def score_all(self, q: QueryGraph, target: str) -> np.ndarray:
        """Finite scores over all entities; higher means more plausible."""


def top_k_by_score(scores: np.ndarray, k: int) -> np.ndarray:
    """Ids of the k best scores, ordered by (score desc, id asc).

    Selection is partial (argpartition), with entities tied at the
    threshold admitted in ascending-id order, which makes the result both
    deterministic and monotone in k.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= n:
        return np.lexsort((np.arange(n), -scores)).astype(np.int64)
    pool = np.argpartition(-scores, k - 1)[:k]
    threshold = scores[pool].min()
    above = np.flatnonzero(scores > threshold)
    at = np.flatnonzero(scores == threshold)  # ascending ids already
    chosen = np.concatenate([above, at[: k - above.shape[0]]])
    order = np.lexsort((chosen, -scores[chosen]))
    return chosen[order].astype(np.int64)


def local_scores(
    q: QueryGraph,
    variable: str,
    provider: TruthValueProvider,
    kind: TNormKind | str = TNormKind.PRODUCT,
    include_negated: bool = False,
) -> np.ndarray:
    """Per-entity local-constraint scores for `variable` in one conjunct.

    Only positive incident edges contribute by default; the optional
    deviation mode folds 1 - relation_tail for negated edges too.  A
    variable with no contributing edges scores 1 everywhere (no
    constraint).
    """
    kind = TNormKind.coerce(kind)
    combine = binary_tnorm(kind)
    if variable not in q.variable_names:
        raise ValueError(f"variable {variable!r} does not occur in the conjunct")
    all_ids = np.arange(provider.num_entities, dtype=np.int64)
    scores = np.ones(provider.num_entities)
    for edge in q.edges_of(variable):
        if edge.negated and not include_negated:
            continue
        # v at the tail keeps the relation; v at the head uses the reverse,
        # so both cases ask "how plausible is e as a tail of r'".
        if isinstance(edge.tail, Variable) and edge.tail.name == variable:
            r = edge.relation
        else:
            r = KnowledgeGraph.reverse(edge.relation)
        rt = provider.relation_tail_vector(r, all_ids)
        if edge.negated:
            rt = 1.0 - rt
        scores = combine(scores, rt)
    return scores


def _conjuncts_with(formula_or_conjunct, variable: str) -> list[QueryGraph]:
    if isinstance(formula_or_conjunct, QueryGraph):
        return [formula_or_conjunct]
    return [q for q in formula_or_conjunct if variable in q.variable_names]


def local_indices(
    q: QueryGraph | EFO1Formula,
    variable: str,
    k: int,
    provider: TruthValueProvider,
    kind: TNormKind | str = TNormKind.PRODUCT,
    include_negated: bool = False,
) -> np.ndarray:
    """Top-k entity ids for `variable` under local constraints.

    Accepts a single conjunct or a whole formula; across a formula's
    disjuncts the per-disjunct scores combine by t-conorm.
    """
    kind = TNormKind.coerce(kind)
    conjuncts = _conjuncts_with(q, variable)
    if not conjuncts:
        raise ValueError(f"variable {variable!r} does not occur in the query")
    join = binary_tconorm(kind)
    combined: np.ndarray | None = None
    for conjunct in conjuncts:
        scores = local_scores(conjunct, variable, provider, kind, include_negated)
        combined = scores if combined is None else join(combined, scores)
    return top_k_by_score(combined, k)


def _has_positive_edge(q: QueryGraph, variable: str) -> bool:
    return any(not e.negated for e in q.edges_of(variable))


def cut_domain(
    q: QueryGraph,
    k_existential: int,
    k_free: int,
    provider: TruthValueProvider,
    global_scorer: GlobalScorer | None = None,
    kind: TNormKind | str = TNormKind.PRODUCT,
    include_negated: bool = False,
    free_domain: np.ndarray | None = None,
) -> DomainAssignment:
    """Assign reduced domains to every variable of one conjunct.

    The free variable uses local indices (local mode) or the global
    scorer's top-k (global mode); `free_domain` overrides both so one
    shared free domain can serve every disjunct of a formula.  Variables
    with no positive incident edge fall back to the full entity set
    truncated to k by id (logged).
    """
    if k_existential < 1 or k_free < 1:
        raise ValueError("domain sizes must be at least 1")
    n = provider.num_entities
    k_x = min(k_existential, n)
    k_y = min(k_free, n)
    domains: dict[str, np.ndarray] = {}
    for name in sorted(q.variable_names):
        is_free = name == FREE_VARIABLE_NAME
        k = k_y if is_free else k_x
        if free_domain is not None and is_free:
            domains[name] = np.asarray(free_domain, dtype=np.int64)
            continue
        if not _has_positive_edge(q, name):
            logger.warning(
                "variable %r has no positive incident edge; falling back to the "
                "first %d entities by id",
                name,
                k,
            )
            domains[name] = np.arange(k, dtype=np.int64)
            continue
        if is_free and global_scorer is not None:
            scores = np.asarray(global_scorer.score_all(q, name), dtype=np.float64)
            if scores.shape != (n,) or not np.all(np.isfinite(scores)):
                raise ValueError("global scorer must return finite scores over all entities")
            domains[name] = top_k_by_score(scores, k)
        else:
            domains[name] = local_indices(q, name, k, provider, kind, include_negated)
    return DomainAssignment(domains, k_x, k_y)


# --------------------------------------------------------- global scorers


class _RoleSwapScorer(GlobalScorer):
    """Reference global scorer: re-root the conjunct at the target variable
    and run the full search pipeline on locally reduced domains.  Coarse
    stage: local indices at k_coarse for every variable; fine stage: the
    engine's score vector for the re-rooted query.  Desk-scale only."""

    def __init__(
        self,
        provider: TruthValueProvider,
        kind: TNormKind | str = TNormKind.PRODUCT,
        k_coarse: int | None = None,
    ):
        self.provider = provider
        self.kind = TNormKind.coerce(kind)
        self.k_coarse = k_coarse

    def score_all(self, q: QueryGraph, target: str) -> np.ndarray:
        from .engine import SearchConfig, answer_conjunct

        swapped = swap_free_variable(q, target)
        n = self.provider.num_entities
        k = n if self.k_coarse is None else min(self.k_coarse, n)
        domains = cut_domain(swapped, k, k, self.provider, kind=self.kind)
        ranking = answer_conjunct(
            swapped,
            domains,
            self.provider,
            SearchConfig(tnorm=self.kind, block_size=512),
        )
        scores = np.zeros(n)
        scores[ranking.domain] = ranking.scores
        return scores


def oracle_global_scorer(
    provider: TruthValueProvider,
    kind: TNormKind | str = TNormKind.PRODUCT,
    k_coarse: int | None = None,
) -> GlobalScorer:
    """Reference coarse-to-fine global scorer for small graphs and tests."""
    return _RoleSwapScorer(provider, kind, k_coarse)


class PrecomputedGlobalScorer(GlobalScorer):
    """Rankings imported from an external system, keyed by variable name.

    An entity at position i of a ranked list of length m scores m - i;
    unranked entities score 0.
    """

    def __init__(self, rankings: Mapping[str, np.ndarray], num_entities: int):
        self.num_entities = int(num_entities)
        self._scores: dict[str, np.ndarray] = {}
        for name, ranked in rankings.items():
            ranked = np.asarray(ranked, dtype=np.int64)
            if ranked.ndim != 1:
                raise ValueError(f"ranking for {name!r} must be a one-dimensional id list")
            if ranked.size and (ranked.min() < 0 or ranked.max() >= self.num_entities):
                raise ValueError(f"ranking for {name!r} contains out-of-range ids")
            scores = np.zeros(self.num_entities)
            scores[ranked] = np.arange(ranked.shape[0], 0, -1, dtype=np.float64)
            self._scores[name] = scores

    def score_all(self, q: QueryGraph, target: str) -> np.ndarray:
        got = self._scores.get(target)
        if got is None:
            raise KeyError(f"no precomputed ranking for variable {target!r}")
        return got.copy()


def load_global_rankings(path: str | Path, num_entities: int) -> dict[str, PrecomputedGlobalScorer]:
    """Read JSONL rows {"query_id", "variable", "ranked_entity_ids"} into
    one PrecomputedGlobalScorer per query id."""
    per_query: dict[str, dict[str, np.ndarray]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                qid = str(row["query_id"])
                variable = str(row["variable"])
                ranked = np.asarray(row["ranked_entity_ids"], dtype=np.int64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_number}: bad ranking row: {exc}") from exc
            per_query.setdefault(qid, {})[variable] = ranked
    return {
        qid: PrecomputedGlobalScorer(rankings, num_entities)
        for qid, rankings in per_query.items()
    }
