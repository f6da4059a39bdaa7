"""Estimator-style facade: fit on a graph, answer formulas.

Wraps graph loading, provider construction, parsing, and the search
pipeline behind the familiar fit/predict surface so the engine drops into
sklearn-style tooling (get_params, clone, pipelines that pass estimators
around).  All real work happens in the underlying modules.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .engine import AnswerRanking, SearchConfig, answer_formula
from .kg import KnowledgeGraph, load_triples
from .parsing import parse_formula
from .providers import ExactProvider, TruthValueProvider

__all__ = ["QueryAnswerer"]


class QueryAnswerer(BaseEstimator):
    """Answers logical queries over a fitted knowledge graph.

    Parameters mirror SearchConfig; `epsilon` is the default truth value
    of unobserved triples when no neural provider is supplied to fit().
    """

    def __init__(
        self,
        tnorm: str = "product",
        k_existential: int | None = None,
        k_free: int | None = None,
        epsilon: float = 0.0,
        block_size: int = 512,
        record_witnesses: bool = False,
    ):
        self.tnorm = tnorm
        self.k_existential = k_existential
        self.k_free = k_free
        self.epsilon = epsilon
        self.block_size = block_size
        self.record_witnesses = record_witnesses

    def _config(self) -> SearchConfig:
        return SearchConfig(
            tnorm=self.tnorm,
            k_existential=self.k_existential,
            k_free=self.k_free,
            block_size=self.block_size,
            record_witnesses=self.record_witnesses,
        )

    def fit(self, X, y=None, provider: TruthValueProvider | None = None) -> "QueryAnswerer":
        """Bind a graph: a KnowledgeGraph, a triple TSV path, or an
        iterable of (head, relation, tail) name triples.

        A fitted provider wins over X-derived defaults; without one,
        truths come from graph lookups with `epsilon` for missing triples.
        """
        if provider is not None:
            graph = provider.graph
        elif isinstance(X, KnowledgeGraph):
            graph = X
        elif isinstance(X, (str, Path)):
            graph = load_triples(X)
        else:
            graph = KnowledgeGraph.from_named_triples(list(X))
        self.graph_ = graph
        self.provider_ = provider if provider is not None else ExactProvider(graph, self.epsilon)
        self.n_entities_ = graph.num_entities
        return self

    def answer(self, formula: str) -> AnswerRanking:
        """Full ranking for one formula string."""
        check_is_fitted(self, "provider_")
        f = parse_formula(formula, self.graph_)
        return answer_formula(f, self.provider_, self._config())

    def predict(self, X: Iterable[str]) -> np.ndarray:
        """Best answer entity name per formula."""
        check_is_fitted(self, "provider_")
        out = []
        for formula in X:
            ranking = self.answer(formula)
            best, _ = ranking.top(1)[0]
            out.append(self.graph_.entity_name(best))
        return np.asarray(out, dtype=object)
