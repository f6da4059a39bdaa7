"""Estimator facade: fit/answer/predict plus sklearn protocol compliance."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from symquery import CalibratedProvider, DenseScoreStore, QueryAnswerer


TRIPLES = [
    ("a", "r", "b"),
    ("a", "r", "c"),
    ("b", "s", "d"),
    ("c", "s", "d"),
    ("c", "s", "e"),
]


class TestSklearnProtocol:
    def test_get_set_params_round_trip(self):
        est = QueryAnswerer(tnorm="godel", k_free=7)
        params = est.get_params()
        assert params["tnorm"] == "godel" and params["k_free"] == 7
        est.set_params(tnorm="product", block_size=16)
        assert est.tnorm == "product" and est.block_size == 16

    def test_clone_preserves_params_not_state(self, chain_graph):
        est = QueryAnswerer(k_existential=3).fit(chain_graph)
        cloned = clone(est)
        assert cloned.k_existential == 3
        assert not hasattr(cloned, "graph_")
        with pytest.raises(NotFittedError):
            cloned.answer("r(a, y)")

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            QueryAnswerer().answer("r(a, y)")
        with pytest.raises(NotFittedError):
            QueryAnswerer().predict(["r(a, y)"])


class TestFitVariants:
    def test_fit_on_graph_object(self, chain_graph):
        est = QueryAnswerer().fit(chain_graph)
        assert est.graph_ is chain_graph
        assert est.n_entities_ == 5

    def test_fit_on_named_triples(self):
        est = QueryAnswerer().fit(TRIPLES)
        assert est.n_entities_ == 5
        assert est.graph_.has_relation("s")

    def test_fit_on_tsv_path(self, tmp_path):
        path = tmp_path / "triples.tsv"
        path.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in TRIPLES))
        est = QueryAnswerer().fit(str(path))
        assert est.n_entities_ == 5

    def test_provider_overrides_graph_argument(self, chain_graph, random_scores):
        provider = CalibratedProvider(DenseScoreStore(random_scores(chain_graph)), chain_graph)
        est = QueryAnswerer().fit(None, provider=provider)
        assert est.provider_ is provider
        assert est.graph_ is chain_graph

    def test_epsilon_feeds_default_provider(self, chain_graph):
        est = QueryAnswerer(epsilon=0.25).fit(chain_graph)
        assert est.provider_.epsilon == 0.25


class TestAnswering:
    def test_answer_ranking(self):
        est = QueryAnswerer().fit(TRIPLES)
        ranking = est.answer("EX x1. r(a, x1) & s(x1, y)")
        d = est.graph_.entity_id("d")
        e = est.graph_.entity_id("e")
        dense = ranking.dense_scores()
        assert dense[d] == 1.0 and dense[e] == 1.0
        assert dense.sum() == 2.0

    def test_predict_returns_entity_names(self):
        est = QueryAnswerer().fit(TRIPLES)
        got = est.predict(["r(a, y)", "s(b, y)"])
        assert got.dtype == object
        assert_array_equal(got, np.array(["b", "d"], dtype=object))

    def test_search_params_respected(self):
        est = QueryAnswerer(k_free=2, record_witnesses=True).fit(TRIPLES)
        ranking = est.answer("EX x1. r(a, x1) & s(x1, y)")
        assert ranking.domain.shape == (2,)
        assert ranking.witnesses is not None

    def test_tnorm_parameter_coerced_at_answer_time(self):
        est = QueryAnswerer(tnorm="lukasiewicz").fit(TRIPLES)
        est.answer("r(a, y)")
        est.set_params(tnorm="bogus")
        with pytest.raises(ValueError):
            est.answer("r(a, y)")
