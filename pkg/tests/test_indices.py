"""Domain reduction: top-k selection, local constraint scores, global scorers."""

import json
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from symquery import (
    DomainAssignment,
    ExactProvider,
    GlobalScorer,
    PrecomputedGlobalScorer,
    cut_domain,
    load_global_rankings,
    local_indices,
    local_scores,
    oracle_global_scorer,
    parse_formula,
    top_k_by_score,
)


def full_order(scores: np.ndarray) -> np.ndarray:
    """Reference total order: score descending, id ascending."""
    n = scores.shape[0]
    return np.lexsort((np.arange(n), -scores)).astype(np.int64)


class TestTopKByScore:
    """top_k_by_score must equal the k-prefix of a full stable sort."""

    def test_matches_sort_oracle_under_ties(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            scores = np.round(rng.uniform(size=200), 1)  # heavy ties
            reference = full_order(scores)
            for k in (1, 5, 50, 199, 200, 500):
                assert_array_equal(top_k_by_score(scores, k), reference[:k])

    def test_monotone_in_k(self):
        rng = np.random.default_rng(42)
        scores = np.round(rng.uniform(size=64), 1)
        previous = top_k_by_score(scores, 1)
        for k in range(2, 65):
            current = top_k_by_score(scores, k)
            assert_array_equal(current[: k - 1], previous)
            previous = current

    def test_deterministic(self):
        rng = np.random.default_rng(42)
        scores = np.round(rng.uniform(size=100), 1)
        assert_array_equal(top_k_by_score(scores, 10), top_k_by_score(scores, 10))

    def test_threshold_ties_admitted_by_ascending_id(self):
        scores = np.array([0.5, 0.9, 0.5, 0.5, 0.1])
        assert_array_equal(top_k_by_score(scores, 3), [1, 0, 2])

    def test_k_validated(self):
        with pytest.raises(ValueError):
            top_k_by_score(np.ones(3), 0)


class TestLocalScores:
    """Per-entity scores fold relation-tail plausibilities of incident
    positive edges; the orientation always asks "is e a tail of r'"."""

    def test_hand_derived_chain(self, chain_graph, chain_provider):
        (q,) = parse_formula("EX x1. r(a, x1) & s(x1, y)", chain_graph)
        # x1 is a tail of r and a head of s; heads of s are {b, c}
        assert_array_equal(
            local_scores(q, "x1", chain_provider, "product"), [0, 1, 1, 0, 0]
        )
        assert_array_equal(local_scores(q, "y", chain_provider, "product"), [0, 0, 0, 1, 1])

    def test_negated_edges_skipped_by_default(self, chain_graph):
        provider = ExactProvider(chain_graph, epsilon=0.5)
        (q,) = parse_formula("s(b, y) & !r(b, y)", chain_graph)
        assert_array_equal(
            local_scores(q, "y", provider, "product"), [0.5, 0.5, 0.5, 1, 1]
        )

    def test_include_negated_folds_complement(self, chain_graph):
        provider = ExactProvider(chain_graph, epsilon=0.5)
        (q,) = parse_formula("s(b, y) & !r(b, y)", chain_graph)
        got = local_scores(q, "y", provider, "product", include_negated=True)
        # tails of r are {b, c}: complement [0.5, 0, 0, 0.5, 0.5]
        assert_allclose(got, [0.25, 0.0, 0.0, 0.5, 0.5], atol=1e-15)

    def test_unconstrained_variable_scores_one(self, chain_graph, chain_provider):
        (q,) = parse_formula("EX x1. r(a, x1) & !s(x1, y)", chain_graph)
        assert_array_equal(local_scores(q, "y", chain_provider), np.ones(5))

    def test_unknown_variable_rejected(self, chain_graph, chain_provider):
        (q,) = parse_formula("r(a, y)", chain_graph)
        with pytest.raises(ValueError):
            local_scores(q, "x9", chain_provider)


class TestLocalIndices:
    def test_single_conjunct(self, chain_graph, chain_provider):
        (q,) = parse_formula("EX x1. r(a, x1) & s(x1, y)", chain_graph)
        assert_array_equal(local_indices(q, "x1", 2, chain_provider), [1, 2])

    def test_formula_combines_disjuncts_by_tconorm(self, chain_graph):
        provider = ExactProvider(chain_graph, epsilon=0.25)
        f = parse_formula("r(a, y) | s(b, y)", chain_graph)
        per_disjunct = [local_scores(q, "y", provider, "product") for q in f]
        expected = per_disjunct[0] + per_disjunct[1] - per_disjunct[0] * per_disjunct[1]
        assert_array_equal(
            local_indices(f, "y", 3, provider, "product"),
            top_k_by_score(expected, 3),
        )

    def test_variable_absent_from_formula(self, chain_graph, chain_provider):
        f = parse_formula("r(a, y)", chain_graph)
        with pytest.raises(ValueError):
            local_indices(f, "x1", 2, chain_provider)


class TestCutDomain:
    def test_domains_cover_all_variables(self, chain_graph, chain_provider):
        (q,) = parse_formula("EX x1. r(a, x1) & s(x1, y)", chain_graph)
        domains = cut_domain(q, 2, 3, chain_provider)
        assert "x1" in domains and "y" in domains
        assert domains.domain("x1").shape[0] == 2
        assert domains.domain("y").shape[0] == 3
        assert domains.k_existential == 2 and domains.k_free == 3

    def test_free_domain_override(self, chain_graph, chain_provider):
        (q,) = parse_formula("r(a, y)", chain_graph)
        override = np.array([4, 0, 2])
        domains = cut_domain(q, 2, 2, chain_provider, free_domain=override)
        assert_array_equal(domains.domain("y"), override)

    def test_fallback_without_positive_edges(self, chain_graph, chain_provider, caplog):
        (q,) = parse_formula("EX x1. r(a, x1) & !s(x1, y)", chain_graph)
        with caplog.at_level(logging.WARNING):
            domains = cut_domain(q, 3, 3, chain_provider)
        assert_array_equal(domains.domain("y"), [0, 1, 2])
        assert any("no positive incident edge" in r.message for r in caplog.records)

    def test_global_scorer_drives_free_domain(self, chain_graph, chain_provider):
        class Fixed(GlobalScorer):
            def score_all(self, q, target):
                return np.array([0.1, 0.9, 0.2, 0.8, 0.3])

        (q,) = parse_formula("EX x1. r(a, x1) & s(x1, y)", chain_graph)
        domains = cut_domain(q, 2, 2, chain_provider, global_scorer=Fixed())
        assert_array_equal(domains.domain("y"), [1, 3])
        # existentials still use local constraints
        assert_array_equal(domains.domain("x1"), [1, 2])

    def test_global_scorer_output_validated(self, chain_graph, chain_provider):
        class Bad(GlobalScorer):
            def score_all(self, q, target):
                return np.array([np.inf, 0, 0, 0, 0])

        (q,) = parse_formula("r(a, y)", chain_graph)
        with pytest.raises(ValueError):
            cut_domain(q, 2, 2, chain_provider, global_scorer=Bad())

    def test_sizes_validated(self, chain_graph, chain_provider):
        (q,) = parse_formula("r(a, y)", chain_graph)
        with pytest.raises(ValueError):
            cut_domain(q, 0, 2, chain_provider)
        with pytest.raises(ValueError):
            cut_domain(q, 2, 0, chain_provider)


class TestDomainAssignment:
    def test_requires_free_variable(self):
        with pytest.raises(ValueError, match="free variable"):
            DomainAssignment({"x1": np.array([0, 1])}, 2, 2)

    def test_rejects_duplicates_and_empties(self):
        with pytest.raises(ValueError, match="duplicate"):
            DomainAssignment({"y": np.array([1, 1])}, 2, 2)
        with pytest.raises(ValueError, match="non-empty"):
            DomainAssignment({"y": np.array([], dtype=np.int64)}, 2, 2)


class TestGlobalScorers:
    def test_precomputed_scores_by_rank_position(self):
        scorer = PrecomputedGlobalScorer({"y": np.array([3, 1])}, num_entities=5)
        assert_array_equal(scorer.score_all(None, "y"), [0, 1, 0, 2, 0])
        with pytest.raises(KeyError):
            scorer.score_all(None, "x1")

    def test_precomputed_validates_ids(self):
        with pytest.raises(ValueError, match="out-of-range"):
            PrecomputedGlobalScorer({"y": np.array([7])}, num_entities=5)
        with pytest.raises(ValueError, match="one-dimensional"):
            PrecomputedGlobalScorer({"y": np.zeros((2, 2), dtype=np.int64)}, num_entities=5)

    def test_load_global_rankings(self, tmp_path):
        path = tmp_path / "rankings.jsonl"
        rows = [
            {"query_id": "q1", "variable": "y", "ranked_entity_ids": [2, 0]},
            {"query_id": "q2", "variable": "y", "ranked_entity_ids": [1]},
            {"query_id": "q1", "variable": "x1", "ranked_entity_ids": [4]},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n\n", encoding="utf-8")
        scorers = load_global_rankings(path, num_entities=5)
        assert set(scorers) == {"q1", "q2"}
        assert_array_equal(scorers["q1"].score_all(None, "y"), [1, 0, 2, 0, 0])
        assert_array_equal(scorers["q1"].score_all(None, "x1"), [0, 0, 0, 0, 1])

    def test_load_global_rankings_reports_bad_rows(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"query_id": "q1"}\n', encoding="utf-8")
        with pytest.raises(ValueError, match="bad.jsonl:1"):
            load_global_rankings(path, num_entities=5)

    def test_oracle_scorer_separates_answers(self, chain_graph, chain_provider):
        (q,) = parse_formula("EX x1. r(a, x1) & s(x1, y)", chain_graph)
        scorer = oracle_global_scorer(chain_provider)
        scores = scorer.score_all(q, "y")
        assert scores.shape == (5,)
        # d and e are reachable answers; everything else scores lower
        assert min(scores[3], scores[4]) > max(scores[0], scores[1], scores[2])
        domains = cut_domain(q, 5, 2, chain_provider, global_scorer=scorer)
        assert set(domains.domain("y").tolist()) == {3, 4}
