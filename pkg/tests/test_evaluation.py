"""Benchmark tooling: graph synthesis, query sampling, filtered metrics."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from symquery import (
    AnswerRanking,
    ExactProvider,
    PrecomputedGlobalScorer,
    QueryInstance,
    SamplingError,
    SearchConfig,
    evaluate,
    load_templates,
    make_synthetic_kg,
    measure_qps,
    parse_formula,
    read_instances,
    sample_queries,
    score_ranking,
    split_graph,
    traversal_answers,
    write_instances,
)


def reference_ranks(scores, instance, num_entities):
    """Sort/searchsorted reference for filtered average-tie ranking."""
    answers = set(instance.easy) | set(instance.hard)
    pool = np.sort(
        np.asarray([scores[e] for e in range(num_entities) if e not in answers])
    )
    ranks = []
    for h in instance.hard:
        s = scores[h]
        lo = np.searchsorted(pool, s, side="left")
        hi = np.searchsorted(pool, s, side="right")
        above = pool.shape[0] - hi
        ranks.append(1.0 + above + 0.5 * (hi - lo))
    return ranks


class TestSyntheticKG:
    def test_deterministic_by_seed(self):
        a = make_synthetic_kg(num_entities=120, num_relations=4, num_triples=300, seed=7)
        b = make_synthetic_kg(num_entities=120, num_relations=4, num_triples=300, seed=7)
        c = make_synthetic_kg(num_entities=120, num_relations=4, num_triples=300, seed=8)
        assert set(a.base_triples()) == set(b.base_triples())
        assert set(a.base_triples()) != set(c.base_triples())
        assert a.entity_names == b.entity_names

    def test_tails_drawn_from_bounded_pools(self):
        g = make_synthetic_kg(num_entities=800, num_relations=10, num_triples=3000)
        for rel in range(g.num_base_relations):
            assert g.tails_of_relation(2 * rel).shape[0] <= 140

    def test_relations_five_apart_share_tail_pools(self):
        g = make_synthetic_kg(num_entities=800, num_relations=10, num_triples=3000)
        for rel in range(5):
            a = set(g.tails_of_relation(2 * rel).tolist())
            b = set(g.tails_of_relation(2 * (rel + 5)).tolist())
            assert a & b, f"relations {rel} and {rel + 5} share no tails"

    def test_no_self_loops(self):
        g = make_synthetic_kg(num_entities=150, num_relations=4, num_triples=500)
        assert all(h != t for h, _, t in g.base_triples())

    def test_validates_relation_count(self):
        with pytest.raises(ValueError):
            make_synthetic_kg(num_relations=1)


class TestSplitGraph:
    def test_holdout_properties(self):
        g = make_synthetic_kg(num_entities=200, num_relations=4, num_triples=600, seed=1)
        obs = split_graph(g, fraction=0.2, seed=3)
        full = set(g.base_triples())
        kept = set(obs.base_triples())
        assert kept < full
        assert len(kept) == len(full) - int(round(0.2 * len(full)))
        assert obs.entity_names == g.entity_names
        assert obs.base_relation_names == g.base_relation_names

    def test_deterministic_by_seed(self):
        g = make_synthetic_kg(num_entities=200, num_relations=4, num_triples=600, seed=1)
        assert set(split_graph(g, 0.1, seed=5).base_triples()) == set(
            split_graph(g, 0.1, seed=5).base_triples()
        )
        assert set(split_graph(g, 0.1, seed=5).base_triples()) != set(
            split_graph(g, 0.1, seed=6).base_triples()
        )

    def test_fraction_validated(self):
        g = make_synthetic_kg(num_entities=100, num_relations=3, num_triples=200)
        with pytest.raises(ValueError):
            split_graph(g, fraction=1.0)


@pytest.fixture(scope="module")
def graphs():
    full = make_synthetic_kg(
        num_entities=300, num_relations=6, num_triples=1200,
        num_triangles=60, num_parallel=40, seed=0,
    )
    return full, split_graph(full, fraction=0.15, seed=0)


class TestSampler:
    def test_instances_have_hard_answers(self, graphs):
        full, observed = graphs
        template = load_templates("all")["2p"]
        instances = sample_queries(template, observed, full, n=4, seed=0)
        assert len(instances) == 4
        assert len({inst.id for inst in instances}) == 4
        for inst in instances:
            assert inst.type == "2p"
            assert inst.hard
            assert not set(inst.hard) & set(inst.easy)
            f = parse_formula(inst.formula, full)
            full_answers = traversal_answers(f, full)
            easy = traversal_answers(f, observed)
            assert set(inst.hard) == full_answers - easy
            assert set(inst.easy) == easy

    def test_deterministic_by_seed(self, graphs):
        full, observed = graphs
        template = load_templates("all")["2in"]
        a = sample_queries(template, observed, full, n=3, seed=11)
        b = sample_queries(template, observed, full, n=3, seed=11)
        assert [i.formula for i in a] == [i.formula for i in b]

    def test_no_holdout_means_no_hard_answers(self, graphs):
        full, _ = graphs
        template = load_templates("all")["1p"]
        with pytest.raises(SamplingError) as info:
            sample_queries(template, full, full, n=2, max_attempts=40)
        assert info.value.attempts == 40

    def test_n_validated(self, graphs):
        full, observed = graphs
        with pytest.raises(ValueError):
            sample_queries(load_templates("all")["1p"], observed, full, n=0)


class TestInstanceIO:
    def test_round_trip_stores_names(self, tmp_path, chain_graph):
        instances = [
            QueryInstance("q-0", "1p", "r(a, y)", easy=(1,), hard=(2,)),
            QueryInstance("q-1", "2p", "EX x1. r(a, x1) & s(x1, y)", easy=(), hard=(3, 4)),
        ]
        path = tmp_path / "instances.jsonl"
        write_instances(path, instances, chain_graph)
        raw = [json.loads(line) for line in path.read_text().splitlines()]
        assert raw[0]["easy"] == ["b"] and raw[0]["hard"] == ["c"]
        assert raw[1]["hard"] == ["d", "e"]
        back = read_instances(path, chain_graph)
        assert back == instances

    def test_blank_lines_and_defaults(self, chain_graph):
        lines = ['{"id": "q", "type": "1p", "formula": "r(a, y)", "hard": ["b"]}', "", "  "]
        (inst,) = read_instances(lines, chain_graph)
        assert inst.easy == () and inst.hard == (1,)


class TestScoreRanking:
    def test_rank_two_gives_half(self):
        ranking = AnswerRanking(np.arange(3), np.array([0.9, 0.8, 0.1]), 3)
        inst = QueryInstance("q", "1p", "f", easy=(), hard=(1,))
        got = score_ranking(ranking, inst)
        assert got["ranks"] == [2.0]
        assert got["rr"] == 0.5
        assert got["hit@1"] == 0.0 and got["hit@3"] == 1.0

    def test_ties_average(self):
        scores = np.array([0.5, 0.5, 0.5, 0.1])
        ranking = AnswerRanking(np.arange(4), scores, 4)
        inst = QueryInstance("q", "1p", "f", easy=(), hard=(0,))
        got = score_ranking(ranking, inst)
        assert got["ranks"] == [2.0]  # two tied competitors: 1 + 0 + 0.5 * 2

    def test_known_answers_filtered_out(self):
        scores = np.array([0.9, 0.8, 0.7, 0.1])
        ranking = AnswerRanking(np.arange(4), scores, 4)
        with_easy = score_ranking(
            ranking, QueryInstance("q", "t", "f", easy=(0,), hard=(2,))
        )
        without = score_ranking(
            ranking, QueryInstance("q", "t", "f", easy=(), hard=(2,))
        )
        assert with_easy["ranks"] == [2.0]
        assert without["ranks"] == [3.0]

    def test_matches_searchsorted_reference(self):
        rng = np.random.default_rng(42)
        n = 50
        for _ in range(300):
            scores = np.round(rng.uniform(size=n), 2)  # heavy ties
            ids = rng.choice(n, size=6, replace=False)
            inst = QueryInstance(
                "q", "t", "f", easy=tuple(ids[:3].tolist()), hard=tuple(ids[3:].tolist())
            )
            ranking = AnswerRanking(np.arange(n), scores, n)
            got = score_ranking(ranking, inst)
            expected = reference_ranks(scores, inst, n)
            assert got["ranks"] == expected
            assert_allclose(got["rr"], np.mean(1.0 / np.asarray(expected)), atol=1e-15)

    def test_empty_hard_rejected(self):
        ranking = AnswerRanking(np.arange(3), np.zeros(3), 3)
        with pytest.raises(ValueError):
            score_ranking(ranking, QueryInstance("q", "t", "f", easy=(1,), hard=()))


class TestEvaluate:
    @pytest.fixture
    def instances(self):
        return [
            QueryInstance("a-0", "proj", "s(c, y)", easy=(4,), hard=(3,)),
            QueryInstance("b-0", "fan", "r(a, y)", easy=(), hard=(1,)),
        ]

    def test_macro_aggregation(self, chain_provider, instances):
        report = evaluate(instances, chain_provider)
        assert report.num_instances == 2
        # proj: hard d ranks 1.  fan: b ties with c -> rank 1.5
        assert_allclose(report.per_type["proj"]["mrr"], 1.0, atol=1e-12)
        assert_allclose(report.per_type["fan"]["mrr"], 1.0 / 1.5, atol=1e-12)
        assert_allclose(report.overall["mrr"], (1.0 + 1.0 / 1.5) / 2, atol=1e-12)
        assert report.per_type["fan"]["hit@1"] == 0.0
        assert report.per_type["fan"]["hit@3"] == 1.0

    def test_report_serialization(self, chain_provider, instances):
        report = evaluate(instances, chain_provider)
        parsed = json.loads(report.to_json())
        assert parsed["num_instances"] == 2
        assert set(parsed["per_type"]) == {"proj", "fan"}
        table = report.to_text_table()
        assert "proj" in table and "overall" in table

    def test_workers_do_not_change_results(self, chain_provider, instances):
        serial = evaluate(instances, chain_provider, workers=1)
        parallel = evaluate(instances, chain_provider, workers=4)
        assert serial.per_type == parallel.per_type
        assert serial.overall == parallel.overall

    def test_global_scorers_keyed_by_instance(self, chain_provider, instances):
        baseline = evaluate(instances, chain_provider, SearchConfig(k_free=1))
        steered = evaluate(
            instances,
            chain_provider,
            SearchConfig(k_free=1),
            global_scorers={"b-0": PrecomputedGlobalScorer({"y": np.array([1])}, 5)},
        )
        # the scorer pins b-0's candidate domain to the hard answer itself
        assert steered.per_type["fan"]["mrr"] >= baseline.per_type["fan"]["mrr"]
        assert steered.per_type["proj"] == baseline.per_type["proj"]

    def test_empty_rejected(self, chain_provider):
        with pytest.raises(ValueError):
            evaluate([], chain_provider)


class TestMeasureQPS:
    def test_reports_per_type_medians(self, chain_provider):
        instances = [
            QueryInstance("a-0", "proj", "s(c, y)", easy=(), hard=(3,)),
            QueryInstance("a-1", "proj", "s(b, y)", easy=(), hard=(3,)),
            QueryInstance("b-0", "fan", "r(a, y)", easy=(), hard=(1,)),
        ]
        got = measure_qps(instances, chain_provider, repetitions=2)
        assert set(got["per_type"]) == {"proj", "fan"}
        assert got["overall"] > 0
        assert got["repetitions"] == 2
        assert all(v > 0 for v in got["per_type"].values())

    def test_validation(self, chain_provider):
        with pytest.raises(ValueError):
            measure_qps([], chain_provider)
        inst = QueryInstance("a-0", "proj", "s(c, y)", easy=(), hard=(3,))
        with pytest.raises(ValueError):
            measure_qps([inst], chain_provider, repetitions=0)
