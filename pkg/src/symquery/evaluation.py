"""Benchmark harness: synthetic graphs, query sampling, filtered ranking
metrics, and throughput measurement.

The ranking protocol follows the usual incomplete-graph convention: each
instance carries "easy" answers (reachable on the observed graph) and
"hard" answers (reachable only with the held-out triples); metrics are
computed on hard answers with every known answer other than the one being
ranked filtered out of the competitor pool, ties resolved by average rank.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import median
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import AnswerRanking, SearchConfig, answer_formula
from .formula import FREE_VARIABLE_NAME, pretty
from .indices import GlobalScorer
from .kg import KnowledgeGraph
from .oracle import traversal_answers
from .parsing import Template, parse_formula
from .providers import TruthValueProvider

__all__ = [
    "HIT_KS",
    "SamplingError",
    "QueryInstance",
    "read_instances",
    "write_instances",
    "make_synthetic_kg",
    "split_graph",
    "sample_queries",
    "score_ranking",
    "MetricsReport",
    "evaluate",
    "measure_qps",
]

HIT_KS = (1, 3, 10)


class SamplingError(RuntimeError):
    """Query sampling exhausted its attempt budget."""

    def __init__(self, template: str, attempts: int, produced: int, wanted: int):
        super().__init__(
            f"template {template!r}: produced {produced}/{wanted} instances "
            f"in {attempts} attempts"
        )
        self.template = template
        self.attempts = attempts


@dataclass(frozen=True)
class QueryInstance:
    """One benchmark query with its split answer sets (entity ids).

    On disk the answer sets are entity names, so instance files stay valid
    however the graph's id tables were built; read/write translate."""

    id: str
    type: str
    formula: str
    easy: tuple[int, ...]
    hard: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "easy", tuple(int(e) for e in self.easy))
        object.__setattr__(self, "hard", tuple(int(e) for e in self.hard))


def read_instances(
    source: str | Path | Iterable[str], graph: KnowledgeGraph
) -> list[QueryInstance]:
    """Read one JSON object per line, resolving answer names to ids;
    blank lines are skipped."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_instances(list(fh), graph)
    out = []
    for line in source:
        line = line.strip()
        if not line:
            continue
        row = json.loads(line)
        out.append(
            QueryInstance(
                id=str(row["id"]),
                type=str(row["type"]),
                formula=str(row["formula"]),
                easy=tuple(graph.entity_id(name) for name in row.get("easy", ())),
                hard=tuple(graph.entity_id(name) for name in row.get("hard", ())),
            )
        )
    return out


def write_instances(
    target: str | Path, instances: Iterable[QueryInstance], graph: KnowledgeGraph
) -> None:
    with open(target, "w", encoding="utf-8") as fh:
        for inst in instances:
            row = {
                "id": inst.id,
                "type": inst.type,
                "formula": inst.formula,
                "easy": [graph.entity_name(e) for e in inst.easy],
                "hard": [graph.entity_name(e) for e in inst.hard],
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# ------------------------------------------------------------- graph synth


def make_synthetic_kg(
    num_entities: int = 2000,
    num_relations: int = 10,
    num_triples: int = 7000,
    num_triangles: int = 400,
    num_parallel: int = 250,
    seed: int = 0,
) -> KnowledgeGraph:
    """Random graph with enough reusable structure to sample every query
    shape.

    Each relation draws its tails from one of five shared pools, relations
    five apart share a pool, so per-relation tail sets stay small (answer
    candidates survive aggressive domain cuts) and intersections and
    triangles are satisfiable.  Planted triangles (some with a doubled
    edge) and parallel edge pairs keep the cyclic and multigraph shapes
    samplable.
    """
    if num_relations < 2:
        raise ValueError("need at least 2 relations")
    rng = np.random.default_rng(seed)
    width = len(str(max(num_entities - 1, 1)))
    entities = [f"e{i:0{width}d}" for i in range(num_entities)]
    relations = [f"r{i}" for i in range(num_relations)]
    num_pools = min(5, num_relations)
    pool_size = min(140, max(2, num_entities // 4))
    pools = [
        np.sort(rng.choice(num_entities, size=pool_size, replace=False))
        for _ in range(num_pools)
    ]

    def pool_of(rel: int) -> np.ndarray:
        return pools[rel % num_pools]

    def shared_partner(rel: int) -> int:
        # a different relation drawing from the same tail pool, if any
        partner = (rel + num_pools) % num_relations
        return partner if partner != rel else rel

    triples: set[tuple[int, int, int]] = set()
    per_relation = max(1, num_triples // num_relations)
    for rel in range(num_relations):
        heads = rng.integers(0, num_entities, size=per_relation)
        tails = rng.choice(pool_of(rel), size=per_relation)
        for h, t in zip(heads, tails):
            if h != t:
                triples.add((int(h), rel, int(t)))
    for i in range(num_triangles):
        r1 = int(rng.integers(0, num_relations))
        r2 = int(rng.integers(0, num_relations))
        r3 = shared_partner(r2)
        a = int(rng.choice(pools[int(rng.integers(0, num_pools))]))
        b = int(rng.choice(pool_of(r1)))
        c = int(rng.choice(pool_of(r2)))
        if len({a, b, c}) < 3:
            continue
        triples.add((a, r1, b))
        triples.add((b, r2, c))
        triples.add((a, r3, c))
        if i % 3 == 0:
            extra = shared_partner(r1)
            if extra != r1:
                triples.add((a, extra, b))
    for _ in range(num_parallel):
        rel = int(rng.integers(0, num_relations))
        partner = shared_partner(rel)
        h = int(rng.choice(pools[int(rng.integers(0, num_pools))]))
        t = int(rng.choice(pool_of(rel)))
        if h == t:
            continue
        triples.add((h, rel, t))
        if partner != rel:
            triples.add((h, partner, t))
    return KnowledgeGraph(entities, relations, sorted(triples))


def split_graph(
    g: KnowledgeGraph, fraction: float = 0.1, seed: int = 0
) -> KnowledgeGraph:
    """Observed subgraph: the full graph minus a random fraction of its
    base triples, with identical symbol tables."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("holdout fraction must lie in [0, 1)")
    base = [(h, r >> 1, t) for h, r, t in g.base_triples()]
    rng = np.random.default_rng(seed)
    holdout = int(round(fraction * len(base)))
    drop = set(rng.choice(len(base), size=holdout, replace=False).tolist())
    kept = [triple for i, triple in enumerate(base) if i not in drop]
    return KnowledgeGraph(g.entity_names, g.base_relation_names, kept)


# ----------------------------------------------------------- query sampling


class _GroundingWalk:
    """Grounds one template attempt against the full graph.

    Positive atoms are grounded first, always extending from already-known
    endpoints via observed adjacency, so the chosen slot values admit at
    least one satisfying assignment.  Negated atoms are grounded last and
    prefer choices whose triple is present, which makes the negation
    actually exclude something.
    """

    def __init__(self, template: Template, g_full: KnowledgeGraph, rng: np.random.Generator):
        self.g = g_full
        self.rng = rng
        self.variables = set(template.variables) | {FREE_VARIABLE_NAME}
        seen: set = set()
        self.atoms = []
        for conjunct in template.structure():
            for atom in conjunct:
                if atom not in seen:
                    seen.add(atom)
                    self.atoms.append(atom)
        self.values: dict[str, int] = {}
        self.rels: dict[str, int] = {}

    # term/relation resolution -------------------------------------------

    def _term_value(self, term: str) -> int | None:
        if term.startswith("$") or term in self.variables:
            return self.values.get(term)
        return self.g.entity_id(term)

    def _relation_value(self, rel: str) -> int | None:
        if rel.startswith("$"):
            return self.rels.get(rel)
        if rel.startswith("~"):
            return KnowledgeGraph.reverse(self.g.relation_id(rel[1:]))
        return self.g.relation_id(rel)

    def _choice(self, values: np.ndarray | Sequence[int]) -> int:
        values = np.asarray(values)
        return int(values[int(self.rng.integers(0, values.shape[0]))])

    def _known_count(self, atom) -> int:
        known = 0 if self._relation_value(atom.relation) is None else 1
        known += 0 if self._term_value(atom.head) is None else 1
        known += 0 if self._term_value(atom.tail) is None else 1
        return known

    def _store(self, atom, relation: int | None, head: int | None, tail: int | None) -> None:
        if relation is not None and atom.relation.startswith("$"):
            self.rels[atom.relation] = relation
        if head is not None and (atom.head.startswith("$") or atom.head in self.variables):
            self.values[atom.head] = head
        if tail is not None and (atom.tail.startswith("$") or atom.tail in self.variables):
            self.values[atom.tail] = tail

    # grounding ------------------------------------------------------------

    def _ground_positive(self, atom) -> bool:
        rel = self._relation_value(atom.relation)
        head = self._term_value(atom.head)
        tail = self._term_value(atom.tail)
        if rel is None:
            options = []
            for r in range(self.g.num_relations):
                if head is not None and tail is not None:
                    if self.g.has_triple(head, r, tail):
                        options.append((r, head, tail))
                elif head is not None:
                    tails = self.g.observed_tails(head, r)
                    if tails.shape[0]:
                        options.append((r, head, self._choice(tails)))
                elif tail is not None:
                    heads = self.g.observed_tails(tail, KnowledgeGraph.reverse(r))
                    if heads.shape[0]:
                        options.append((r, self._choice(heads), tail))
                else:
                    heads, tails_arr = self.g.relation_pairs(r)
                    if heads.shape[0]:
                        at = int(self.rng.integers(0, heads.shape[0]))
                        options.append((r, int(heads[at]), int(tails_arr[at])))
            if not options:
                return False
            rel, head, tail = options[int(self.rng.integers(0, len(options)))]
        elif head is None and tail is None:
            heads, tails_arr = self.g.relation_pairs(rel)
            if not heads.shape[0]:
                return False
            at = int(self.rng.integers(0, heads.shape[0]))
            head, tail = int(heads[at]), int(tails_arr[at])
        elif head is None:
            heads = self.g.observed_tails(tail, KnowledgeGraph.reverse(rel))
            if not heads.shape[0]:
                return False
            head = self._choice(heads)
        elif tail is None:
            tails_arr = self.g.observed_tails(head, rel)
            if not tails_arr.shape[0]:
                return False
            tail = self._choice(tails_arr)
        elif not self.g.has_triple(head, rel, tail):
            return False
        self._store(atom, rel, head, tail)
        return True

    def _ground_negated(self, atom) -> None:
        # best effort: prefer grounding with a present triple so the
        # negation bites, fall back to uniform choices
        if not self._ground_positive(atom):
            if self._relation_value(atom.relation) is None:
                self._store(atom, int(self.rng.integers(0, self.g.num_relations)), None, None)
            head = self._term_value(atom.head)
            tail = self._term_value(atom.tail)
            self._store(
                atom,
                None,
                head if head is not None else int(self.rng.integers(0, self.g.num_entities)),
                tail if tail is not None else int(self.rng.integers(0, self.g.num_entities)),
            )

    def run(self) -> tuple[dict[str, int], dict[str, int]] | None:
        """Slot maps (constants, relations) or None when the walk dead-ends."""
        pending = [a for a in self.atoms if not a.negated]
        while pending:
            pending.sort(key=self._known_count, reverse=True)
            atom = pending.pop(0)
            if not self._ground_positive(atom):
                return None
        negated = [a for a in self.atoms if a.negated]
        while negated:
            negated.sort(key=self._known_count, reverse=True)
            self._ground_negated(negated.pop(0))
        constants = {k: v for k, v in self.values.items() if k.startswith("$c")}
        return constants, dict(self.rels)


def sample_queries(
    template: Template,
    g_observed: KnowledgeGraph,
    g_full: KnowledgeGraph,
    n: int,
    seed: int = 0,
    max_attempts: int | None = None,
) -> list[QueryInstance]:
    """Sample `n` distinct instances of one template.

    Slot values are chosen by a random grounding walk on the full graph;
    an attempt is kept only if it has at least one hard answer (reachable
    on the full graph but not the observed one).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    budget = max_attempts if max_attempts is not None else max(200, 60 * n)
    out: list[QueryInstance] = []
    seen_slots: set[tuple] = set()
    attempts = 0
    while len(out) < n and attempts < budget:
        attempts += 1
        walk = _GroundingWalk(template, g_full, rng)
        grounded = walk.run()
        if grounded is None:
            continue
        constants, relations = grounded
        signature = (
            tuple(sorted(constants.items())),
            tuple(sorted(relations.items())),
        )
        if signature in seen_slots:
            continue
        try:
            f = template.ground(g_full, constants, relations)
        except (KeyError, ValueError):
            continue
        full_answers = traversal_answers(f, g_full)
        easy = traversal_answers(f, g_observed)
        hard = sorted(full_answers - easy)
        if not hard:
            continue
        seen_slots.add(signature)
        out.append(
            QueryInstance(
                id=f"{template.name}-{len(out):04d}",
                type=template.name,
                formula=pretty(f, g_full),
                easy=tuple(sorted(easy)),
                hard=tuple(hard),
            )
        )
    if len(out) < n:
        raise SamplingError(template.name, attempts, len(out), n)
    return out


# ------------------------------------------------------------------ metrics


def score_ranking(ranking: AnswerRanking, instance: QueryInstance) -> dict:
    """Filtered metrics of one ranking against one instance.

    Every known answer except the one being ranked is removed from the
    competitor pool; a hard answer's rank is 1 + the number of competitors
    scoring strictly higher + half the number of exact ties.
    """
    if not instance.hard:
        raise ValueError(f"instance {instance.id!r} has no hard answers")
    scores = ranking.dense_scores()
    answers = np.fromiter(
        set(instance.easy) | set(instance.hard), dtype=np.int64
    )
    competitor = np.ones(ranking.num_entities, dtype=bool)
    competitor[answers] = False
    pool = scores[competitor]
    ranks = []
    for h in instance.hard:
        s = scores[h]
        above = int(np.count_nonzero(pool > s))
        ties = int(np.count_nonzero(pool == s))
        ranks.append(1.0 + above + 0.5 * ties)
    ranks_arr = np.asarray(ranks)
    out = {
        "rr": float(np.mean(1.0 / ranks_arr)),
        "ranks": [float(r) for r in ranks],
    }
    for k in HIT_KS:
        out[f"hit@{k}"] = float(np.mean(ranks_arr <= k))
    return out


@dataclass(frozen=True)
class MetricsReport:
    """Macro-averaged metrics: per query type, then the mean of type means."""

    per_type: dict[str, dict[str, float]]
    overall: dict[str, float]
    num_instances: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "num_instances": self.num_instances,
                "overall": self.overall,
                "per_type": self.per_type,
            },
            sort_keys=True,
            indent=2,
        )

    def to_text_table(self) -> str:
        metrics = ["mrr"] + [f"hit@{k}" for k in HIT_KS]
        header = f"{'type':<10}{'n':>6}" + "".join(f"{m:>10}" for m in metrics)
        lines = [header, "-" * len(header)]
        for name in sorted(self.per_type):
            row = self.per_type[name]
            cells = "".join(f"{row[m]:>10.4f}" for m in metrics)
            lines.append(f"{name:<10}{int(row['instances']):>6}{cells}")
        cells = "".join(f"{self.overall[m]:>10.4f}" for m in metrics)
        lines.append(f"{'overall':<10}{self.num_instances:>6}{cells}")
        return "\n".join(lines)


def evaluate(
    instances: Sequence[QueryInstance],
    provider: TruthValueProvider,
    config: SearchConfig | None = None,
    global_scorers: Mapping[str, GlobalScorer] | None = None,
    workers: int = 1,
) -> MetricsReport:
    """Answer every instance and aggregate filtered metrics.

    `global_scorers`, when given, maps instance ids to coarse rankers used
    for the free variable's domain (instances without an entry fall back
    to locally computed indices).  `workers` parallelizes across instances;
    the report itself is deterministic either way.
    """
    if not instances:
        raise ValueError("no instances to evaluate")
    config = config or SearchConfig()
    graph = provider.graph

    def run_one(inst: QueryInstance) -> dict:
        f = parse_formula(inst.formula, graph)
        scorer = global_scorers.get(inst.id) if global_scorers else None
        ranking = answer_formula(f, provider, config, global_scorer=scorer)
        return score_ranking(ranking, inst)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, instances))
    else:
        results = [run_one(inst) for inst in instances]

    buckets: dict[str, list[dict]] = {}
    for inst, res in zip(instances, results):
        buckets.setdefault(inst.type, []).append(res)
    metrics = ["rr"] + [f"hit@{k}" for k in HIT_KS]
    per_type: dict[str, dict[str, float]] = {}
    for name, rows in buckets.items():
        entry = {"instances": float(len(rows))}
        for m in metrics:
            key = "mrr" if m == "rr" else m
            entry[key] = float(np.mean([row[m] for row in rows]))
        per_type[name] = entry
    overall = {}
    for m in metrics:
        key = "mrr" if m == "rr" else m
        overall[key] = float(np.mean([per_type[t][key] for t in per_type]))
    return MetricsReport(
        per_type=per_type, overall=overall, num_instances=len(instances)
    )


def measure_qps(
    instances: Sequence[QueryInstance],
    provider: TruthValueProvider,
    config: SearchConfig | None = None,
    repetitions: int = 3,
) -> dict:
    """Single-threaded throughput (queries per second), median over
    repetitions, reported per query type and overall.

    Parsing happens once, untimed, and one untimed warm-up pass runs first.
    """
    if not instances:
        raise ValueError("no instances to measure")
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    config = config or SearchConfig()
    graph = provider.graph
    by_type: dict[str, list] = {}
    for inst in instances:
        by_type.setdefault(inst.type, []).append(parse_formula(inst.formula, graph))
    for formulas in by_type.values():
        for f in formulas:
            answer_formula(f, provider, config)
    type_seconds: dict[str, list[float]] = {name: [] for name in by_type}
    totals = []
    for _ in range(repetitions):
        total = 0.0
        for name, formulas in by_type.items():
            tick = time.perf_counter()
            for f in formulas:
                answer_formula(f, provider, config)
            elapsed = time.perf_counter() - tick
            type_seconds[name].append(elapsed)
            total += elapsed
        totals.append(total)
    per_type = {
        name: len(by_type[name]) / max(median(times), 1e-9)
        for name, times in type_seconds.items()
    }
    return {
        "per_type": per_type,
        "overall": len(instances) / max(median(totals), 1e-9),
        "repetitions": repetitions,
    }
