"""Symbolic search over incomplete knowledge graphs.

Answers existential first-order queries with one free variable by fuzzy
truth-value propagation: calibrated neural scores (or graph lookups)
supply per-atom truths, domains are cut to the top-k locally plausible
entities, acyclic parts are eliminated exactly and cyclic cores are
assigned by quadratic local search.
"""

from .algebra import (
    FuzzyVector,
    ScoreMatrix,
    TNormKind,
    fold_tnorm,
    max_reduce,
    negate,
    tconorm,
    tnorm,
)
from .engine import (
    AnswerRanking,
    SearchConfig,
    SearchState,
    SearchTelemetry,
    answer_conjunct,
    answer_formula,
    local_optimize,
    remove_const_node,
    remove_leaf_node,
)
from .estimator import QueryAnswerer
from .evaluation import (
    MetricsReport,
    QueryInstance,
    SamplingError,
    evaluate,
    make_synthetic_kg,
    measure_qps,
    read_instances,
    sample_queries,
    score_ranking,
    split_graph,
    write_instances,
)
from .formula import (
    FREE_VARIABLE_NAME,
    Constant,
    DisconnectedQueryError,
    EFO1Formula,
    QueryEdge,
    QueryGraph,
    Variable,
    find_leaves,
    is_cyclic,
    order_by_distance,
    pretty,
    swap_free_variable,
)
from .indices import (
    DomainAssignment,
    GlobalScorer,
    PrecomputedGlobalScorer,
    cut_domain,
    load_global_rankings,
    local_indices,
    local_scores,
    oracle_global_scorer,
    top_k_by_score,
)
from .kg import (
    KnowledgeGraph,
    MalformedTripleError,
    UnknownSymbolError,
    load_triples,
)
from .oracle import (
    BudgetExceededError,
    OracleResult,
    brute_force,
    brute_force_formula,
    objective_at,
    traversal_answers,
)
from .parsing import (
    FormulaSyntaxError,
    FreeVariableError,
    Template,
    TemplateCatalog,
    UniversalQuantifierError,
    UnknownNameError,
    load_templates,
    parse_formula,
    read_template_catalog,
)
from .providers import (
    CalibratedProvider,
    DenseScoreStore,
    ExactProvider,
    ScoreFileError,
    SparseScoreStore,
    TruthValueProvider,
    build_cache,
    read_relation_tail_table,
    read_score_file,
    write_relation_tail_table,
    write_score_file,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # algebra
    "TNormKind", "tnorm", "tconorm", "negate", "fold_tnorm",
    "FuzzyVector", "ScoreMatrix", "max_reduce",
    # graph
    "KnowledgeGraph", "load_triples", "MalformedTripleError", "UnknownSymbolError",
    # query structure and parsing
    "FREE_VARIABLE_NAME", "Constant", "Variable", "QueryEdge", "QueryGraph",
    "EFO1Formula", "find_leaves", "order_by_distance", "is_cyclic",
    "swap_free_variable", "pretty", "DisconnectedQueryError",
    "parse_formula", "FormulaSyntaxError", "UnknownNameError",
    "FreeVariableError", "UniversalQuantifierError",
    "Template", "TemplateCatalog", "read_template_catalog", "load_templates",
    # providers
    "TruthValueProvider", "ExactProvider", "CalibratedProvider",
    "DenseScoreStore", "SparseScoreStore", "build_cache", "ScoreFileError",
    "read_score_file", "write_score_file",
    "read_relation_tail_table", "write_relation_tail_table",
    # domain reduction
    "DomainAssignment", "GlobalScorer", "PrecomputedGlobalScorer",
    "local_scores", "local_indices", "top_k_by_score", "cut_domain",
    "oracle_global_scorer", "load_global_rankings",
    # engine
    "SearchConfig", "SearchTelemetry", "SearchState", "AnswerRanking",
    "remove_const_node", "remove_leaf_node", "local_optimize",
    "answer_conjunct", "answer_formula",
    # oracles
    "brute_force", "brute_force_formula", "objective_at",
    "traversal_answers", "OracleResult", "BudgetExceededError",
    # evaluation
    "QueryInstance", "read_instances", "write_instances",
    "make_synthetic_kg", "split_graph", "sample_queries", "SamplingError",
    "score_ranking", "MetricsReport", "evaluate", "measure_qps",
    # estimator facade
    "QueryAnswerer",
]
