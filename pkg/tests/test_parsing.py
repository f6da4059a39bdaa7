"""Formula grammar, normal-form expansion, templates, and catalogs."""

import pytest

from symquery import (
    Constant,
    DisconnectedQueryError,
    FormulaSyntaxError,
    FreeVariableError,
    KnowledgeGraph,
    Template,
    TemplateCatalog,
    UniversalQuantifierError,
    UnknownNameError,
    Variable,
    load_templates,
    parse_formula,
    pretty,
    read_template_catalog,
)


@pytest.fixture(scope="module")
def graph():
    return KnowledgeGraph.from_named_triples(
        [
            ("a", "r", "b"),
            ("a", "r", "c"),
            ("b", "s", "c"),
            ("c", "t", "a"),
            ("v1.0-x/y:z", "r", "a"),
        ]
    )


class TestGrammar:
    """Formulas are an optional EX prefix over &/| combinations of atoms."""

    def test_single_atom(self, graph):
        f = parse_formula("r(a, y)", graph)
        assert len(f) == 1
        (q,) = f
        assert len(q.edges) == 1
        edge = q.edges[0]
        assert edge.head == Constant(graph.entity_id("a"))
        assert edge.tail == Variable("y")
        assert edge.relation == graph.relation_id("r")
        assert not edge.negated
        assert q.existential_names == ()

    def test_existential_chain(self, graph):
        f = parse_formula("EX x1, x2. r(a, x1) & s(x1, x2) & t(x2, y)", graph)
        (q,) = f
        assert q.existential_names == ("x1", "x2")
        assert len(q.edges) == 3

    def test_negated_atom(self, graph):
        f = parse_formula("r(a, y) & !s(b, y)", graph)
        (q,) = f
        assert [e.negated for e in q.edges] == [False, True]

    def test_reverse_relation_marker(self, graph):
        f = parse_formula("~r(y, a)", graph)
        (q,) = f
        assert q.edges[0].relation == KnowledgeGraph.reverse(graph.relation_id("r"))

    def test_self_loop(self, graph):
        f = parse_formula("r(y, y)", graph)
        (q,) = f
        assert q.edges[0].is_self_loop

    def test_parallel_edges_kept(self, graph):
        f = parse_formula("r(a, y) & s(a, y)", graph)
        (q,) = f
        assert len(q.edges) == 2

    def test_constant_only_atom_folds_to_prefix(self, graph):
        (q,) = parse_formula("r(a, b) & s(a, y)", graph)
        assert q.scalar_prefix == 1.0
        assert len(q.edges) == 1
        (q,) = parse_formula("r(b, a) & s(a, y)", graph)
        assert q.scalar_prefix == 0.0
        (q,) = parse_formula("!r(b, a) & s(a, y)", graph)
        assert q.scalar_prefix == 1.0

    def test_whitespace_insensitive(self, graph):
        # a dot between name characters joins a dotted name, so the
        # declaration terminator needs trailing space or punctuation
        tight = parse_formula("EX x1. r(a,x1)&s(x1,y)", graph)
        loose = parse_formula("EX  x1 .  r( a , x1 )  &  s( x1 , y )", graph)
        assert pretty(tight, graph) == pretty(loose, graph)

    def test_punctuated_entity_names(self, graph):
        (q,) = parse_formula("r(v1.0-x/y:z, y)", graph)
        assert q.edges[0].head == Constant(graph.entity_id("v1.0-x/y:z"))


class TestNormalForm:
    def test_disjunction_splits_conjuncts(self, graph):
        f = parse_formula("r(a, y) | s(b, y)", graph)
        assert len(f) == 2
        assert all(len(q.edges) == 1 for q in f)

    def test_conjunction_distributes_left_to_right(self, graph):
        f = parse_formula("(r(a, y) | s(b, y)) & (t(c, y) | r(c, y))", graph)
        assert len(f) == 4
        rels = [tuple(e.relation for e in q.edges) for q in f]
        r, s, t = (graph.relation_id(n) for n in "rst")
        assert rels == [(r, t), (r, r), (s, t), (s, r)]

    def test_nested_groups(self, graph):
        f = parse_formula("r(a, y) & (s(b, y) | (t(c, y) & r(c, y)))", graph)
        assert [len(q.edges) for q in f] == [2, 3]


class TestErrors:
    """Failures carry the offending position or name."""

    def test_missing_comma(self, graph):
        with pytest.raises(FormulaSyntaxError) as info:
            parse_formula("r(a y)", graph)
        assert info.value.position == 4

    def test_trailing_tokens(self, graph):
        with pytest.raises(FormulaSyntaxError, match="trailing"):
            parse_formula("r(a, y) b", graph)

    def test_unexpected_character(self, graph):
        with pytest.raises(FormulaSyntaxError, match="unexpected character"):
            parse_formula("r(a, y) @ s(b, y)", graph)

    def test_negated_group_rejected(self, graph):
        with pytest.raises(FormulaSyntaxError, match="single atom"):
            parse_formula("!(r(a, y) & s(b, y))", graph)

    def test_tilde_on_term_rejected(self, graph):
        with pytest.raises(FormulaSyntaxError, match="reverse relation"):
            parse_formula("r(~a, y)", graph)

    def test_universal_quantifier_rejected(self, graph):
        with pytest.raises(UniversalQuantifierError):
            parse_formula("ALL x1. r(x1, y)", graph)

    def test_free_variable_cannot_be_quantified(self, graph):
        with pytest.raises(FreeVariableError):
            parse_formula("EX y. r(a, y)", graph)

    def test_unused_declaration_rejected(self, graph):
        with pytest.raises(FormulaSyntaxError, match="never used"):
            parse_formula("EX x1. r(a, y)", graph)

    def test_duplicate_declaration_rejected(self, graph):
        with pytest.raises(FormulaSyntaxError, match="twice"):
            parse_formula("EX x1, x1. r(a, x1) & s(x1, y)", graph)

    def test_unknown_entity(self, graph):
        with pytest.raises(UnknownNameError) as info:
            parse_formula("r(nope, y)", graph)
        assert info.value.kind == "entity"
        assert info.value.name == "nope"

    def test_unknown_relation(self, graph):
        with pytest.raises(UnknownNameError) as info:
            parse_formula("nope(a, y)", graph)
        assert info.value.kind == "relation"

    def test_undeclared_variable_reads_as_entity(self, graph):
        # without a declaration, "x1" is just an unknown entity name
        with pytest.raises(UnknownNameError):
            parse_formula("r(a, x1) & s(x1, y)", graph)

    def test_conjunct_must_mention_free_variable(self, graph):
        with pytest.raises(FreeVariableError):
            parse_formula("EX x1. r(a, x1)", graph)
        with pytest.raises(FreeVariableError):
            parse_formula("EX x1. (r(a, x1) & s(x1, y)) | r(a, x1)", graph)

    def test_disconnected_query_rejected(self, graph):
        with pytest.raises(DisconnectedQueryError):
            parse_formula("EX x1, x2. r(a, y) & r(x1, x2)", graph)

    def test_placeholders_rejected_outside_templates(self, graph):
        with pytest.raises(UnknownNameError) as info:
            parse_formula("$r1(a, y)", graph)
        assert info.value.kind == "placeholder"
        with pytest.raises(UnknownNameError):
            parse_formula("r($c1, y)", graph)


class TestTemplates:
    def test_slots_sorted_numerically(self):
        t = Template("t", "$r2($c1, y) & $r1($c10, y) & $r1($c2, y)")
        assert t.constant_slots == ("$c1", "$c2", "$c10")
        assert t.relation_slots == ("$r1", "$r2")

    def test_ground_with_names(self, graph):
        t = Template("t", "$r1($c1, y)")
        f = t.ground(graph, {"$c1": "a"}, {"$r1": "~r"})
        (q,) = f
        assert q.edges[0].head == Constant(graph.entity_id("a"))
        assert q.edges[0].relation == KnowledgeGraph.reverse(graph.relation_id("r"))

    def test_ground_with_ids(self, graph):
        t = Template("t", "$r1($c1, y)")
        f = t.ground(graph, {"$c1": 2}, {"$r1": 3})
        (q,) = f
        assert q.edges[0].head == Constant(2)
        assert q.edges[0].relation == 3

    def test_missing_slot_raises(self, graph):
        t = Template("t", "$r1($c1, y)")
        with pytest.raises(KeyError):
            t.ground(graph, {}, {"$r1": 0})
        with pytest.raises(KeyError):
            t.ground(graph, {"$c1": 0}, {})

    def test_wrong_slot_kind_raises(self, graph):
        t = Template("t", "$c1($c2, y)")
        with pytest.raises(FormulaSyntaxError, match="constant placeholder"):
            t.ground(graph, {"$c1": 0, "$c2": 0}, {})
        t = Template("t", "$r1($r2, y)")
        with pytest.raises(FormulaSyntaxError, match="relation placeholder"):
            t.ground(graph, {}, {"$r1": 0, "$r2": 0})

    def test_variables_and_structure(self):
        t = Template("2p", "EX x1. $r1($c1, x1) & $r2(x1, y)")
        assert t.variables == ("x1",)
        ((a1, a2),) = t.structure()
        assert (a1.relation, a1.head, a1.tail, a1.negated) == ("$r1", "$c1", "x1", False)
        assert (a2.relation, a2.head, a2.tail, a2.negated) == ("$r2", "x1", "y", False)

    def test_structure_expands_disjunction(self):
        t = Template("2u", "$r1($c1, y) | $r2($c2, y)")
        parts = t.structure()
        assert len(parts) == 2
        assert all(len(atoms) == 1 for atoms in parts)


class TestCatalogs:
    LINES = [
        "# shapes",
        "",
        "one\t$r1($c1, y)",
        "two\tEX x1. $r1($c1, x1) & $r2(x1, y)",
        "all_shape\tALL x1. $r1(x1, y)",
    ]

    def test_read_catalog(self):
        cat = read_template_catalog(self.LINES)
        assert cat.names() == ("one", "two")
        assert "one" in cat and "all_shape" not in cat
        assert len(cat) == 2
        assert {t.name for t in cat} == {"one", "two"}
        assert cat["two"].variables == ("x1",)

    def test_universal_entries_collected_not_raised(self):
        cat = read_template_catalog(self.LINES)
        assert set(cat.rejected) == {"all_shape"}
        assert "universal" in cat.rejected["all_shape"]

    def test_duplicate_name_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            read_template_catalog(["one\tr($c1, y)", "one\ts($c1, y)"])

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError, match="name<TAB>formula"):
            read_template_catalog(["just a name"])

    def test_merged_with_later_wins(self):
        first = read_template_catalog(["one\t$r1($c1, y)", "gone\tALL x1. $r1(x1, y)"])
        second = read_template_catalog(["one\t$r2($c1, y)", "gone\t$r1($c1, y)"])
        merged = first.merged_with(second)
        assert merged["one"].text == "$r2($c1, y)"
        assert "gone" in merged
        assert merged.rejected == {}

    def test_builtin_catalogs(self):
        betae = load_templates("betae")
        real = load_templates("real_efo1")
        both = load_templates("all")
        assert len(both) == len(betae) + len(real) == 23
        for name in ("1p", "2p", "3p", "2i", "2u", "up", "2in", "pin"):
            assert name in betae
        for name in ("pni", "2il", "3il", "2m", "3mp", "im", "3c", "3cm"):
            assert name in real
        # the classic pni shape needs a universal quantifier; the merged
        # catalog supersedes it with the existential reformulation
        assert set(betae.rejected) == {"pni"}
        assert real.rejected == {} and both.rejected == {}

    def test_unknown_catalog_rejected(self):
        with pytest.raises(ValueError):
            load_templates("nope")


class TestRoundTrip:
    """pretty() output re-parses to a formula that prints identically."""

    CASES = [
        "r(a, y)",
        "~r(y, a)",
        "r(y, y)",
        "r(a, y) & !s(b, y)",
        "EX x1. r(a, x1) & s(x1, y)",
        "EX x1, x2. r(a, x1) & s(x1, x2) & t(x2, y) & r(x1, y)",
        "r(a, y) | s(b, y)",
        "EX x1. (r(a, x1) & s(x1, y)) | (t(c, y) & !r(a, y))",
    ]

    @pytest.mark.parametrize("text", CASES)
    def test_round_trip(self, graph, text):
        printed = pretty(parse_formula(text, graph), graph)
        again = pretty(parse_formula(printed, graph), graph)
        assert again == printed

    def test_builtin_templates_round_trip(self, graph):
        rels = {f"$r{i}": "r" for i in range(1, 6)}
        consts = {f"$c{i}": "a" for i in range(1, 6)}
        for template in load_templates("all"):
            f = template.ground(graph, consts, rels)
            printed = pretty(f, graph)
            assert pretty(parse_formula(printed, graph), graph) == printed
