"""Formula text -> DNF query graphs.

Grammar (whitespace-insensitive):

    formula  := [ "EX" name ("," name)* "." ] expr
    expr     := conj ("|" conj)*
    conj     := unit ("&" unit)*
    unit     := "(" expr ")" | "!" atom | atom
    atom     := relation "(" term "," term ")"

"y" is the reserved free-variable name.  Names declared by the "EX"
prefix are existential variables; every other bare identifier is an
entity constant resolved against the graph's symbol table.  A relation
written with a leading "~" means the reverse direction.  "!" applies to
atoms only; "ALL" is recognized and rejected (only existential queries
are supported).  Template files may additionally use "$c1"/"$r1" style
placeholders for constants and relations, filled in by Template.ground.

Conjunctions over disjunctions are distributed into disjunctive normal
form left to right; input already in DNF parses verbatim.  Atoms whose
endpoints are both constants are evaluated against the graph at parse
time and folded into the conjunct's scalar truth multiplier.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Union

from .formula import (
    FREE_VARIABLE_NAME,
    Constant,
    EFO1Formula,
    QueryEdge,
    QueryGraph,
    Term,
    Variable,
    check_connected,
)
from .kg import KnowledgeGraph, UnknownSymbolError

__all__ = [
    "FormulaSyntaxError",
    "UnknownNameError",
    "FreeVariableError",
    "UniversalQuantifierError",
    "parse_formula",
    "Template",
    "TemplateAtom",
    "TemplateCatalog",
    "read_template_catalog",
    "load_templates",
    "BUILTIN_CATALOGS",
]


class FormulaSyntaxError(ValueError):
    """Malformed formula text; `position` is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownNameError(ValueError):
    """A name in the formula does not resolve against the symbol table."""

    def __init__(self, kind: str, name: str, position: int):
        hint = ""
        if kind == "entity":
            hint = "; if this was meant as a variable, declare it with EX (only 'y' is free)"
        super().__init__(f"unknown {kind} name {name!r} at position {position}{hint}")
        self.kind = kind
        self.name = name
        self.position = position


class FreeVariableError(ValueError):
    """The formula misuses the free variable "y"."""


class UniversalQuantifierError(ValueError):
    """The formula uses "ALL"; only existential quantification is supported."""


# ---------------------------------------------------------------- tokenizer

# a "." joins a name only between name characters, so the quantifier
# prefix terminator ("EX x1. ...") stays its own token
_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<placeholder>\$[cr][0-9]+)
  | (?P<name>~?[A-Za-z0-9_](?:[A-Za-z0-9_\-/:]|\.(?=[A-Za-z0-9_]))*)
  | (?P<punct>[(),.&|!])
    """,
    re.VERBOSE,
)

_KEYWORDS = frozenset({"EX", "ALL"})


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # "name", "placeholder", "punct", "end"
    text: str
    position: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


# ---------------------------------------------------- AST and parsing proper


@dataclass(frozen=True, slots=True)
class _Atom:
    negated: bool
    relation: _Token
    head: _Token
    tail: _Token


@dataclass(frozen=True, slots=True)
class _And:
    items: tuple


@dataclass(frozen=True, slots=True)
class _Or:
    items: tuple


@dataclass(frozen=True, slots=True)
class _Ast:
    declared: tuple[str, ...]
    body: Union[_Atom, _And, _Or]


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.at = 0

    def peek(self) -> _Token:
        return self.tokens[self.at]

    def advance(self) -> _Token:
        tok = self.tokens[self.at]
        self.at += 1
        return tok

    def expect_punct(self, char: str) -> _Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != char:
            raise FormulaSyntaxError(f"expected {char!r}, found {tok.text or 'end of input'!r}", tok.position)
        return self.advance()

    def parse(self) -> _Ast:
        declared = self.quantifier_prefix()
        body = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise FormulaSyntaxError(f"unexpected trailing {tok.text!r}", tok.position)
        return _Ast(declared, body)

    def quantifier_prefix(self) -> tuple[str, ...]:
        tok = self.peek()
        if tok.kind != "name" or tok.text not in _KEYWORDS:
            return ()
        if tok.text == "ALL":
            raise UniversalQuantifierError(
                "universal quantifier 'ALL' is not supported; only existential queries (EX) are accepted"
            )
        self.advance()
        names = []
        while True:
            name_tok = self.peek()
            if name_tok.kind != "name" or name_tok.text in _KEYWORDS or name_tok.text.startswith("~"):
                raise FormulaSyntaxError("expected a variable name after EX", name_tok.position)
            self.advance()
            if name_tok.text == FREE_VARIABLE_NAME:
                raise FreeVariableError("the free variable 'y' cannot be quantified")
            if name_tok.text in names:
                raise FormulaSyntaxError(f"variable {name_tok.text!r} declared twice", name_tok.position)
            names.append(name_tok.text)
            tok = self.peek()
            if tok.kind == "punct" and tok.text == ",":
                self.advance()
                continue
            break
        self.expect_punct(".")
        return tuple(names)

    def expr(self):
        items = [self.conj()]
        while self.peek().kind == "punct" and self.peek().text == "|":
            self.advance()
            items.append(self.conj())
        if len(items) == 1:
            return items[0]
        return _Or(tuple(items))

    def conj(self):
        items = [self.unit()]
        while self.peek().kind == "punct" and self.peek().text == "&":
            self.advance()
            items.append(self.unit())
        if len(items) == 1:
            return items[0]
        return _And(tuple(items))

    def unit(self):
        tok = self.peek()
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            inner = self.expr()
            self.expect_punct(")")
            return inner
        if tok.kind == "punct" and tok.text == "!":
            self.advance()
            nxt = self.peek()
            if nxt.kind == "punct":
                raise FormulaSyntaxError("'!' negates a single atom, not a group", nxt.position)
            return self.atom(negated=True)
        return self.atom(negated=False)

    def atom(self, negated: bool) -> _Atom:
        rel = self.peek()
        if rel.kind not in ("name", "placeholder") or (rel.kind == "name" and rel.text in _KEYWORDS):
            raise FormulaSyntaxError(
                f"expected a relation name, found {rel.text or 'end of input'!r}", rel.position
            )
        self.advance()
        self.expect_punct("(")
        head = self.term()
        self.expect_punct(",")
        tail = self.term()
        self.expect_punct(")")
        return _Atom(negated, rel, head, tail)

    def term(self) -> _Token:
        tok = self.peek()
        if tok.kind not in ("name", "placeholder") or (tok.kind == "name" and tok.text in _KEYWORDS):
            raise FormulaSyntaxError(f"expected a term, found {tok.text or 'end of input'!r}", tok.position)
        if tok.kind == "name" and tok.text.startswith("~"):
            raise FormulaSyntaxError("'~' marks a reverse relation and cannot prefix a term", tok.position)
        return self.advance()


def _parse_ast(text: str) -> _Ast:
    ast = _Parser(_tokenize(text)).parse()
    used = set()
    _collect_names(ast.body, used)
    for name in ast.declared:
        if name not in used:
            raise FormulaSyntaxError(f"declared variable {name!r} is never used", 0)
    return ast


def _collect_names(node, out: set) -> None:
    if isinstance(node, _Atom):
        out.add(node.head.text)
        out.add(node.tail.text)
        return
    for item in node.items:
        _collect_names(item, out)


def _dnf(node) -> list[list[_Atom]]:
    """Distribute conjunction over disjunction, preserving left-to-right
    order; already-DNF input comes back verbatim."""
    if isinstance(node, _Atom):
        return [[node]]
    if isinstance(node, _Or):
        out = []
        for item in node.items:
            out.extend(_dnf(item))
        return out
    out = []
    for combo in itertools.product(*(_dnf(item) for item in node.items)):
        merged = []
        for part in combo:
            merged.extend(part)
        out.append(merged)
    return out


# ------------------------------------------------------------- resolution


def _resolve_conjunct(
    atoms: list[_Atom],
    declared: frozenset[str],
    graph: KnowledgeGraph,
    constants: Mapping[str, int],
    relations: Mapping[str, int],
) -> QueryGraph:
    edges = []
    prefix = 1.0

    def term_of(tok: _Token) -> Term:
        if tok.kind == "placeholder":
            if tok.text.startswith("$r"):
                raise FormulaSyntaxError(f"relation placeholder {tok.text!r} used as a term", tok.position)
            try:
                return Constant(constants[tok.text])
            except KeyError:
                raise UnknownNameError("placeholder", tok.text, tok.position) from None
        if tok.text == FREE_VARIABLE_NAME or tok.text in declared:
            return Variable(tok.text)
        try:
            return Constant(graph.entity_id(tok.text))
        except UnknownSymbolError:
            raise UnknownNameError("entity", tok.text, tok.position) from None

    def relation_of(tok: _Token) -> int:
        if tok.kind == "placeholder":
            if tok.text.startswith("$c"):
                raise FormulaSyntaxError(f"constant placeholder {tok.text!r} used as a relation", tok.position)
            try:
                return relations[tok.text]
            except KeyError:
                raise UnknownNameError("placeholder", tok.text, tok.position) from None
        name = tok.text
        reverse = name.startswith("~")
        try:
            rid = graph.relation_id(name[1:] if reverse else name)
        except UnknownSymbolError:
            raise UnknownNameError("relation", tok.text, tok.position) from None
        return KnowledgeGraph.reverse(rid) if reverse else rid

    for atom in atoms:
        head = term_of(atom.head)
        tail = term_of(atom.tail)
        relation = relation_of(atom.relation)
        if isinstance(head, Constant) and isinstance(tail, Constant):
            truth = 1.0 if graph.has_triple(head.entity, relation, tail.entity) else 0.0
            if atom.negated:
                truth = 1.0 - truth
            prefix = min(prefix, truth)
            continue
        edges.append(QueryEdge(head, relation, tail, atom.negated))

    q = QueryGraph(edges, prefix)
    if not q.has_free_variable:
        raise FreeVariableError(
            "every disjunct must constrain the free variable 'y'; one conjunct does not mention it"
        )
    check_connected(q)
    return q


def _resolve(
    ast: _Ast,
    graph: KnowledgeGraph,
    constants: Mapping[str, int] | None = None,
    relations: Mapping[str, int] | None = None,
) -> EFO1Formula:
    declared = frozenset(ast.declared)
    conjuncts = [
        _resolve_conjunct(atoms, declared, graph, constants or {}, relations or {})
        for atoms in _dnf(ast.body)
    ]
    return EFO1Formula(tuple(conjuncts))


def parse_formula(text: str, graph: KnowledgeGraph) -> EFO1Formula:
    """Parse formula text into a DNF formula over `graph`'s symbols.

    Raises FormulaSyntaxError, UnknownNameError, FreeVariableError,
    UniversalQuantifierError, or DisconnectedQueryError.  Placeholders are
    rejected here; they are only legal inside templates.
    """
    ast = _parse_ast(text)
    return _resolve(ast, graph)


# -------------------------------------------------------------- templates


def _collect_placeholders(node, out: set) -> None:
    if isinstance(node, _Atom):
        for tok in (node.relation, node.head, node.tail):
            if tok.kind == "placeholder":
                out.add(tok.text)
        return
    for item in node.items:
        _collect_placeholders(item, out)


def _slot_key(slot: str) -> tuple[str, int]:
    return (slot[1], int(slot[2:]))


@dataclass(frozen=True, slots=True)
class TemplateAtom:
    """One atom of a template's normal form, with slots still unfilled.

    Terms and the relation are raw strings: "$cN"/"$rN" slots, variable
    names, or literal symbol names ("~name" marks a reversed relation).
    """

    negated: bool
    relation: str
    head: str
    tail: str


class Template:
    """A named query shape with $cN constant and $rN relation slots.

    The text is parsed once, graph-independently; ground() fills the slots
    against a concrete graph and returns the resolved formula.
    """

    __slots__ = ("name", "text", "_ast", "constant_slots", "relation_slots")

    def __init__(self, name: str, text: str):
        self.name = name
        self.text = text
        self._ast = _parse_ast(text)
        slots: set[str] = set()
        _collect_placeholders(self._ast.body, slots)
        self.constant_slots = tuple(sorted((s for s in slots if s[1] == "c"), key=_slot_key))
        self.relation_slots = tuple(sorted((s for s in slots if s[1] == "r"), key=_slot_key))

    def ground(
        self,
        graph: KnowledgeGraph,
        constants: Mapping[str, int | str],
        relations: Mapping[str, int | str],
    ) -> EFO1Formula:
        """Substitute entities/relations for the slots and resolve.

        Mapping values may be ids or names; relation names may carry the
        "~" reverse prefix.
        """
        const_ids = {}
        for slot in self.constant_slots:
            if slot not in constants:
                raise KeyError(f"template {self.name!r} needs a value for {slot}")
            value = constants[slot]
            const_ids[slot] = graph.entity_id(value) if isinstance(value, str) else int(value)
        rel_ids = {}
        for slot in self.relation_slots:
            if slot not in relations:
                raise KeyError(f"template {self.name!r} needs a value for {slot}")
            value = relations[slot]
            if isinstance(value, str):
                reverse = value.startswith("~")
                rid = graph.relation_id(value[1:] if reverse else value)
                rel_ids[slot] = KnowledgeGraph.reverse(rid) if reverse else rid
            else:
                rel_ids[slot] = int(value)
        return _resolve(self._ast, graph, const_ids, rel_ids)

    @property
    def variables(self) -> tuple[str, ...]:
        """Existential variable names declared by the template."""
        return tuple(self._ast.declared)

    def structure(self) -> tuple[tuple[TemplateAtom, ...], ...]:
        """Atom descriptors per disjunct of the template's normal form,
        independent of any graph or slot values."""
        out = []
        for atoms in _dnf(self._ast.body):
            out.append(
                tuple(
                    TemplateAtom(a.negated, a.relation.text, a.head.text, a.tail.text)
                    for a in atoms
                )
            )
        return tuple(out)

    def __repr__(self) -> str:
        return f"Template({self.name!r}, {self.text!r})"


class TemplateCatalog:
    """Parsed template file: implemented templates plus the entries the
    grammar rejects (universally quantified shapes), kept for reporting."""

    def __init__(self, templates: dict[str, Template], rejected: dict[str, str]):
        self.templates = dict(templates)
        self.rejected = dict(rejected)

    def __getitem__(self, name: str) -> Template:
        return self.templates[name]

    def __contains__(self, name: str) -> bool:
        return name in self.templates

    def __iter__(self) -> Iterator[Template]:
        return iter(self.templates.values())

    def __len__(self) -> int:
        return len(self.templates)

    def names(self) -> tuple[str, ...]:
        return tuple(self.templates)

    def merged_with(self, other: "TemplateCatalog") -> "TemplateCatalog":
        """Later catalogs win on name clashes; a name implemented anywhere
        in the merge is dropped from the rejected map."""
        templates = {**self.templates, **other.templates}
        rejected = {
            name: why
            for name, why in {**self.rejected, **other.rejected}.items()
            if name not in templates
        }
        return TemplateCatalog(templates, rejected)


def read_template_catalog(source: str | Path | Iterable[str]) -> TemplateCatalog:
    """Read "name<TAB>formula" lines; '#' comments and blanks are skipped.

    Entries whose formula needs a universal quantifier are collected under
    .rejected instead of failing the whole file.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_template_catalog(list(fh))
    templates: dict[str, Template] = {}
    rejected: dict[str, str] = {}
    for line_number, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        name, sep, text = line.partition("\t")
        if not sep or not name.strip() or not text.strip():
            raise ValueError(f"line {line_number}: expected 'name<TAB>formula', got {line!r}")
        name = name.strip()
        if name in templates or name in rejected:
            raise ValueError(f"line {line_number}: duplicate template name {name!r}")
        try:
            templates[name] = Template(name, text.strip())
        except UniversalQuantifierError as exc:
            rejected[name] = str(exc)
    return TemplateCatalog(templates, rejected)


BUILTIN_CATALOGS = ("betae", "real_efo1")


def load_templates(which: str = "all") -> TemplateCatalog:
    """Load a built-in catalog: "betae", "real_efo1", or "all" (merged)."""
    from importlib import resources

    if which == "all":
        merged = load_templates(BUILTIN_CATALOGS[0])
        for name in BUILTIN_CATALOGS[1:]:
            merged = merged.merged_with(load_templates(name))
        return merged
    if which not in BUILTIN_CATALOGS:
        raise ValueError(f"unknown catalog {which!r}; expected one of {BUILTIN_CATALOGS + ('all',)}")
    text = resources.files("symquery.templates").joinpath(f"{which}.tsv").read_text("utf-8")
    return read_template_catalog(text.splitlines())
