"""Knowledge-graph store: symbol tables, reverse-closed triple index, and
the TSV serialization format.

Every base relation is materialized in both directions at load time: base
relation number ``i`` gets id ``2*i`` and its reverse gets ``2*i + 1``, so
``reverse(r) == r ^ 1`` and ids stay contiguous in ``[0, 2 * num_base)``.
Any head-side question about a relation can then be asked as a tail query
on the reverse id.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "KnowledgeGraph",
    "load_triples",
    "MalformedTripleError",
    "UnknownSymbolError",
]

_EMPTY = np.empty(0, dtype=np.int64)
_EMPTY.flags.writeable = False


class MalformedTripleError(ValueError):
    """A TSV line did not contain exactly three tab-separated fields."""

    def __init__(self, line_number: int, line: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: expected 3 tab-separated fields, got {line!r}")


class UnknownSymbolError(ValueError):
    """Strict loading hit an entity or relation outside the symbol tables."""

    def __init__(self, kind: str, name: str, line_number: int | None = None):
        self.kind = kind
        self.name = name
        self.line_number = line_number
        where = f" (line {line_number})" if line_number is not None else ""
        super().__init__(f"unknown {kind} {name!r}{where}")


class KnowledgeGraph:
    """Immutable triple store with reverse closure and name/id tables."""

    def __init__(
        self,
        entity_names: Sequence[str],
        relation_names: Sequence[str],
        base_triples: Iterable[tuple[int, int, int]],
    ):
        """`base_triples` holds (head_id, base_relation_index, tail_id) rows;
        duplicates are dropped."""
        self._entity_names = list(entity_names)
        self._relation_names = list(relation_names)
        self._entity_ids = {name: i for i, name in enumerate(self._entity_names)}
        self._relation_ids = {name: i for i, name in enumerate(self._relation_names)}
        if len(self._entity_ids) != len(self._entity_names):
            raise ValueError("duplicate entity names")
        if len(self._relation_ids) != len(self._relation_names):
            raise ValueError("duplicate relation names")

        n_ent = len(self._entity_names)
        n_rel = 2 * len(self._relation_names)
        unique: set[tuple[int, int, int]] = set()
        staging: list[dict[int, list[int]]] = [dict() for _ in range(n_rel)]
        for h, i, t in base_triples:
            if not (0 <= h < n_ent and 0 <= t < n_ent):
                raise ValueError(f"entity id out of range in triple ({h}, {i}, {t})")
            if not (0 <= i < len(self._relation_names)):
                raise ValueError(f"relation index out of range in triple ({h}, {i}, {t})")
            if (h, i, t) in unique:
                continue
            unique.add((h, i, t))
            staging[2 * i].setdefault(h, []).append(t)
            staging[2 * i + 1].setdefault(t, []).append(h)

        self._adj: list[dict[int, np.ndarray]] = []
        self._relation_tails: list[np.ndarray] = []
        for rows in staging:
            frozen: dict[int, np.ndarray] = {}
            tail_union: set[int] = set()
            for head, tails in rows.items():
                arr = np.array(sorted(tails), dtype=np.int64)
                arr.flags.writeable = False
                frozen[head] = arr
                tail_union.update(tails)
            self._adj.append(frozen)
            tails_arr = np.array(sorted(tail_union), dtype=np.int64)
            tails_arr.flags.writeable = False
            self._relation_tails.append(tails_arr)

        self._base = unique
        self._num_triples = 2 * len(unique)

    # ------------------------------------------------------------------ size

    @property
    def num_entities(self) -> int:
        return len(self._entity_names)

    @property
    def num_base_relations(self) -> int:
        return len(self._relation_names)

    @property
    def num_relations(self) -> int:
        """Relations including the materialized reverses."""
        return 2 * len(self._relation_names)

    @property
    def num_triples(self) -> int:
        """Directed triples including the reverse closure."""
        return self._num_triples

    # --------------------------------------------------------------- symbols

    def entity_id(self, name: str) -> int:
        try:
            return self._entity_ids[name]
        except KeyError:
            raise UnknownSymbolError("entity", name) from None

    def entity_name(self, entity: int) -> str:
        return self._entity_names[entity]

    def relation_id(self, name: str) -> int:
        """Id of a base relation by name (reverse ids are derived, not named)."""
        try:
            return 2 * self._relation_ids[name]
        except KeyError:
            raise UnknownSymbolError("relation", name) from None

    def relation_name(self, relation: int) -> str:
        base = self._relation_names[relation >> 1]
        return f"~{base}" if relation & 1 else base

    def has_entity(self, name: str) -> bool:
        return name in self._entity_ids

    def has_relation(self, name: str) -> bool:
        return name in self._relation_ids

    @property
    def entity_names(self) -> tuple[str, ...]:
        return tuple(self._entity_names)

    @property
    def base_relation_names(self) -> tuple[str, ...]:
        return tuple(self._relation_names)

    # ---------------------------------------------------------------- lookup

    @staticmethod
    def reverse(relation: int) -> int:
        """Involutive reverse-relation pairing."""
        return relation ^ 1

    @staticmethod
    def is_reverse(relation: int) -> bool:
        return bool(relation & 1)

    def _check_relation(self, relation: int) -> None:
        if not (0 <= relation < self.num_relations):
            raise ValueError(f"relation id {relation} out of range [0, {self.num_relations})")

    def _check_entity(self, entity: int) -> None:
        if not (0 <= entity < self.num_entities):
            raise ValueError(f"entity id {entity} out of range [0, {self.num_entities})")

    def observed_tails(self, head: int, relation: int) -> np.ndarray:
        """Sorted tail ids of (head, relation, *); empty when none observed."""
        self._check_entity(head)
        self._check_relation(relation)
        return self._adj[relation].get(head, _EMPTY)

    def tails_of_relation(self, relation: int) -> np.ndarray:
        """Sorted union of all observed tails of the relation."""
        self._check_relation(relation)
        return self._relation_tails[relation]

    def has_triple(self, head: int, relation: int, tail: int) -> bool:
        tails = self._adj[relation].get(head)
        if tails is None:
            return False
        pos = int(np.searchsorted(tails, tail))
        return pos < tails.shape[0] and int(tails[pos]) == tail

    def relation_pairs(self, relation: int) -> tuple[np.ndarray, np.ndarray]:
        """All (head, tail) pairs of one relation id as two aligned arrays."""
        self._check_relation(relation)
        rows = self._adj[relation]
        if not rows:
            return _EMPTY, _EMPTY
        heads = np.concatenate([np.full(t.shape[0], h, dtype=np.int64) for h, t in sorted(rows.items())])
        tails = np.concatenate([t for _, t in sorted(rows.items())])
        return heads, tails

    def triples(self) -> Iterator[tuple[int, int, int]]:
        """All directed triples, reverse closure included."""
        for r, rows in enumerate(self._adj):
            for h in sorted(rows):
                for t in rows[h]:
                    yield h, r, int(t)

    def base_triples(self) -> Iterator[tuple[int, int, int]]:
        """Base-direction triples as (head, base_relation_id, tail)."""
        for h, i, t in sorted(self._base):
            yield h, 2 * i, t

    # ------------------------------------------------------------------- io

    def save(self, target: str | Path | io.TextIOBase) -> None:
        """Write base triples as name TSV; reverses are re-synthesized on load."""
        lines = (
            f"{self._entity_names[h]}\t{self._relation_names[i]}\t{self._entity_names[t]}\n"
            for h, i, t in sorted(self._base)
        )
        if isinstance(target, (str, Path)):
            with open(target, "w", encoding="utf-8") as fh:
                fh.writelines(lines)
        else:
            target.writelines(lines)

    @classmethod
    def from_named_triples(
        cls,
        triples: Iterable[tuple[str, str, str]],
        entities: Sequence[str] | None = None,
        relations: Sequence[str] | None = None,
    ) -> "KnowledgeGraph":
        """Build directly from (head, relation, tail) name triples."""
        lines = (f"{h}\t{r}\t{t}" for h, r, t in triples)
        seed = None
        if entities is not None or relations is not None:
            seed = cls(entities or (), relations or (), ())
        return load_triples(lines, symbol_mode="create", symbols=seed)

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(entities={self.num_entities}, "
            f"relations={self.num_relations}, triples={self.num_triples})"
        )


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def load_triples(
    source,
    symbol_mode: str = "create",
    symbols: KnowledgeGraph | None = None,
) -> KnowledgeGraph:
    """Load a TSV triple stream ("head<TAB>relation<TAB>tail" per line).

    Blank lines and lines starting with '#' are skipped; duplicate triples
    are dropped silently.  In "create" mode unseen names are assigned fresh
    ids (appended after `symbols` tables when given); in "strict" mode any
    name outside the donor `symbols` tables raises UnknownSymbolError.
    """
    if symbol_mode not in ("create", "strict"):
        raise ValueError(f"symbol_mode must be 'create' or 'strict', got {symbol_mode!r}")
    if symbol_mode == "strict" and symbols is None:
        raise ValueError("strict symbol mode requires a donor graph for the symbol tables")

    entity_names: list[str] = list(symbols.entity_names) if symbols else []
    relation_names: list[str] = list(symbols.base_relation_names) if symbols else []
    entity_ids = {name: i for i, name in enumerate(entity_names)}
    relation_ids = {name: i for i, name in enumerate(relation_names)}
    strict = symbol_mode == "strict"

    def entity(name: str, line_number: int) -> int:
        eid = entity_ids.get(name)
        if eid is None:
            if strict:
                raise UnknownSymbolError("entity", name, line_number)
            eid = len(entity_names)
            entity_names.append(name)
            entity_ids[name] = eid
        return eid

    def relation(name: str, line_number: int) -> int:
        rid = relation_ids.get(name)
        if rid is None:
            if strict:
                raise UnknownSymbolError("relation", name, line_number)
            rid = len(relation_names)
            relation_names.append(name)
            relation_ids[name] = rid
        return rid

    base: list[tuple[int, int, int]] = []
    for line_number, raw in enumerate(_iter_lines(source), start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise MalformedTripleError(line_number, line)
        h, r, t = (f.strip() for f in fields)
        if not h or not r or not t:
            raise MalformedTripleError(line_number, line)
        base.append((entity(h, line_number), relation(r, line_number), entity(t, line_number)))

    return KnowledgeGraph(entity_names, relation_names, base)
