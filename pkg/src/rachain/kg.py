"""Knowledge-graph storage.

Relational facts are (head, relation, tail) triples; numerical facts are
(entity, attribute, value) triples. Loading interns names to dense ids,
synthesizes one inverse per base relation (ids R..2R-1 for base ids 0..R-1),
and builds adjacency plus a per-entity numerical index. Only training-split
numerical facts enter the graph; validation/test values stay outside it so
retrieval can never see a held-out answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INVERSE_SUFFIX = "_inv"


class DatasetFormatError(ValueError):
    """Malformed input rows (wrong arity, unknown entity, bad value)."""


class StatsUnavailableError(ValueError):
    """Attribute has no training values; its value scale is undefined."""


class DegenerateAttributeError(ValueError):
    """Attribute whose training min equals its max; min-max scale is undefined."""


@dataclass(frozen=True)
class Query:
    """Ask for the value of `attribute` on `entity`; target kept for scoring."""

    entity: int
    attribute: int
    target: float | None = None


@dataclass
class DatasetSplit:
    train: list[tuple[int, int, float]]
    valid: list[tuple[int, int, float]]
    test: list[tuple[int, int, float]]


@dataclass
class AttributeStats:
    """Per-attribute training-value ranges used for min-max normalization."""

    mins: np.ndarray
    maxs: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_triples(cls, triples, n_attributes: int) -> "AttributeStats":
        mins = np.full(n_attributes, np.inf)
        maxs = np.full(n_attributes, -np.inf)
        counts = np.zeros(n_attributes, dtype=np.int64)
        for _, attr, value in triples:
            mins[attr] = min(mins[attr], value)
            maxs[attr] = max(maxs[attr], value)
            counts[attr] += 1
        return cls(mins, maxs, counts)

    @property
    def n_attributes(self) -> int:
        return len(self.counts)

    def degenerate_attributes(self) -> list[int]:
        return [a for a in range(self.n_attributes)
                if self.counts[a] > 0 and self.mins[a] == self.maxs[a]]

    def _check(self, attribute: int) -> None:
        if self.counts[attribute] == 0:
            raise StatsUnavailableError(f"attribute {attribute} has no training values")
        if self.mins[attribute] == self.maxs[attribute]:
            raise DegenerateAttributeError(
                f"attribute {attribute} has a single training value "
                f"{self.mins[attribute]}; min-max scale undefined"
            )

    def normalize(self, attribute: int, value: float) -> float:
        self._check(attribute)
        return (value - self.mins[attribute]) / (self.maxs[attribute] - self.mins[attribute])

    def denormalize(self, attribute: int, value: float) -> float:
        self._check(attribute)
        return value * (self.maxs[attribute] - self.mins[attribute]) + self.mins[attribute]

    def usable(self, attribute: int) -> bool:
        return bool(self.counts[attribute] > 0 and self.mins[attribute] < self.maxs[attribute])


@dataclass
class KnowledgeGraph:
    entity_names: list[str]
    relation_names: list[str]  # base relations first, then their inverses
    attribute_names: list[str]
    relational_triples: list[tuple[int, int, int]]  # includes inverse triples
    numerical_triples: list[tuple[int, int, float]]  # training-split facts
    num_base_relations: int
    adjacency: list[list[tuple[int, int]]] = field(default_factory=list)
    numerical_index: list[list[tuple[int, float]]] = field(default_factory=list)
    entity_index: dict[str, int] = field(default_factory=dict)
    relation_index: dict[str, int] = field(default_factory=dict)
    attribute_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.entity_index:
            self.entity_index = {n: i for i, n in enumerate(self.entity_names)}
        if not self.relation_index:
            self.relation_index = {n: i for i, n in enumerate(self.relation_names)}
        if not self.attribute_index:
            self.attribute_index = {n: i for i, n in enumerate(self.attribute_names)}
        if not self.adjacency:
            self.adjacency = [[] for _ in self.entity_names]
            for h, r, t in self.relational_triples:
                self.adjacency[h].append((r, t))
        if not self.numerical_index:
            self.numerical_index = [[] for _ in self.entity_names]
            for e, a, v in self.numerical_triples:
                self.numerical_index[e].append((a, v))

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    @property
    def n_attributes(self) -> int:
        return len(self.attribute_names)

    def invert_relation(self, relation: int) -> int:
        r = self.num_base_relations
        return relation + r if relation < r else relation - r


def _parse_rows(lines, n_cols: int, source: str):
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != n_cols:
            raise DatasetFormatError(
                f"{source}:{lineno}: expected {n_cols} tab-separated columns, got {len(cols)}"
            )
        if any(not c for c in cols):
            raise DatasetFormatError(f"{source}:{lineno}: empty column")
        yield lineno, cols


def _read_relational(path) -> list[tuple[str, str, str]]:
    with open(path, encoding="utf-8") as fh:
        return [(h, r, t) for _, (h, r, t) in _parse_rows(fh, 3, str(path))]


def _read_numerical(path) -> list[tuple[int, str, str, str]]:
    with open(path, encoding="utf-8") as fh:
        return [(lineno, e, a, v) for lineno, (e, a, v) in _parse_rows(fh, 3, str(path))]


def _intern(name: str, index: dict[str, int], names: list[str]) -> int:
    if name not in index:
        index[name] = len(names)
        names.append(name)
    return index[name]


def build_dataset(
    relational_rows,
    train_rows,
    valid_rows=(),
    test_rows=(),
    sources: tuple[str, str, str] = ("<train>", "<valid>", "<test>"),
) -> tuple[KnowledgeGraph, DatasetSplit]:
    """Assemble a graph and splits from name-level rows.

    relational_rows: iterable of (head, relation, tail) strings.
    *_rows: iterables of (entity, attribute, value) strings, or of
    (lineno, entity, attribute, value) when line context is available.
    """
    entity_names: list[str] = []
    entity_index: dict[str, int] = {}
    relation_names: list[str] = []
    relation_index: dict[str, int] = {}
    attribute_names: list[str] = []
    attribute_index: dict[str, int] = {}

    base_triples = []
    for h, r, t in relational_rows:
        hid = _intern(h, entity_index, entity_names)
        rid = _intern(r, relation_index, relation_names)
        tid = _intern(t, entity_index, entity_names)
        base_triples.append((hid, rid, tid))

    n_base = len(relation_names)
    for name in list(relation_names):
        relation_index[name + INVERSE_SUFFIX] = len(relation_names)
        relation_names.append(name + INVERSE_SUFFIX)

    relational_triples = []
    for h, r, t in base_triples:
        relational_triples.append((h, r, t))
        relational_triples.append((t, r + n_base, h))

    def resolve_split(rows, label):
        triples = []
        for row in rows:
            lineno, (e, a, v) = (row[0], row[1:]) if len(row) == 4 else ("?", row)
            if e not in entity_index:
                raise DatasetFormatError(
                    f"{label}:{lineno}: entity {e!r} does not appear in the relational graph"
                )
            try:
                value = float(v)
            except ValueError:
                raise DatasetFormatError(f"{label}:{lineno}: bad value {v!r}") from None
            if not np.isfinite(value):
                raise DatasetFormatError(f"{label}:{lineno}: non-finite value {v!r}")
            aid = _intern(a, attribute_index, attribute_names)
            triples.append((entity_index[e], aid, value))
        return triples

    train = resolve_split(train_rows, sources[0])
    valid = resolve_split(valid_rows, sources[1])
    test = resolve_split(test_rows, sources[2])

    kg = KnowledgeGraph(
        entity_names=entity_names,
        relation_names=relation_names,
        attribute_names=attribute_names,
        relational_triples=relational_triples,
        numerical_triples=train,
        num_base_relations=n_base,
        entity_index=entity_index,
        relation_index=relation_index,
        attribute_index=attribute_index,
    )
    return kg, DatasetSplit(train=train, valid=valid, test=test)


def load_dataset(relational_path, train_path, valid_path=None, test_path=None):
    """Load TSV files (head<TAB>relation<TAB>tail / entity<TAB>attribute<TAB>value)."""
    rel_rows = _read_relational(relational_path)
    kg, split = build_dataset(
        rel_rows,
        _read_numerical(train_path) if train_path is not None else [],
        _read_numerical(valid_path) if valid_path is not None else [],
        _read_numerical(test_path) if test_path is not None else [],
        sources=(str(train_path), str(valid_path), str(test_path)),
    )
    return kg, split


def queries_from_triples(triples) -> list[Query]:
    return [Query(entity=e, attribute=a, target=v) for e, a, v in triples]


def attribute_means(triples, n_attributes: int) -> np.ndarray:
    """Mean training value per attribute (nan where an attribute has none)."""
    sums = np.zeros(n_attributes)
    counts = np.zeros(n_attributes)
    for _, a, v in triples:
        sums[a] += v
        counts[a] += 1
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def format_stats_report(kg: KnowledgeGraph, stats: AttributeStats) -> str:
    lines = [
        f"entities            {kg.n_entities}",
        f"base relations      {kg.num_base_relations}",
        f"relations (w/ inv)  {kg.n_relations}",
        f"attributes          {kg.n_attributes}",
        f"relational triples  {len(kg.relational_triples)}",
        f"numerical triples   {len(kg.numerical_triples)}",
        "",
        f"{'attribute':<32} {'count':>8} {'min':>14} {'max':>14}",
    ]
    for a, name in enumerate(kg.attribute_names):
        if stats.counts[a] == 0:
            lines.append(f"{name:<32} {0:>8} {'-':>14} {'-':>14}  (no training values)")
            continue
        flag = "  (degenerate: min == max)" if stats.mins[a] == stats.maxs[a] else ""
        lines.append(
            f"{name:<32} {stats.counts[a]:>8} {stats.mins[a]:>14.4f} {stats.maxs[a]:>14.4f}{flag}"
        )
    return "\n".join(lines) + "\n"
