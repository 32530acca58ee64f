#!/usr/bin/env python3
"""Convert the raw YAGO15K release (MMKG) into this repo's TSV layout.

Reads the N-Triples-style files

    YAGO15K_EntityTriples.txt     <head> <relation> <tail> .
    YAGO15K_NumericalTriples.txt  <entity> <attribute> "literal"^^<type> .

and writes relational.tsv plus an 8:1:1 train/valid/test split of the
numerical facts. Date literals become decimal years (1809-02-12 -> 1809.115);
masked fields ("1809-##-##") fall back to January 1. Attribute URIs are
renamed to short stable names (hasLatitude -> latitude, wasBornOnDate ->
birth_date, ...). Only the first value per (entity, attribute) pair is kept,
and only for entities that appear in the relational triples.

Usage:
    python3 scripts/prepare_yago15k.py --src /path/to/mmkg/YAGO15K \\
        --out data/yago15k
"""

import argparse
import re
import sys
from pathlib import Path

import numpy as np

LINE = re.compile(r"^<([^>]+)>\s+<([^>]+)>\s+(.+?)\s*\.?\s*$")
LITERAL = re.compile(r'^"([^"]*)"(?:\^\^<([^>]+)>)?$')
DATE = re.compile(r"^(-?\d{1,5})-(\d{2}|##)-(\d{2}|##)$")
MONTH_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)

ATTRIBUTE_NAMES = {
    "hasLatitude": "latitude",
    "hasLongitude": "longitude",
    "wasBornOnDate": "birth_date",
    "diedOnDate": "death_date",
    "wasCreatedOnDate": "created_date",
    "wasDestroyedOnDate": "destroyed_date",
    "happenedOnDate": "happened_date",
}


def local_name(uri: str) -> str:
    return re.split(r"[/#]", uri)[-1]


def is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def decimal_year(text: str) -> float | None:
    m = DATE.match(text)
    if not m:
        return None
    year = int(m.group(1))
    month = 1 if m.group(2) == "##" else max(1, min(12, int(m.group(2))))
    day = 1 if m.group(3) == "##" else int(m.group(3))
    lengths = list(MONTH_DAYS)
    if is_leap(year):
        lengths[1] = 29
    day = max(1, min(lengths[month - 1], day))
    day_of_year = sum(lengths[: month - 1]) + day
    return year + (day_of_year - 1) / sum(lengths)


def parse_value(literal: str) -> float | None:
    as_year = decimal_year(literal)
    if as_year is not None:
        return as_year
    try:
        value = float(literal)
    except ValueError:
        return None
    return value if np.isfinite(value) else None


def parse_file(path: Path):
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        raw = raw.strip()
        if not raw:
            continue
        m = LINE.match(raw)
        if not m:
            print(f"warning: {path.name}:{lineno}: unparseable line skipped",
                  file=sys.stderr)
            continue
        yield lineno, m.group(1), m.group(2), m.group(3)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--src", required=True,
                    help="directory with the raw YAGO15K .txt files")
    ap.add_argument("--out", default="data/yago15k")
    ap.add_argument("--seed", type=int, default=0, help="split shuffle seed")
    ap.add_argument("--relational-file", default="YAGO15K_EntityTriples.txt")
    ap.add_argument("--numerical-file", default="YAGO15K_NumericalTriples.txt")
    args = ap.parse_args()

    src = Path(args.src)
    rel_path = src / args.relational_file
    num_path = src / args.numerical_file
    for path in (rel_path, num_path):
        if not path.exists():
            print(f"error: {path} not found", file=sys.stderr)
            return 1

    relational = []
    entities = set()
    for _, head, rel, obj in parse_file(rel_path):
        m = LITERAL.match(obj)
        if m:  # literal object in the relational file: not a graph edge
            continue
        tail = obj.strip("<>")
        row = (local_name(head), local_name(rel), local_name(tail))
        relational.append(row)
        entities.update((row[0], row[2]))

    numerical = {}
    dropped_unknown = dropped_value = 0
    for lineno, ent, attr, obj in parse_file(num_path):
        m = LITERAL.match(obj)
        if not m:
            dropped_value += 1
            continue
        value = parse_value(m.group(1))
        if value is None:
            print(f"warning: {num_path.name}:{lineno}: literal "
                  f"{m.group(1)!r} not numeric, skipped", file=sys.stderr)
            dropped_value += 1
            continue
        name = local_name(ent)
        if name not in entities:
            dropped_unknown += 1
            continue
        raw_attr = local_name(attr)
        key = (name, ATTRIBUTE_NAMES.get(raw_attr, raw_attr))
        if key not in numerical:  # first value per (entity, attribute) wins
            numerical[key] = value

    facts = [(e, a, v) for (e, a), v in numerical.items()]
    order = np.random.default_rng(args.seed).permutation(len(facts))
    n_test = len(facts) // 10
    n_valid = len(facts) // 10
    buckets = {
        "test": [facts[i] for i in order[:n_test]],
        "valid": [facts[i] for i in order[n_test:n_test + n_valid]],
        "train": [facts[i] for i in order[n_test + n_valid:]],
    }

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "relational.tsv").open("w", encoding="utf-8") as fh:
        for row in relational:
            fh.write("\t".join(row) + "\n")
    for split, rows in buckets.items():
        with (out / f"{split}.tsv").open("w", encoding="utf-8") as fh:
            for ent, attr, value in rows:
                fh.write(f"{ent}\t{attr}\t{value!r}\n")

    attrs = sorted({a for _, a in numerical})
    print(f"entities {len(entities)}, relational triples {len(relational)}, "
          f"numerical facts {len(facts)} "
          f"(train {len(buckets['train'])} / valid {len(buckets['valid'])} / "
          f"test {len(buckets['test'])})")
    print(f"attributes ({len(attrs)}): {', '.join(attrs)}")
    if dropped_unknown or dropped_value:
        print(f"dropped {dropped_unknown} facts on unknown entities, "
              f"{dropped_value} non-numeric literals")
    print(f"wrote {out}/relational.tsv and train/valid/test.tsv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
