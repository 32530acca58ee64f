"""Chain retrieval by random walk.

A chain ties a known numerical fact (source entity, attribute, value) to the
query entity through a path of relations. Walks start at the query entity and
move outward, truncating when they would revisit an entity; every attributed
entity along the way yields one chain per attribute it carries (so one walk
can emit chains of several lengths). Chains are stored in source -> query
orientation: the walked path is reversed and each traversed relation replaced
by its inverse, which keeps every stored hop a real edge of the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kg import KnowledgeGraph, Query


@dataclass(frozen=True)
class RAChain:
    """Relation path from an attributed source entity to the query entity."""

    source_attribute: int
    relations: tuple[int, ...]  # oriented source -> query
    query_attribute: int
    source_value: float
    entity_path: tuple[int, ...]  # source first, query last

    def __post_init__(self):
        if len(self.relations) < 1:
            raise ValueError("a chain needs at least one relation")
        if len(self.entity_path) != len(self.relations) + 1:
            raise ValueError(
                f"entity path of {len(self.entity_path)} does not fit "
                f"{len(self.relations)} relations"
            )
        if len(set(self.entity_path)) != len(self.entity_path):
            raise ValueError("entity path revisits an entity")

    @property
    def length(self) -> int:
        return len(self.relations)

    @property
    def pattern(self) -> tuple[int, tuple[int, ...]]:
        """(source attribute, relation path): the value-free shape of the chain."""
        return (self.source_attribute, self.relations)

    @property
    def source_entity(self) -> int:
        return self.entity_path[0]


@dataclass
class TreeOfChains:
    query: Query
    chains: list[RAChain]

    @property
    def is_empty(self) -> bool:
        return not self.chains

    def __len__(self) -> int:
        return len(self.chains)


def sample_tree(
    kg: KnowledgeGraph, query: Query, walks: int, max_hops: int, seed: int
) -> TreeOfChains:
    """Run `walks` random walks of up to max_hops steps from the query entity.

    Neighbors are drawn uniformly over the adjacency list (parallel edges count
    separately). Duplicate discoveries are dropped, and harvesting stops once
    `walks` distinct chains exist, so len(result) <= walks.
    """
    rng = np.random.default_rng(seed)
    seen: set[tuple] = set()
    chains: list[RAChain] = []
    for _ in range(walks):
        cur = query.entity
        path = [cur]
        rels: list[int] = []
        visited = {cur}
        for _ in range(max_hops):
            nbrs = kg.adjacency[cur]
            if not nbrs:
                break
            rel, nxt = nbrs[rng.integers(len(nbrs))]
            if nxt in visited:
                break
            path.append(nxt)
            rels.append(rel)
            visited.add(nxt)
            cur = nxt
            facts = kg.numerical_index[nxt]
            if not facts:
                continue
            rev_path = tuple(reversed(path))
            rev_rels = tuple(kg.invert_relation(r) for r in reversed(rels))
            for attr, value in facts:
                key = (attr, rev_path, rev_rels)
                if key in seen:
                    continue
                seen.add(key)
                chains.append(RAChain(attr, rev_rels, query.attribute, value, rev_path))
                if len(chains) >= walks:
                    return TreeOfChains(query, chains)
        if len(chains) >= walks:
            break
    return TreeOfChains(query, chains)


def enumerate_all_chains(
    kg: KnowledgeGraph, query: Query, max_hops: int, max_paths: int = 1_000_000
) -> list[RAChain]:
    """Deterministic DFS over every simple path of <= max_hops edges.

    Ground truth for the sampler on small graphs; raises if the path count
    passes max_paths.
    """
    chains: list[RAChain] = []
    steps = 0

    def visit(cur: int, path: list[int], rels: list[int], visited: set[int]) -> None:
        nonlocal steps
        if len(rels) >= max_hops:
            return
        for rel, nxt in kg.adjacency[cur]:
            if nxt in visited:
                continue
            steps += 1
            if steps > max_paths:
                raise RuntimeError(f"chain enumeration exceeded {max_paths} paths")
            path.append(nxt)
            rels.append(rel)
            visited.add(nxt)
            facts = kg.numerical_index[nxt]
            if facts:
                rev_path = tuple(reversed(path))
                rev_rels = tuple(kg.invert_relation(r) for r in reversed(rels))
                for attr, value in facts:
                    chains.append(
                        RAChain(attr, rev_rels, query.attribute, value, rev_path)
                    )
            visit(nxt, path, rels, visited)
            path.pop()
            rels.pop()
            visited.remove(nxt)

    visit(query.entity, [query.entity], [], {query.entity})
    return chains


def chain_is_valid(chain: RAChain, kg: KnowledgeGraph, query: Query) -> bool:
    """Every stored hop is a graph edge, the source fact exists, the path ends
    at the query entity, and no entity repeats."""
    if chain.entity_path[-1] != query.entity:
        return False
    if chain.query_attribute != query.attribute:
        return False
    if len(set(chain.entity_path)) != len(chain.entity_path):
        return False
    for i, rel in enumerate(chain.relations):
        if (rel, chain.entity_path[i + 1]) not in kg.adjacency[chain.entity_path[i]]:
            return False
    facts = kg.numerical_index[chain.source_entity]
    return (chain.source_attribute, chain.source_value) in facts
