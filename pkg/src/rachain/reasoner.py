"""Per-chain value projection and attention-weighted aggregation.

Each selected chain proposes a value for the query attribute by transforming
its source value in normalized space (translation, scaling, both, or a direct
readout), then a second transformer attends across the chain set (no
positional encoding; a learned length embedding is added instead) and a
masked softmax turns its outputs into mixture weights. The final prediction
is the weight-averaged proposal, denormalized under the query attribute's
training scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    add,
    clip,
    concat,
    linear,
    mul,
    relu,
    reshape,
    softmax,
    take_rows,
    tensor_sum,
)
from .encoder import TransformerParams, _normal, transformer_stack
from .kg import AttributeStats, Query
from .retrieval import RAChain

PROJECTION_MODES = ("direct", "translation", "scaling", "combined")


@dataclass
class HeadParams:
    """Small readout d -> 64 -> 1; opens at a constant via zero final weights."""

    w1: Parameter
    b1: Parameter
    w2: Parameter
    b2: Parameter

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, tag: str, bias_init: float,
               hidden: int = 64):
        return cls(
            w1=Parameter(_normal(rng, (dim, hidden), 0.05), name=f"{tag}.w1"),
            b1=Parameter(np.zeros(hidden), name=f"{tag}.b1"),
            w2=Parameter(np.zeros((hidden, 1)), name=f"{tag}.w2"),
            b2=Parameter(np.full(1, bias_init), name=f"{tag}.b2"),
        )

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, x: Tensor) -> Tensor:
        m = x.shape[0]
        return reshape(linear(relu(linear(x, self.w1, self.b1)), self.w2, self.b2), (m,))


@dataclass
class ProjectionHeads:
    mode: str
    alpha: HeadParams | None = None
    beta: HeadParams | None = None
    direct: HeadParams | None = None

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, mode: str):
        if mode not in PROJECTION_MODES:
            raise ValueError(f"unknown projection mode {mode!r}; pick from {PROJECTION_MODES}")
        heads = cls(mode=mode)
        if mode in ("scaling", "combined"):
            heads.alpha = HeadParams.create(rng, dim, "proj.alpha", bias_init=1.0)
        if mode in ("translation", "combined"):
            heads.beta = HeadParams.create(rng, dim, "proj.beta", bias_init=0.0)
        if mode == "direct":
            heads.direct = HeadParams.create(rng, dim, "proj.direct", bias_init=0.5)
        return heads

    def parameters(self) -> list[Parameter]:
        out = []
        for head in (self.alpha, self.beta, self.direct):
            if head is not None:
                out.extend(head.parameters())
        return out


def project_values(transferred: Tensor, source_norm: np.ndarray,
                   heads: ProjectionHeads) -> Tensor:
    """Per-chain proposals in normalized space, clamped to [0, 1]."""
    n = Tensor(np.asarray(source_norm, dtype=np.float64))
    if heads.mode == "translation":
        out = add(n, heads.beta(transferred))
    elif heads.mode == "scaling":
        out = mul(heads.alpha(transferred), n)
    elif heads.mode == "combined":
        out = mul(heads.alpha(transferred), add(n, heads.beta(transferred)))
    else:
        out = heads.direct(transferred)
    return clip(out, 0.0, 1.0)


@dataclass
class TreeformerParams:
    length_table: Parameter  # (max_hops, dim), row length-1
    stack: TransformerParams
    w_out: Parameter
    b_out: Parameter

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, n_layers: int, heads: int,
               max_hops: int):
        return cls(
            length_table=Parameter(_normal(rng, (max_hops, dim)), name="tree.lengths"),
            stack=TransformerParams.create(rng, dim, n_layers, heads, tag="tree"),
            w_out=Parameter(_normal(rng, (dim, 1), 0.05), name="tree.w_out"),
            b_out=Parameter(np.zeros(1), name="tree.b_out"),
        )

    def parameters(self) -> list[Parameter]:
        return ([self.length_table] + self.stack.parameters()
                + [self.w_out, self.b_out])


def weight_chains(chain_reps: Tensor, lengths: np.ndarray, params: TreeformerParams,
                  pad_to: int | None = None) -> Tensor:
    """Attention weights over the chain set; padded slots get exactly 0.

    Returns a vector of size max(pad_to, m) summing to 1 over the first m
    slots. Permuting the chains permutes the weights identically (the stack
    sees the chains as a set).
    """
    m, dim = chain_reps.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    x = add(chain_reps, take_rows(params.length_table, lengths - 1))
    total = m if pad_to is None else max(pad_to, m)
    mask = None
    if total > m:
        x = concat([x, Tensor(np.zeros((total - m, dim)))], axis=0)
        mask = np.arange(total) < m
    out = transformer_stack_rows(x, params, mask)
    logits = reshape(linear(out, params.w_out, params.b_out), (1, total))
    omega = softmax(logits, mask=None if mask is None else mask[None, :])
    return reshape(omega, (total,))


def transformer_stack_rows(x: Tensor, params: TreeformerParams,
                           mask: np.ndarray | None) -> Tensor:
    """Run the treeformer stack over a single set of rows (adds/removes the
    batch axis)."""
    total, dim = x.shape
    xb = reshape(x, (1, total, dim))
    key_mask = None if mask is None else mask[None, :]
    out = transformer_stack(xb, params.stack, key_mask=key_mask)
    return reshape(out, (total, dim))


def aggregate(omega: Tensor, proposals: Tensor) -> Tensor:
    """Weighted mixture of per-chain proposals (scalar, normalized space)."""
    return tensor_sum(mul(omega, proposals))


# ---------------------------------------------------------------------------
# explainability


@dataclass
class ChainContribution:
    chain: RAChain
    weight: float
    proposal_norm: float
    proposal_value: float


@dataclass
class PredictionTrace:
    query: Query
    predicted_norm: float
    predicted_value: float
    contributions: list[ChainContribution] = field(default_factory=list)
    fallback: str | None = None


def build_trace(query: Query, chains: list[RAChain], omega: np.ndarray,
                proposals_norm: np.ndarray, stats: AttributeStats) -> PredictionTrace:
    final_norm = float(np.sum(omega * proposals_norm))
    contributions = [
        ChainContribution(
            chain=ch,
            weight=float(w),
            proposal_norm=float(p),
            proposal_value=stats.denormalize(query.attribute, float(p)),
        )
        for ch, w, p in zip(chains, omega, proposals_norm)
    ]
    contributions.sort(key=lambda c: -c.weight)
    return PredictionTrace(
        query=query,
        predicted_norm=final_norm,
        predicted_value=stats.denormalize(query.attribute, final_norm),
        contributions=contributions,
    )


def top_patterns(traces: list[PredictionTrace]) -> list[tuple[tuple, float, int]]:
    """Chain patterns ranked by total attention weight across traces."""
    weight: dict[tuple, float] = {}
    count: dict[tuple, int] = {}
    for trace in traces:
        for contrib in trace.contributions:
            pat = contrib.chain.pattern
            weight[pat] = weight.get(pat, 0.0) + contrib.weight
            count[pat] = count.get(pat, 0) + 1
    ranked = sorted(weight, key=lambda p: -weight[p])
    return [(p, weight[p], count[p]) for p in ranked]


def format_pattern_report(patterns, relation_names: list[str],
                          attribute_names: list[str], limit: int = 20) -> str:
    lines = [f"{'total weight':>12}  {'chains':>7}  pattern"]
    for pat, w, n in patterns[:limit]:
        src, rels = pat
        path = " -> ".join(relation_names[r] for r in rels)
        lines.append(f"{w:>12.4f}  {n:>7}  [{attribute_names[src]}] {path}")
    return "\n".join(lines) + "\n"
