"""The full pipeline as one object.

Model.forward turns a filtered chain set into a normalized prediction with
differentiable attention weights; Model.predict wraps retrieval, filtering,
forward, and the attribute-mean fallback for queries with no usable chains.
Checkpoints store every parameter array by name plus the config and
normalization statistics needed to rebuild the model exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, concat, mean, no_grad, take_rows
from .config import TrainConfig
from .encoder import AffineNets, ChainEncoderParams, affine_transfer, chain_tokens, encode_chains
from .filter import EnhancedToC, FilterEmbeddings, select_random_k, select_top_k
from .kg import AttributeStats, KnowledgeGraph, Query
from .reasoner import (
    PredictionTrace,
    ProjectionHeads,
    TreeformerParams,
    aggregate,
    build_trace,
    project_values,
    weight_chains,
)
from .retrieval import RAChain, TreeOfChains, sample_tree


@dataclass
class ForwardResult:
    prediction: Tensor          # scalar, normalized space
    omega: Tensor               # (m,) attention weights
    proposals: Tensor           # (m,) per-chain proposals, normalized
    chains: list[RAChain]       # the m chains actually used, same order


class Model:
    def __init__(self, n_relations: int, n_attributes: int, stats: AttributeStats,
                 means: np.ndarray, config: TrainConfig,
                 rng: np.random.Generator | None = None):
        rng = np.random.default_rng(config.seed) if rng is None else rng
        self.config = config
        self.stats = stats
        self.means = np.asarray(means, dtype=np.float64)
        self.n_relations = n_relations
        self.n_attributes = n_attributes
        self.embeddings = FilterEmbeddings.create(
            rng, n_relations, n_attributes, config.filter_dim,
            config.curvature, config.init_radius)
        self.encoder = ChainEncoderParams.create(
            rng, config.filter_dim, config.dim, config.layers, config.heads)
        self.affine = AffineNets.create(rng, config.dim, config.affine_hidden)
        self.heads = ProjectionHeads.create(rng, config.dim, config.mode)
        self.tree = TreeformerParams.create(
            rng, config.dim, config.layers, config.heads, config.max_hops)

    # -- parameter sets ----------------------------------------------------

    def parameters(self) -> list[Parameter]:
        """Parameters the configured variant actually trains."""
        cfg = self.config
        out = [self.embeddings.relations, self.embeddings.attributes]
        if cfg.use_chain_encoder:
            out += self.encoder.parameters()
        elif self.encoder.lift is not None:
            out.append(self.encoder.lift)
        if cfg.use_numerical_aware:
            out += self.affine.parameters()
        out += self.heads.parameters()
        if cfg.use_chain_weighting:
            out += self.tree.parameters()
        return out

    def all_parameters(self) -> list[Parameter]:
        """Every parameter the model owns (checkpointing)."""
        return ([self.embeddings.relations, self.embeddings.attributes]
                + self.encoder.parameters() + self.affine.parameters()
                + self.heads.parameters() + self.tree.parameters())

    # -- pipeline ----------------------------------------------------------

    def retrieve(self, kg: KnowledgeGraph, query: Query, seed: int) -> TreeOfChains:
        return sample_tree(kg, query, self.config.walks, self.config.max_hops, seed)

    def select(self, toc: TreeOfChains, seed: int = 0) -> EnhancedToC:
        cfg = self.config
        if not cfg.use_filter:
            return select_random_k(toc, cfg.top_k, seed)
        return select_top_k(toc, self.embeddings, cfg.top_k, cfg.lam,
                            cfg.filter_keep_largest)

    def forward(self, etoc: EnhancedToC) -> ForwardResult | None:
        """None when no chain has a normalizable source value."""
        cfg = self.config
        usable = [ch for ch in etoc.chains if self.stats.usable(ch.source_attribute)]
        if not usable:
            return None
        m = len(usable)
        qa = etoc.query.attribute
        values_norm = np.array(
            [self.stats.normalize(ch.source_attribute, ch.source_value) for ch in usable])
        lengths = np.array([ch.length for ch in usable], dtype=np.int64)

        groups: dict[int, list[int]] = {}
        for i, ch in enumerate(usable):
            groups.setdefault(ch.length, []).append(i)
        parts = []
        positions: list[int] = []
        for length in sorted(groups):
            idx = groups[length]
            batch = [usable[i] for i in idx]
            if cfg.use_chain_encoder:
                parts.append(encode_chains(batch, qa, self.embeddings, self.encoder))
            else:
                tokens = chain_tokens(batch, qa, self.embeddings, self.encoder,
                                      include_end=False)
                parts.append(mean(tokens, axis=1))
            positions.extend(idx)
        reps_grouped = parts[0] if len(parts) == 1 else concat(parts, axis=0)
        restore = np.empty(m, dtype=np.int64)
        restore[np.array(positions)] = np.arange(m)
        reps = take_rows(reps_grouped, restore)

        transferred = (affine_transfer(reps, values_norm, self.affine)
                       if cfg.use_numerical_aware else reps)
        proposals = project_values(transferred, values_norm, self.heads)
        if cfg.use_chain_weighting:
            omega = weight_chains(reps, lengths, self.tree)
        else:
            omega = Tensor(np.full(m, 1.0 / m))
        prediction = aggregate(omega, proposals)
        return ForwardResult(prediction, omega, proposals, usable)

    def predict(self, kg: KnowledgeGraph, query: Query, seed: int = 0) -> PredictionTrace:
        """Retrieval + filter + forward without gradients; falls back to the
        attribute's training mean when no chain is available."""
        with no_grad():
            toc = self.retrieve(kg, query, seed)
            etoc = self.select(toc, seed)
            result = self.forward(etoc)
        if result is None:
            value = float(self.means[query.attribute])
            norm = (self.stats.normalize(query.attribute, value)
                    if self.stats.usable(query.attribute) else float("nan"))
            return PredictionTrace(query=query, predicted_norm=norm,
                                   predicted_value=value, fallback="attribute-mean")
        return build_trace(query, result.chains, result.omega.data,
                           result.proposals.data, self.stats)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: Model, extra: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    for p in model.all_parameters():
        key = f"param:{p.name}"
        if key in arrays:
            raise ValueError(f"duplicate parameter name {p.name!r}")
        arrays[key] = p.data
    arrays["stats:mins"] = model.stats.mins
    arrays["stats:maxs"] = model.stats.maxs
    arrays["stats:counts"] = model.stats.counts
    arrays["means"] = model.means
    meta = {
        "config": model.config.to_dict(),
        "n_relations": model.n_relations,
        "n_attributes": model.n_attributes,
        "extra": extra or {},
    }
    arrays["meta"] = np.array(json.dumps(meta))
    np.savez_compressed(path, **arrays)


def load_checkpoint(path) -> tuple[Model, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        config = TrainConfig.from_dict(meta["config"])
        stats = AttributeStats(
            mins=data["stats:mins"].copy(),
            maxs=data["stats:maxs"].copy(),
            counts=data["stats:counts"].copy(),
        )
        model = Model(meta["n_relations"], meta["n_attributes"], stats,
                      data["means"].copy(), config)
        stored = {k[len("param:"):]: data[k] for k in data.files if k.startswith("param:")}
    own = {p.name: p for p in model.all_parameters()}
    if set(stored) != set(own):
        missing = set(own) - set(stored)
        surplus = set(stored) - set(own)
        raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, "
                         f"surplus {sorted(surplus)}")
    for name, arr in stored.items():
        if own[name].data.shape != arr.shape:
            raise ValueError(f"shape mismatch for {name}: "
                             f"{own[name].data.shape} vs {arr.shape}")
        own[name].data = arr.astype(np.float64)
    return model, meta["extra"]
