"""Training loop.

Each epoch re-samples chains for every training query (unless cache_toc
reuses the first epoch's trees), filters them, runs the forward pipeline, and
applies Adam on the mini-batch mean loss over normalized values. Training
stops at the epoch budget, when the epoch loss moves less than epsilon, or
when validation MAE stops improving for `patience` epochs; the best
validation snapshot wins.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tensor, absolute, backward, clip_global_norm, square, sub
from .kg import DatasetSplit, KnowledgeGraph, Query, queries_from_triples
from .model import Model
from .retrieval import TreeOfChains


class TrainingFault(RuntimeError):
    """Non-finite loss or gradient, with the query that produced it."""


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_mae: float
    seconds: float
    queries_used: int
    queries_empty: int


@dataclass
class TrainResult:
    model: Model
    history: list[EpochStats] = field(default_factory=list)
    best_val: float = float("nan")
    best_epoch: int = -1
    stop_reason: str = "epochs"


def seed_for(base: int, channel: int, epoch: int, index: int) -> int:
    """Deterministic per-(purpose, epoch, query) RNG seed."""
    return int(np.random.SeedSequence([base, channel, epoch, index]).generate_state(1)[0])


def loss_term(prediction: Tensor, target_norm: float, kind: str) -> Tensor:
    diff = sub(prediction, target_norm)
    return square(diff) if kind == "l2" else absolute(diff)


def scoped_queries(kg: KnowledgeGraph, triples, model: Model) -> list[Query]:
    """Queries whose attribute is normalizable and inside the config scope."""
    scope = None
    if model.config.attributes is not None:
        scope = set()
        for name in model.config.attributes:
            if name not in kg.attribute_index:
                raise ValueError(f"unknown attribute {name!r} in config scope")
            scope.add(kg.attribute_index[name])
    out = []
    for q in queries_from_triples(triples):
        if not model.stats.usable(q.attribute):
            continue
        if scope is not None and q.attribute not in scope:
            continue
        out.append(q)
    return out


def validation_mae(model: Model, kg: KnowledgeGraph, queries: list[Query],
                   epoch: int) -> float:
    """Mean absolute error in normalized space (fallbacks included)."""
    if not queries:
        return float("nan")
    errs = []
    for i, q in enumerate(queries):
        trace = model.predict(kg, q, seed=seed_for(model.config.seed, 1, epoch, i))
        target_norm = model.stats.normalize(q.attribute, q.target)
        errs.append(abs(trace.predicted_norm - target_norm))
    return float(np.mean(errs))


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {p.name: p.data.copy() for p in model.all_parameters()}


def _restore(model: Model, snap: dict[str, np.ndarray]) -> None:
    for p in model.all_parameters():
        p.data = snap[p.name].copy()


def train(model: Model, kg: KnowledgeGraph, split: DatasetSplit,
          progress=None) -> TrainResult:
    cfg = model.config
    train_queries = scoped_queries(kg, split.train, model)
    if not train_queries:
        raise ValueError("no trainable queries: every attribute lacks a value scale")
    val_queries = scoped_queries(kg, split.valid, model)

    opt = Adam(model.parameters(), lr=cfg.lr)
    shuffle_rng = np.random.default_rng(cfg.seed)
    toc_cache: dict[int, TreeOfChains] = {}
    result = TrainResult(model=model)
    best_snap: dict[str, np.ndarray] | None = None
    best_val = float("inf")
    best_epoch = -1
    prev_loss: float | None = None

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        order = shuffle_rng.permutation(len(train_queries))
        total_loss = 0.0
        used = 0
        empty = 0
        for lo in range(0, len(order), cfg.batch_size):
            chunk = order[lo:lo + cfg.batch_size]
            terms = []
            for qi in chunk:
                qi = int(qi)
                query = train_queries[qi]
                sample_epoch = 0 if cfg.cache_toc else epoch
                if cfg.cache_toc and qi in toc_cache:
                    toc = toc_cache[qi]
                else:
                    toc = model.retrieve(kg, query,
                                         seed_for(cfg.seed, 0, sample_epoch, qi))
                    if cfg.cache_toc:
                        toc_cache[qi] = toc
                etoc = model.select(toc, seed_for(cfg.seed, 2, epoch, qi))
                fwd = model.forward(etoc)
                if fwd is None:
                    empty += 1
                    continue
                target_norm = model.stats.normalize(query.attribute, query.target)
                term = loss_term(fwd.prediction, target_norm, cfg.loss)
                if not np.isfinite(term.data):
                    raise TrainingFault(
                        f"non-finite loss at epoch {epoch} for query "
                        f"(entity={query.entity}, attribute={query.attribute})")
                terms.append(term)
            if not terms:
                continue
            opt.zero_grad()
            inv = 1.0 / len(terms)
            for term in terms:
                backward(term, seed=inv)
            clip_global_norm(opt.params, cfg.clip_norm)
            opt.step()
            total_loss += sum(t.item() for t in terms)
            used += len(terms)

        train_loss = total_loss / max(used, 1)
        val_mae = validation_mae(model, kg, val_queries, epoch)
        stats = EpochStats(epoch=epoch, train_loss=train_loss, val_mae=val_mae,
                           seconds=time.perf_counter() - started,
                           queries_used=used, queries_empty=empty)
        result.history.append(stats)
        if progress is not None:
            progress(stats)

        if val_queries and val_mae < best_val:
            best_val = val_mae
            best_epoch = epoch
            best_snap = _snapshot(model)
        if val_queries and epoch - best_epoch >= cfg.patience:
            result.stop_reason = "patience"
            break
        if prev_loss is not None and abs(prev_loss - train_loss) < cfg.epsilon:
            result.stop_reason = "converged"
            break
        prev_loss = train_loss

    if best_snap is not None:
        _restore(model, best_snap)
    result.best_val = best_val if best_epoch >= 0 else float("nan")
    result.best_epoch = best_epoch
    return result


def epochs_to_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,train_loss,val_mae,seconds,queries_used,queries_empty"]
    for h in history:
        lines.append(f"{h.epoch},{h.train_loss:.8f},{h.val_mae:.8f},"
                     f"{h.seconds:.3f},{h.queries_used},{h.queries_empty}")
    return "\n".join(lines) + "\n"
