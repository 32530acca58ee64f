"""Chain encoder.

A chain becomes a token sequence [source_attr, r_l, ..., r_1, query_attr,
end]: ball embeddings are pulled into the tangent space at the origin by the
log map, linearly lifted when the filter dimension differs from the encoder
dimension, and a learned end-of-chain token is appended. An encoder-only
transformer (post-norm, residual, multi-head attention scaled by
1/sqrt(model_dim)) contextualizes the sequence; the end token's output is the
chain representation.

The numerical-aware affine transfer conditions that representation on the
source value: the value's Float64 big-endian bit pattern (64 zeros/ones)
drives two MLPs producing a matrix E_a and shift E_b, giving
E_a^T e_chain + E_b. At initialization E_a is the identity and E_b zero.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    add,
    arctanh,
    broadcast_to,
    concat,
    div,
    getitem,
    layer_norm,
    linear,
    matmul,
    mul,
    relu,
    reshape,
    softmax,
    sqrt,
    square,
    swapaxes,
    take_rows,
    tensor_sum,
)
from .filter import FilterEmbeddings
from .retrieval import RAChain

# ---------------------------------------------------------------------------
# Float64 bit-stream


def encode_value(value: float) -> np.ndarray:
    """The 64 bits of the value's IEEE-754 double encoding, sign bit first."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot encode non-finite value {value}")
    raw = struct.pack(">d", value)
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8)).astype(np.float64)


def decode_value(bits: np.ndarray) -> float:
    bits = np.asarray(bits)
    if bits.shape != (64,):
        raise ValueError(f"expected 64 bits, got shape {bits.shape}")
    if not np.all((bits == 0.0) | (bits == 1.0)):
        raise ValueError("bits must be 0 or 1")
    raw = np.packbits(bits.astype(np.uint8)).tobytes()
    return struct.unpack(">d", raw)[0]


def encode_values(values) -> np.ndarray:
    return np.stack([encode_value(v) for v in values])


# ---------------------------------------------------------------------------
# transformer


def _normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    return rng.standard_normal(shape) * std


@dataclass
class LayerParams:
    wq: Parameter
    wk: Parameter
    wv: Parameter
    wo: Parameter
    ln1_gain: Parameter
    ln1_bias: Parameter
    ffn_w1: Parameter
    ffn_b1: Parameter
    ffn_w2: Parameter
    ffn_b2: Parameter
    ln2_gain: Parameter
    ln2_bias: Parameter

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, ffn_dim: int, tag: str):
        def p(name, shape, std=0.02):
            return Parameter(_normal(rng, shape, std), name=f"{tag}.{name}")

        return cls(
            wq=p("wq", (dim, dim)),
            wk=p("wk", (dim, dim)),
            wv=p("wv", (dim, dim)),
            wo=p("wo", (dim, dim)),
            ln1_gain=Parameter(np.ones(dim), name=f"{tag}.ln1_gain"),
            ln1_bias=Parameter(np.zeros(dim), name=f"{tag}.ln1_bias"),
            ffn_w1=p("ffn_w1", (dim, ffn_dim)),
            ffn_b1=Parameter(np.zeros(ffn_dim), name=f"{tag}.ffn_b1"),
            ffn_w2=p("ffn_w2", (ffn_dim, dim)),
            ffn_b2=Parameter(np.zeros(dim), name=f"{tag}.ffn_b2"),
            ln2_gain=Parameter(np.ones(dim), name=f"{tag}.ln2_gain"),
            ln2_bias=Parameter(np.zeros(dim), name=f"{tag}.ln2_bias"),
        )

    def parameters(self) -> list[Parameter]:
        return [self.wq, self.wk, self.wv, self.wo, self.ln1_gain, self.ln1_bias,
                self.ffn_w1, self.ffn_b1, self.ffn_w2, self.ffn_b2,
                self.ln2_gain, self.ln2_bias]


@dataclass
class TransformerParams:
    layers: list[LayerParams]
    heads: int
    dim: int

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, n_layers: int, heads: int,
               ffn_dim: int | None = None, tag: str = "enc"):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        ffn_dim = 2 * dim if ffn_dim is None else ffn_dim
        layers = [LayerParams.create(rng, dim, ffn_dim, f"{tag}.layer{i}")
                  for i in range(n_layers)]
        return cls(layers=layers, heads=heads, dim=dim)

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]


def _attention(x: Tensor, layer: LayerParams, heads: int, dim: int,
               key_mask: np.ndarray | None):
    b, length, _ = x.shape
    head_dim = dim // heads

    def split(t: Tensor) -> Tensor:
        return swapaxes(reshape(t, (b, length, heads, head_dim)), 1, 2)

    q = split(matmul(x, layer.wq))
    k = split(matmul(x, layer.wk))
    v = split(matmul(x, layer.wv))
    scores = mul(matmul(q, swapaxes(k, -1, -2)), 1.0 / np.sqrt(dim))
    mask4 = None if key_mask is None else key_mask[:, None, None, :]
    probs = softmax(scores, mask=mask4)
    ctx = reshape(swapaxes(matmul(probs, v), 1, 2), (b, length, dim))
    return matmul(ctx, layer.wo), probs


def transformer_stack(x: Tensor, params: TransformerParams,
                      key_mask: np.ndarray | None = None,
                      capture: list | None = None) -> Tensor:
    """Post-norm encoder: x = LN(x + attn(x)); x = LN(x + ffn(x)) per layer."""
    for layer in params.layers:
        attn_out, probs = _attention(x, layer, params.heads, params.dim, key_mask)
        if capture is not None:
            capture.append(probs.data)
        x = layer_norm(add(x, attn_out), layer.ln1_gain, layer.ln1_bias)
        hidden = relu(linear(x, layer.ffn_w1, layer.ffn_b1))
        ffn_out = linear(hidden, layer.ffn_w2, layer.ffn_b2)
        x = layer_norm(add(x, ffn_out), layer.ln2_gain, layer.ln2_bias)
    return x


# ---------------------------------------------------------------------------
# tokenization and encoding


def log_map_tensor(x: Tensor, curvature: float = 1.0) -> Tensor:
    """Differentiable origin log map; the 1e-30 floor keeps the norm smooth."""
    sc = float(np.sqrt(curvature))
    n = sqrt(add(tensor_sum(square(x), axis=-1, keepdims=True), 1e-30))
    sn = mul(n, sc)
    return mul(x, div(arctanh(sn), sn))


@dataclass
class ChainEncoderParams:
    stack: TransformerParams
    end_token: Parameter
    lift: Parameter | None  # maps filter_dim -> dim when they differ

    @classmethod
    def create(cls, rng: np.random.Generator, filter_dim: int, dim: int,
               n_layers: int, heads: int):
        lift = None
        if filter_dim != dim:
            lift = Parameter(_normal(rng, (filter_dim, dim), 1.0 / np.sqrt(filter_dim)),
                             name="enc.lift")
        return cls(
            stack=TransformerParams.create(rng, dim, n_layers, heads, tag="enc"),
            end_token=Parameter(_normal(rng, (dim,)), name="enc.end_token"),
            lift=lift,
        )

    def parameters(self) -> list[Parameter]:
        out = self.stack.parameters() + [self.end_token]
        if self.lift is not None:
            out.append(self.lift)
        return out


def chain_tokens(chains: list[RAChain], query_attribute: int,
                 embeddings: FilterEmbeddings, params: ChainEncoderParams,
                 include_end: bool = True) -> Tensor:
    """Token tensor (m, l + 3, dim) for m chains of one shared length l.

    include_end=False drops the end-of-chain token (m, l + 2, dim), used by the
    transformer-free variant that mean-pools the tokens.
    """
    m = len(chains)
    length = chains[0].length
    if any(c.length != length for c in chains):
        raise ValueError("chains in one batch must share a length")
    df = embeddings.dim

    src_ids = np.array([c.source_attribute for c in chains], dtype=np.int64)
    # query-adjacent relation next to the query token: store order reversed
    rel_ids = np.array([list(reversed(c.relations)) for c in chains], dtype=np.int64)
    qry_ids = np.full(m, query_attribute, dtype=np.int64)

    ap = reshape(take_rows(embeddings.attributes, src_ids), (m, 1, df))
    rr = reshape(take_rows(embeddings.relations, rel_ids.reshape(-1)), (m, length, df))
    aq = reshape(take_rows(embeddings.attributes, qry_ids), (m, 1, df))
    ball = concat([ap, rr, aq], axis=1)
    tangent = log_map_tensor(ball, embeddings.curvature)
    if params.lift is not None:
        tangent = matmul(tangent, params.lift)
    if not include_end:
        return tangent
    dim = params.stack.dim
    end = broadcast_to(reshape(params.end_token, (1, 1, dim)), (m, 1, dim))
    return concat([tangent, end], axis=1)


def encode_chains(chains: list[RAChain], query_attribute: int,
                  embeddings: FilterEmbeddings, params: ChainEncoderParams,
                  capture: list | None = None) -> Tensor:
    """Chain representations (m, dim): the end token's contextualized output."""
    tokens = chain_tokens(chains, query_attribute, embeddings, params)
    out = transformer_stack(tokens, params.stack, capture=capture)
    return getitem(out, (slice(None), -1))


# ---------------------------------------------------------------------------
# numerical-aware affine transfer


@dataclass
class AffineNets:
    """Two bit-stream-driven MLPs: 64 -> hidden -> dim*dim and 64 -> hidden -> dim."""

    w1a: Parameter
    b1a: Parameter
    w2a: Parameter
    b2a: Parameter
    w1b: Parameter
    b1b: Parameter
    w2b: Parameter
    b2b: Parameter
    dim: int

    @classmethod
    def create(cls, rng: np.random.Generator, dim: int, hidden: int = 256):
        # final layers start at zero so the transfer opens as the identity map
        return cls(
            w1a=Parameter(_normal(rng, (64, hidden), 0.05), name="affine.w1a"),
            b1a=Parameter(np.zeros(hidden), name="affine.b1a"),
            w2a=Parameter(np.zeros((hidden, dim * dim)), name="affine.w2a"),
            b2a=Parameter(np.eye(dim).reshape(-1), name="affine.b2a"),
            w1b=Parameter(_normal(rng, (64, hidden), 0.05), name="affine.w1b"),
            b1b=Parameter(np.zeros(hidden), name="affine.b1b"),
            w2b=Parameter(np.zeros((hidden, dim)), name="affine.w2b"),
            b2b=Parameter(np.zeros(dim), name="affine.b2b"),
            dim=dim,
        )

    def parameters(self) -> list[Parameter]:
        return [self.w1a, self.b1a, self.w2a, self.b2a,
                self.w1b, self.b1b, self.w2b, self.b2b]


def affine_transfer(chain_reps: Tensor, values, nets: AffineNets) -> Tensor:
    """E_a(value)^T e_chain + E_b(value), batched over m chains."""
    m = chain_reps.shape[0]
    d = nets.dim
    bits = Tensor(encode_values(values))
    ha = relu(linear(bits, nets.w1a, nets.b1a))
    ea = reshape(linear(ha, nets.w2a, nets.b2a), (m, d, d))
    hb = relu(linear(bits, nets.w1b, nets.b1b))
    eb = linear(hb, nets.w2b, nets.b2b)
    # row-vector form: (e^T E_a)^T == E_a^T e
    transferred = reshape(matmul(reshape(chain_reps, (m, 1, d)), ea), (m, d))
    return add(transferred, eb)
