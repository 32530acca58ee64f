"""Shared test utilities: independent scalar oracles and finite differences."""

from __future__ import annotations

import math

import numpy as np

from rachain import autodiff as ad


# ---------------------------------------------------------------------------
# scalar geometry oracles (pure python, no shared code with the package)


def oracle_mobius(x, y, c=1.0):
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    xy = sum(a * b for a, b in zip(x, y))
    xx = sum(a * a for a in x)
    yy = sum(b * b for b in y)
    den = 1.0 + 2.0 * c * xy + c * c * xx * yy
    cx = 1.0 + 2.0 * c * xy + c * yy
    cy = 1.0 - c * xx
    return [(cx * a + cy * b) / den for a, b in zip(x, y)]


def oracle_distance(x, y, c=1.0):
    neg = [-float(v) for v in x]
    d = oracle_mobius(neg, y, c)
    norm = math.sqrt(sum(v * v for v in d))
    return (2.0 / math.sqrt(c)) * math.atanh(math.sqrt(c) * norm)


def oracle_arcosh_distance(x, y):
    dd = sum((a - b) ** 2 for a, b in zip(x, y))
    ax = 1.0 - sum(a * a for a in x)
    ay = 1.0 - sum(b * b for b in y)
    return math.acosh(1.0 + 2.0 * dd / (ax * ay))


def oracle_log_map(x, c=1.0):
    n = math.sqrt(sum(v * v for v in x))
    if n == 0.0:
        return [0.0 for _ in x]
    s = math.atanh(math.sqrt(c) * n) / (math.sqrt(c) * n)
    return [s * float(v) for v in x]


def random_inball(rng: np.random.Generator, n: int, dim: int, radius: float = 0.85):
    """Points with norm <= radius (well inside the unit ball)."""
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    r = radius * rng.random((n, 1)) ** (1.0 / dim)
    return direction * r


# ---------------------------------------------------------------------------
# finite differences


def numeric_grad(f, arrays: dict[str, np.ndarray], eps: float = 1e-5):
    """Central-difference gradient of scalar f(arrays) per named array."""
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f(arrays)
            flat[i] = orig - eps
            lo = f(arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(build, arrays: dict[str, np.ndarray], tol: float = 1e-4) -> float:
    """build(params: dict[str, Tensor]) -> scalar Tensor. Returns worst rel err."""
    params = {k: ad.Parameter(v.copy(), name=k) for k, v in arrays.items()}
    out = build(params)
    ad.backward(out)
    analytic = {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    def evaluate(values: dict[str, np.ndarray]) -> float:
        frozen = {k: ad.Parameter(v.copy(), name=k) for k, v in values.items()}
        return float(build(frozen).data)

    numeric = numeric_grad(evaluate, {k: v.copy() for k, v in arrays.items()})
    worst = max(max_rel_err(analytic[k], numeric[k]) for k in arrays)
    assert worst < tol, f"gradient mismatch {worst:.3e} >= {tol:.0e}"
    return worst


# ---------------------------------------------------------------------------
# the primitive-op inventory checked against finite differences


def grad_cases(rng: np.random.Generator):
    """(name, arrays, build) triples covering every differentiable primitive.

    Shapes stay small (<= 16 per axis) and inputs avoid kinks (relu/abs/clip
    boundaries) so central differences are trustworthy.
    """

    def away_from_zero(shape, low=0.2, high=1.0):
        mag = rng.uniform(low, high, shape)
        sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        return mag * sign

    cases = []

    def case(name, arrays, build):
        cases.append((name, arrays, build))

    case("add_broadcast",
         {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((4,))},
         lambda p: ad.tensor_sum(ad.mul(ad.add(p["a"], p["b"]), rng_const_34)))
    case("sub",
         {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((3, 4))},
         lambda p: ad.tensor_sum(ad.square(ad.sub(p["a"], p["b"]))))
    case("mul_broadcast",
         {"a": rng.standard_normal((2, 3, 4)), "b": rng.standard_normal((3, 1))},
         lambda p: ad.tensor_sum(ad.mul(p["a"], p["b"])))
    case("div",
         {"a": rng.standard_normal((3, 4)), "b": away_from_zero((3, 4), 0.5, 2.0)},
         lambda p: ad.tensor_sum(ad.div(p["a"], p["b"])))
    case("matmul",
         {"a": rng.standard_normal((3, 5)), "b": rng.standard_normal((5, 4))},
         lambda p: ad.tensor_sum(ad.square(ad.matmul(p["a"], p["b"]))))
    case("matmul_batched",
         {"a": rng.standard_normal((2, 3, 4)), "b": rng.standard_normal((2, 4, 3))},
         lambda p: ad.tensor_sum(ad.matmul(p["a"], p["b"])))
    case("matmul_broadcast",
         {"a": rng.standard_normal((2, 3, 4)), "b": rng.standard_normal((4, 5))},
         lambda p: ad.tensor_sum(ad.square(ad.matmul(p["a"], p["b"]))))
    case("reshape_swap",
         {"a": rng.standard_normal((2, 3, 4))},
         lambda p: ad.tensor_sum(ad.square(
             ad.swapaxes(ad.reshape(p["a"], (2, 12, 1)), 0, 1))))
    case("broadcast_to",
         {"a": rng.standard_normal((1, 4))},
         lambda p: ad.tensor_sum(ad.square(ad.broadcast_to(p["a"], (3, 4)))))
    case("concat",
         {"a": rng.standard_normal((2, 3)), "b": rng.standard_normal((4, 3))},
         lambda p: ad.tensor_sum(ad.square(ad.concat([p["a"], p["b"]], axis=0))))
    case("getitem",
         {"a": rng.standard_normal((4, 5))},
         lambda p: ad.tensor_sum(ad.square(p["a"][1:3, ::2])))
    case("take_rows_repeated",
         {"a": rng.standard_normal((5, 3))},
         lambda p: ad.tensor_sum(ad.square(
             ad.take_rows(p["a"], np.array([0, 2, 2, 4, 0])))))
    case("relu",
         {"a": away_from_zero((3, 4))},
         lambda p: ad.tensor_sum(ad.relu(p["a"])))
    case("exp",
         {"a": rng.standard_normal((3, 4))},
         lambda p: ad.tensor_sum(ad.exp(p["a"])))
    case("log",
         {"a": rng.uniform(0.5, 2.0, (3, 4))},
         lambda p: ad.tensor_sum(ad.log(p["a"])))
    case("sqrt",
         {"a": rng.uniform(0.5, 2.0, (3, 4))},
         lambda p: ad.tensor_sum(ad.sqrt(p["a"])))
    case("square",
         {"a": rng.standard_normal((3, 4))},
         lambda p: ad.tensor_sum(ad.square(p["a"])))
    case("absolute",
         {"a": away_from_zero((3, 4))},
         lambda p: ad.tensor_sum(ad.absolute(p["a"])))
    case("arctanh",
         {"a": rng.uniform(-0.8, 0.8, (3, 4))},
         lambda p: ad.tensor_sum(ad.arctanh(p["a"])))
    case("clip_interior",
         {"a": rng.uniform(0.2, 0.8, (3, 4))},
         lambda p: ad.tensor_sum(ad.square(ad.clip(p["a"], 0.0, 1.0))))
    case("sum_axis",
         {"a": rng.standard_normal((3, 4, 2))},
         lambda p: ad.tensor_sum(ad.square(ad.tensor_sum(p["a"], axis=1))))
    case("mean_keepdims",
         {"a": rng.standard_normal((3, 4))},
         lambda p: ad.tensor_sum(ad.square(ad.mean(p["a"], axis=-1, keepdims=True))))
    case("softmax",
         {"a": rng.standard_normal((3, 5))},
         lambda p: ad.tensor_sum(ad.mul(ad.softmax(p["a"]), rng_const_35)))
    mask = np.array([[True, True, False, True, False],
                     [True, False, True, True, True],
                     [False, True, True, False, True]])
    case("softmax_masked",
         {"a": rng.standard_normal((3, 5))},
         lambda p: ad.tensor_sum(ad.mul(ad.softmax(p["a"], mask=mask), rng_const_35)))
    case("layer_norm",
         {"a": rng.standard_normal((3, 6)),
          "g": rng.uniform(0.5, 1.5, 6),
          "b": rng.standard_normal(6)},
         lambda p: ad.tensor_sum(ad.square(ad.layer_norm(p["a"], p["g"], p["b"]))))
    case("linear",
         {"x": rng.standard_normal((3, 4)), "w": rng.standard_normal((4, 2)),
          "b": rng.standard_normal(2)},
         lambda p: ad.tensor_sum(ad.square(ad.linear(p["x"], p["w"], p["b"]))))
    return cases


# fixed mixing constants so reductions see non-uniform output gradients
_mix_rng = np.random.default_rng(12345)
rng_const_34 = _mix_rng.standard_normal((3, 4))
rng_const_35 = _mix_rng.standard_normal((3, 5))
