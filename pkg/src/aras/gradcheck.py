"""Finite-difference verification of every analytic gradient path.

Each check builds a scalar objective sum(forward(...) * R) for a fixed
random projection R, computes analytic gradients via the layer's backward
pass, and compares against central differences in float64. The same
routines back the ``gradcheck`` CLI subcommand and the acceptance suite.
"""
from __future__ import annotations

import numpy as np

from .nn import BatchNorm2d, Conv2d, Embedding, Linear, MaxPool2x2, ReLU
from .qnet import NetSpec, QNetwork

# Central differences in float64: 1e-4 balances truncation against
# cancellation noise and keeps the step well inside ReLU linear pieces.
# Elements that miss at the primary step are re-measured at the fallback
# steps: a kink crossing fails only at the larger steps, pure roundoff
# noise only at the smaller ones, and a wrong gradient fails at them all.
DEFAULT_H = 1e-4
FALLBACK_H = (1e-5, 3e-4, 1e-3)
THRESHOLD = 1e-4


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1e-6, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def _fd_element(f, flat: np.ndarray, i: int, h: float) -> float:
    orig = flat[i]
    flat[i] = orig + h
    hi = f()
    flat[i] = orig - h
    lo = f()
    flat[i] = orig
    return (hi - lo) / (2 * h)


def fd_grad(f, x: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """Central-difference gradient of scalar f with respect to array x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        gflat[i] = _fd_element(f, flat, i, h)
    return g


def verified_rel_error(f, x: np.ndarray, analytic: np.ndarray,
                       h: float = DEFAULT_H) -> float:
    """Max per-element relative error, re-measuring misses at fallback steps."""
    numeric = fd_grad(f, x, h)
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    denom = np.maximum(1e-6, np.maximum(np.abs(a), np.abs(n)))
    rel = np.abs(a - n) / denom
    flat = x.reshape(-1)
    for i in np.flatnonzero(rel >= THRESHOLD):
        best = rel[i]
        for hh in FALLBACK_H:
            ni = _fd_element(f, flat, int(i), hh)
            d = max(1e-6, abs(a[i]), abs(ni))
            best = min(best, abs(a[i] - ni) / d)
        rel[i] = best
    return float(rel.max()) if rel.size else 0.0


def _away_from_zero(rng, shape, lo=0.5, hi=1.5):
    """Random values bounded away from 0 so ReLU kinks cannot bias the check."""
    return (rng.uniform(lo, hi, size=shape) * rng.choice([-1.0, 1.0], size=shape))


def _check_layer(layer, loss, x_list: list[np.ndarray], dx_list: list[np.ndarray],
                 h: float) -> float:
    errs = [verified_rel_error(loss, x, dx, h) for x, dx in zip(x_list, dx_list)]
    for p in layer.params():
        errs.append(verified_rel_error(loss, p.data, p.grad, h))
    return max(errs)


def check_conv(seed: int, h: float = DEFAULT_H) -> float:
    rng = np.random.default_rng(seed)
    layer = Conv2d("conv", 3, 4, 3, rng, dtype=np.float64)
    x = rng.normal(size=(2, 3, 6, 6))
    r = rng.normal(size=(2, 4, 6, 6))
    loss = lambda: float((layer.forward(x) * r).sum())
    loss()
    dx = layer.backward(r)
    return _check_layer(layer, loss, [x], [dx], h)


def check_batchnorm(seed: int, h: float = DEFAULT_H) -> float:
    rng = np.random.default_rng(seed)
    layer = BatchNorm2d("bn", 4, dtype=np.float64)
    layer.gamma.data[...] = rng.uniform(0.5, 1.5, size=4)
    layer.beta.data[...] = rng.normal(size=4)
    x = rng.normal(size=(3, 4, 5, 5))
    r = rng.normal(size=(3, 4, 5, 5))
    loss = lambda: float((layer.forward(x, train=True) * r).sum())
    loss()
    dx = layer.backward(r)
    return _check_layer(layer, loss, [x], [dx], h)


def check_relu(seed: int, h: float = DEFAULT_H) -> float:
    rng = np.random.default_rng(seed)
    layer = ReLU()
    x = _away_from_zero(rng, (4, 3, 5, 5))
    r = rng.normal(size=x.shape)
    loss = lambda: float((layer.forward(x) * r).sum())
    loss()
    dx = layer.backward(r)
    return verified_rel_error(loss, x, dx, h)


def check_maxpool(seed: int, h: float = DEFAULT_H) -> float:
    rng = np.random.default_rng(seed)
    layer = MaxPool2x2()
    x = rng.normal(size=(2, 3, 6, 6))
    r = rng.normal(size=(2, 3, 3, 3))
    loss = lambda: float((layer.forward(x) * r).sum())
    loss()
    dx = layer.backward(r)
    return verified_rel_error(loss, x, dx, h)


def check_embedding(seed: int, h: float = DEFAULT_H) -> float:
    rng = np.random.default_rng(seed)
    layer = Embedding("emb", 3, 6, rng, dtype=np.float64)
    idx = rng.integers(0, 3, size=(5, 4))
    r = rng.normal(size=(5, 4, 6))
    loss = lambda: float((layer.forward(idx) * r).sum())
    loss()
    layer.backward(r)
    return verified_rel_error(loss, layer.W.data, layer.W.grad, h)


def check_linear(seed: int, h: float = DEFAULT_H) -> float:
    rng = np.random.default_rng(seed)
    layer = Linear("fc", 7, 5, rng, dtype=np.float64)
    x = rng.normal(size=(4, 7))
    r = rng.normal(size=(4, 5))
    loss = lambda: float((layer.forward(x) * r).sum())
    loss()
    dx = layer.backward(r)
    return _check_layer(layer, loss, [x], [dx], h)


def tiny_spec() -> NetSpec:
    return NetSpec(grid_size=8, stack_size=2, in_channels=2, conv_channels=(4, 8),
                   embed_dim=4, fc_hidden=16)


def check_full_network(seed: int, h: float = DEFAULT_H, spec: NetSpec | None = None,
                       batch: int = 2) -> float:
    """End-to-end check of every parameter gradient through the whole net."""
    rng = np.random.default_rng(seed)
    net = QNetwork(spec or tiny_spec(), rng, dtype=np.float64)
    s = net.spec
    frames = rng.normal(size=(batch, s.stack_size, s.in_channels, s.grid_size, s.grid_size))
    inputs = rng.integers(-1, 2, size=(batch, s.stack_size))
    r = rng.normal(size=(batch, s.n_actions))
    loss = lambda: float((net.forward(frames, inputs, train=True) * r).sum())
    loss()
    net.zero_grad()
    net.backward(r)
    errs = [verified_rel_error(loss, p.data, p.grad, h) for p in net.params()]
    return max(errs)


LAYER_CHECKS = {
    "conv": check_conv,
    "batchnorm": check_batchnorm,
    "relu": check_relu,
    "maxpool": check_maxpool,
    "embedding": check_embedding,
    "linear": check_linear,
    "full-network": check_full_network,
}


def run_gradcheck(seeds: int = 20, h: float = DEFAULT_H) -> dict[str, float]:
    """Max relative error per layer type over the given number of seeds."""
    return {
        name: max(fn(seed, h) for seed in range(seeds))
        for name, fn in LAYER_CHECKS.items()
    }
