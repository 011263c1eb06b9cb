"""Minimal neural-network layers with hand-written reverse-mode gradients.

Everything is plain numpy. Each layer caches what its backward pass needs
on forward, accumulates parameter gradients in place, and returns the
gradient with respect to its input. Layers are dtype-generic: float32 for
training speed, float64 when checking gradients against finite differences.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Param:
    """A named tensor with an accumulated gradient."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = data
        self.grad = np.zeros_like(data)

    def zero_grad(self) -> None:
        self.grad[...] = 0


class Conv2d:
    """3x3 same-padding convolution (stride 1) via im2col."""

    def __init__(self, name: str, in_ch: int, out_ch: int, ksize: int,
                 rng: np.random.Generator, dtype=np.float32,
                 input_grad: bool = True):
        fan_in = in_ch * ksize * ksize
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, ksize, ksize))
        self.W = Param(f"{name}.W", w.astype(dtype))
        self.b = Param(f"{name}.b", np.zeros(out_ch, dtype=dtype))
        self.ksize = ksize
        self.pad = ksize // 2
        self.input_grad = input_grad
        self._cols: np.ndarray | None = None
        self._xshape: tuple | None = None

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        k, p = self.ksize, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (n, c, h, w, k, k)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)
        cols = np.ascontiguousarray(cols)
        out_ch = self.W.data.shape[0]
        y = cols @ self.W.data.reshape(out_ch, -1).T + self.b.data
        self._cols = cols
        self._xshape = x.shape
        return y.reshape(n, h, w, out_ch).transpose(0, 3, 1, 2)

    def backward(self, dy: np.ndarray) -> np.ndarray | None:
        n, c, h, w = self._xshape
        k, p = self.ksize, self.pad
        out_ch = self.W.data.shape[0]
        dy_cols = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(n * h * w, out_ch)
        self.b.grad += dy_cols.sum(axis=0)
        self.W.grad += (dy_cols.T @ self._cols).reshape(self.W.data.shape)
        if not self.input_grad:
            return None
        dcols = dy_cols @ self.W.data.reshape(out_ch, -1)
        dwin = dcols.reshape(n, h, w, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dy.dtype)
        for ki in range(k):
            for kj in range(k):
                dxp[:, :, ki:ki + h, kj:kj + w] += dwin[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w]


class SparseConv2d(Conv2d):
    """Conv2d with a fast path for inputs that are mostly zeros.

    Latent frames carry one or two active cells per channel, so the
    convolution reduces to scattering kernel patches around the active
    cells (forward) and gathering output-gradient patches (weight grad).
    Dense inputs fall back to the im2col path; numerics are identical.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._nz: tuple | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        nz = np.nonzero(x)
        if len(nz[0]) > 4 * n:  # not sparse enough to bother
            self._nz = None
            return super().forward(x)
        k, p = self.ksize, self.pad
        out_ch = self.W.data.shape[0]
        vals = x[nz].astype(self.W.data.dtype)
        self._nz = (nz, vals)
        self._xshape = x.shape
        yp = np.zeros((n, out_ch, h + 2 * p, w + 2 * p), dtype=self.W.data.dtype)
        ni, ci, ri, cj = nz
        for ki in range(k):
            for kj in range(k):
                contrib = (self.W.data[:, ci, ki, kj] * vals).T  # (K, out_ch)
                self._scatter(yp, ni, ri + (k - 1 - ki), cj + (k - 1 - kj), contrib)
        y = yp[:, :, p:p + h, p:p + w]
        y += self.b.data[:, None, None]
        return y

    @staticmethod
    def _scatter(yp, ni, rows, cols, contrib):
        """yp[n, :, r, c] += contrib per entry, accumulating duplicate targets.

        Fancy-index += silently drops repeated indices, so entries sharing a
        target cell are split into rounds with unique targets.
        """
        m = len(ni)
        if m == 0:
            return
        order = np.lexsort((cols, rows, ni))
        same = np.zeros(m, dtype=bool)
        same[1:] = ((ni[order][1:] == ni[order][:-1])
                    & (rows[order][1:] == rows[order][:-1])
                    & (cols[order][1:] == cols[order][:-1]))
        idx = np.arange(m)
        group_first = np.maximum.accumulate(np.where(~same, idx, 0))
        rank = idx - group_first
        for r in range(int(rank.max()) + 1):
            sel = order[rank == r]
            yp[ni[sel], :, rows[sel], cols[sel]] += contrib[sel]

    def backward(self, dy: np.ndarray) -> np.ndarray | None:
        if self._nz is None:
            return super().backward(dy)
        (ni, ci, ri, cj), vals = self._nz
        _, c_in, _, _ = self._xshape
        k, p = self.ksize, self.pad
        self.b.grad += dy.sum(axis=(0, 2, 3))
        dyp = np.pad(dy, ((0, 0), (0, 0), (p, p), (p, p)))
        for ki in range(k):
            for kj in range(k):
                patches = dyp[ni, :, ri + (k - 1 - ki), cj + (k - 1 - kj)]  # (K, out_ch)
                acc = np.zeros((c_in, patches.shape[1]), dtype=self.W.grad.dtype)
                np.add.at(acc, ci, patches * vals[:, None])
                self.W.grad[:, :, ki, kj] += acc.T
        if not self.input_grad:
            return None
        raise NotImplementedError(
            "SparseConv2d serves as a first layer; it does not produce input gradients"
        )


class BatchNorm2d:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with batch statistics and updates running
    estimates; inference mode uses the running estimates, which keeps the
    deployed forward pass deterministic.
    """

    def __init__(self, name: str, channels: int, dtype=np.float32,
                 momentum: float = 0.1, eps: float = 1e-5):
        self.name = name
        self.gamma = Param(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Param(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self._xc: np.ndarray | None = None
        self._ivar: np.ndarray | None = None
        self._train = False

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]

    def state(self) -> dict[str, np.ndarray]:
        return {
            f"{self.name}.running_mean": self.running_mean,
            f"{self.name}.running_var": self.running_var,
        }

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._train = train
        if train:
            mu = x.mean(axis=(0, 2, 3))
            xc = x - mu[:, None, None]
            var = np.einsum("nchw,nchw->c", xc, xc) / (x.shape[0] * x.shape[2] * x.shape[3])
            m = self.momentum
            self.running_mean += (m * (mu - self.running_mean)).astype(self.running_mean.dtype)
            self.running_var += (m * (var - self.running_var)).astype(self.running_var.dtype)
        else:
            mu = self.running_mean
            var = self.running_var
            xc = x - mu[:, None, None]
        ivar = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        self._xc = xc
        self._ivar = ivar
        scale = (self.gamma.data * ivar)[:, None, None]
        return xc * scale + self.beta.data[:, None, None]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        ivar = self._ivar
        xhat = self._xc * ivar[:, None, None]
        sum_dy = dy.sum(axis=(0, 2, 3))
        sum_dy_xhat = np.einsum("nchw,nchw->c", dy, xhat)
        self.gamma.grad += sum_dy_xhat
        self.beta.grad += sum_dy
        g = (self.gamma.data * ivar)[:, None, None]
        if not self._train:
            return dy * g
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        return (g / m) * (m * dy - sum_dy[:, None, None] - xhat * sum_dy_xhat[:, None, None])


class ReLU:
    def __init__(self):
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class MaxPool2x2:
    """2x2 max pooling, stride 2. Ties route the gradient to the first
    window position in row-major order."""

    def __init__(self):
        self._x: np.ndarray | None = None
        self._y: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        a = x[:, :, 0::2, 0::2]
        b = x[:, :, 0::2, 1::2]
        c = x[:, :, 1::2, 0::2]
        d = x[:, :, 1::2, 1::2]
        y = np.maximum(np.maximum(a, b), np.maximum(c, d))
        self._x = x
        self._y = y
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, y = self._x, self._y
        dx = np.zeros_like(x, dtype=dy.dtype)
        taken = np.zeros(y.shape, dtype=bool)
        for i in (0, 1):
            for j in (0, 1):
                win = x[:, :, i::2, j::2] == y
                sel = win & ~taken
                dx[:, :, i::2, j::2] = np.where(sel, dy, 0)
                taken |= win
        return dx


class Embedding:
    """Lookup table; indices must already be non-negative."""

    def __init__(self, name: str, n_entries: int, dim: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.W = Param(f"{name}.W", rng.normal(0.0, 1.0, size=(n_entries, dim)).astype(dtype))
        self._idx: np.ndarray | None = None

    def params(self) -> list[Param]:
        return [self.W]

    def forward(self, idx: np.ndarray) -> np.ndarray:
        self._idx = idx
        return self.W.data[idx]

    def backward(self, dy: np.ndarray) -> None:
        np.add.at(self.W.grad, self._idx, dy)


class Linear:
    def __init__(self, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator, dtype=np.float32):
        w = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(out_dim, in_dim))
        self.W = Param(f"{name}.W", w.astype(dtype))
        self.b = Param(f"{name}.b", np.zeros(out_dim, dtype=dtype))
        self._x: np.ndarray | None = None

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W.data.T + self.b.data

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.W.grad += dy.T @ self._x
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.data


class Adam:
    """Adam with bias correction, applied to a fixed parameter list."""

    def __init__(self, params: list[Param], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data -= (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
