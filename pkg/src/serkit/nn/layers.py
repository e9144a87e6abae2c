"""Layers with hand-written backward passes.

Image tensors are channels-last, (batch, H, W, channels). Convolution
weights keep the (out, in, kh, kw) layout so externally converted ResNet
checkpoints load without reshaping; see :func:`conv2d_forward` for an
NCHW functional entry point.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided, sliding_window_view

from ..errors import DegenerateBatch, ShapeMismatch
from .core import Module


def _as_rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


class Dense(Module):
    """y = x W^T + b with W of shape (out, in)."""

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        rng = _as_rng(rng)
        bound = 1.0 / np.sqrt(in_features)
        self.weight = self.add_param("weight", rng.uniform(-bound, bound, (out_features, in_features)))
        self.bias = self.add_param("bias", rng.uniform(-bound, bound, out_features))
        self._x = None

    def forward(self, x):
        x = np.asarray(x, dtype=self.weight.value.dtype)
        if x.shape[-1] != self.weight.value.shape[1]:
            raise ShapeMismatch(f"Dense expects {self.weight.value.shape[1]} inputs, got {x.shape[-1]}")
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, dout):
        x2 = self._x.reshape(-1, self._x.shape[-1])
        d2 = dout.reshape(-1, dout.shape[-1])
        self.weight.grad += d2.T @ x2
        self.bias.grad += d2.sum(axis=0)
        return dout @ self.weight.value


class ReLU(Module):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0).astype(dout.dtype, copy=False)


def _windows(xp, k, stride, h_out, w_out):
    """(B, Hp, Wp, C) -> strided view (B, h_out, w_out, C, k, k)."""
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    return win[:, : (h_out - 1) * stride + 1: stride, : (w_out - 1) * stride + 1: stride]


def conv_output_size(size, kernel, stride, pad):
    span = size + 2 * pad - kernel
    if span < 0 or span % stride:
        raise ShapeMismatch(f"input size {size} incompatible with kernel {kernel}, stride {stride}, pad {pad}")
    return span // stride + 1


def _conv_output_size_floor(size, kernel, stride, pad):
    span = size + 2 * pad - kernel
    if span < 0:
        raise ShapeMismatch(f"input size {size} smaller than kernel {kernel}")
    return span // stride + 1


class Conv2d(Module):
    """Cross-correlation with zero padding (no kernel flip), channels-last."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, pad=0, bias=False, rng=None, exact=False,
                 input_grad=True):
        super().__init__()
        # input_grad=False skips d/dx for a first layer whose input needs no gradient.
        self.input_grad = input_grad
        rng = _as_rng(rng)
        self.in_ch, self.out_ch, self.kernel, self.stride, self.pad = in_ch, out_ch, kernel, stride, pad
        self.exact = exact
        # He init (fan_out, ReLU gain) as used for residual networks.
        std = np.sqrt(2.0 / (out_ch * kernel * kernel))
        self.weight = self.add_param("weight", rng.normal(0.0, std, (out_ch, in_ch, kernel, kernel)))
        self.bias = self.add_param("bias", np.zeros(out_ch)) if bias else None

    def forward(self, x):
        dtype = self.weight.value.dtype
        x = np.asarray(x, dtype=dtype)
        if x.ndim != 4 or x.shape[3] != self.in_ch:
            raise ShapeMismatch(f"Conv2d expects (B, H, W, {self.in_ch}), got {x.shape}")
        b, h, w, _ = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        h_out = _conv_output_size_floor(h, k, s, p) if not self.exact else conv_output_size(h, k, s, p)
        w_out = _conv_output_size_floor(w, k, s, p) if not self.exact else conv_output_size(w, k, s, p)
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        self._in_shape = x.shape
        self._out_hw = (h_out, w_out)
        if k == 1:
            cols = xp[:, : (h_out - 1) * s + 1: s, : (w_out - 1) * s + 1: s, :].reshape(-1, self.in_ch)
        else:
            # Columns ordered (kh, kw, in_ch): within one kernel row the k*in_ch
            # values are contiguous in channels-last memory, so a strided view
            # gathers whole runs at once.
            xp = np.ascontiguousarray(xp)
            # derive strides from the shape: numpy may report arbitrary strides for size-1 axes
            sc = xp.itemsize
            sw = sc * self.in_ch
            sh = sw * xp.shape[2]
            sb = sh * xp.shape[1]
            view = as_strided(xp, (b, h_out, w_out, k, k * self.in_ch), (sb, sh * s, sw * s, sh, sc),
                              writeable=False)
            cols = view.reshape(b * h_out * w_out, k * k * self.in_ch)
        self._cols = cols
        out = cols @ self._wmat().T
        if self.bias is not None:
            out += self.bias.value
        return out.reshape(b, h_out, w_out, self.out_ch)

    def _wmat(self):
        return self.weight.value.transpose(0, 2, 3, 1).reshape(self.out_ch, -1)

    def backward(self, dout):
        b, h, w, c = self._in_shape
        h_out, w_out = self._out_hw
        k, s, p = self.kernel, self.stride, self.pad
        d2 = dout.reshape(-1, self.out_ch)
        dw = d2.T @ self._cols
        self.weight.grad += dw.reshape(self.out_ch, k, k, c).transpose(0, 3, 1, 2)
        if self.bias is not None:
            self.bias.grad += d2.sum(axis=0)
        self._cols = None
        if not self.input_grad:
            return None
        dcols = d2 @ self._wmat()
        dxp = np.zeros((b, h + 2 * p, w + 2 * p, c), dtype=dcols.dtype)
        if k == 1:
            dxp[:, : (h_out - 1) * s + 1: s, : (w_out - 1) * s + 1: s, :] += dcols.reshape(b, h_out, w_out, c)
        else:
            dcols = dcols.reshape(b, h_out, w_out, k, k, c)
            for i in range(k):
                for j in range(k):
                    dxp[:, i: i + (h_out - 1) * s + 1: s, j: j + (w_out - 1) * s + 1: s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, p: p + h, p: p + w, :] if p else dxp


def conv2d_forward(x, weight, stride=1, pad=0, bias=None):
    """Functional NCHW convolution; returns (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    out_ch, in_ch, k, k2 = weight.shape
    if k != k2:
        raise ShapeMismatch("only square kernels are supported")
    if x.ndim != 4 or x.shape[1] != in_ch:
        raise ShapeMismatch(f"expected (B, {in_ch}, H, W), got {x.shape}")
    layer = Conv2d(in_ch, out_ch, k, stride, pad, bias=bias is not None, exact=True)
    layer.weight.value = weight.copy()
    layer.weight.grad = np.zeros_like(weight)
    if bias is not None:
        layer.bias.value = np.asarray(bias, dtype=np.float64).copy()
    y = layer.forward(x.transpose(0, 2, 3, 1))
    return y.transpose(0, 3, 1, 2), layer


def conv2d_backward(dout, cache):
    """Returns (dx, dweight, dbias) for :func:`conv2d_forward`; dbias is None without bias."""
    layer = cache
    dx = layer.backward(np.asarray(dout, dtype=np.float64).transpose(0, 2, 3, 1))
    db = layer.bias.grad if layer.bias is not None else None
    return dx.transpose(0, 3, 1, 2), layer.weight.grad, db


class BatchNorm2d(Module):
    """Per-channel batch normalisation over (batch, H, W); also accepts (batch, C)."""

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.weight = self.add_param("weight", np.ones(channels))
        self.bias = self.add_param("bias", np.zeros(channels))
        self._buffers["running_mean"] = np.zeros(channels)
        self._buffers["running_var"] = np.ones(channels)

    def forward(self, x):
        x = np.asarray(x, dtype=self.weight.value.dtype)
        axes = tuple(range(x.ndim - 1))
        if self.training:
            if x.shape[0] < 2:
                raise DegenerateBatch("batch norm needs batch >= 2 in training mode")
            n = x.size // x.shape[-1]
            mean = x.mean(axis=axes)
            xc = x - mean
            var = np.mean(xc * xc, axis=axes)
            rm, rv = self._buffers["running_mean"], self._buffers["running_var"]
            rm *= 1.0 - self.momentum
            rm += self.momentum * mean
            rv *= 1.0 - self.momentum
            rv += self.momentum * var * (n / max(n - 1, 1))
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = xc * inv_std
            self._cache = (xhat, inv_std, axes)
        else:
            inv_std = 1.0 / np.sqrt(self._buffers["running_var"] + self.eps)
            xhat = (x - self._buffers["running_mean"]) * inv_std
            self._cache = (xhat, inv_std, None)
        return xhat * self.weight.value + self.bias.value

    def backward(self, dout):
        xhat, inv_std, axes = self._cache
        red = tuple(range(dout.ndim - 1))
        self.weight.grad += np.sum(dout * xhat, axis=red)
        self.bias.grad += dout.sum(axis=red)
        dxhat = dout * self.weight.value
        if axes is None:
            return dxhat * inv_std
        mean_d = dxhat.mean(axis=axes)
        mean_dx = np.mean(dxhat * xhat, axis=axes)
        return (dxhat - mean_d - xhat * mean_dx) * inv_std


class MaxPool2d(Module):
    def __init__(self, kernel=3, stride=2, pad=1):
        super().__init__()
        self.kernel, self.stride, self.pad = kernel, stride, pad

    def forward(self, x):
        b, h, w, c = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        h_out = _conv_output_size_floor(h, k, s, p)
        w_out = _conv_output_size_floor(w, k, s, p)
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)), constant_values=-np.inf) if p else x
        win = _windows(xp, k, s, h_out, w_out).reshape(b, h_out, w_out, c, k * k)
        self._arg = win.argmax(axis=-1)
        self._shape = (x.shape, h_out, w_out)
        return np.take_along_axis(win, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        (b, h, w, c), h_out, w_out = self._shape
        k, s, p = self.kernel, self.stride, self.pad
        dxp = np.zeros((b, h + 2 * p, w + 2 * p, c), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                hit = self._arg == i * k + j
                dxp[:, i: i + (h_out - 1) * s + 1: s, j: j + (w_out - 1) * s + 1: s, :] += np.where(hit, dout, 0)
        return dxp[:, p: p + h, p: p + w, :] if p else dxp


class GlobalAvgPool2d(Module):
    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout):
        b, h, w, c = self._shape
        return np.broadcast_to(dout[:, None, None, :] / (h * w), self._shape).copy()


class Dropout(Module):
    """Inverted dropout: survivors are scaled by 1/(1-p) during training."""

    def __init__(self, p=0.5, rng=None):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout p must lie in [0, 1)")
        self.p = p
        self.rng = _as_rng(rng)

    def forward(self, x):
        if not self.training or self.p == 0.0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class ResidualBlock(Module):
    """Basic block: relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)).

    The shortcut is the identity when shapes agree and a 1x1 strided
    projection followed by batch norm otherwise.
    """

    def __init__(self, in_ch, out_ch, stride=1, rng=None):
        super().__init__()
        rng = _as_rng(rng)
        self.conv1 = self.add_child("conv1", Conv2d(in_ch, out_ch, 3, stride, 1, rng=rng))
        self.bn1 = self.add_child("bn1", BatchNorm2d(out_ch))
        self.relu1 = ReLU()
        self.conv2 = self.add_child("conv2", Conv2d(out_ch, out_ch, 3, 1, 1, rng=rng))
        self.bn2 = self.add_child("bn2", BatchNorm2d(out_ch))
        self.relu_out = ReLU()
        self.downsample = None
        if stride != 1 or in_ch != out_ch:
            from .core import Sequential
            self.downsample = self.add_child("downsample", Sequential(
                ("0", Conv2d(in_ch, out_ch, 1, stride, 0, rng=rng)),
                ("1", BatchNorm2d(out_ch)),
            ))

    def forward(self, x):
        x = np.asarray(x, dtype=self.conv1.weight.value.dtype)
        h = self.relu1.forward(self.bn1.forward(self.conv1.forward(x)))
        h = self.bn2.forward(self.conv2.forward(h))
        short = x if self.downsample is None else self.downsample.forward(x)
        if short.shape != h.shape:
            raise ShapeMismatch(f"shortcut shape {short.shape} != residual shape {h.shape}")
        return self.relu_out.forward(h + short)

    def backward(self, dout):
        d = self.relu_out.backward(dout)
        dh = self.conv1.backward(self.bn1.backward(self.relu1.backward(
            self.conv2.backward(self.bn2.backward(d)))))
        dshort = d if self.downsample is None else self.downsample.backward(d)
        return dh + dshort


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


class _LstmDirection(Module):
    """One direction of an LSTM layer; gate order (input, forget, cell, output)."""

    def __init__(self, input_size, hidden, rng):
        super().__init__()
        self.hidden = hidden
        b_in = np.sqrt(1.0 / input_size)
        b_h = np.sqrt(1.0 / hidden)
        self.weight_ih = self.add_param("weight_ih", rng.uniform(-b_in, b_in, (4 * hidden, input_size)))
        self.weight_hh = self.add_param("weight_hh", rng.uniform(-b_h, b_h, (4 * hidden, hidden)))
        bias = rng.uniform(-b_h, b_h, 4 * hidden)
        bias[hidden: 2 * hidden] = 1.0
        self.bias = self.add_param("bias", bias)

    def forward(self, x):
        bsz, steps, _ = x.shape
        hsz = self.hidden
        dtype = self.weight_ih.value.dtype
        pre = x @ self.weight_ih.value.T + self.bias.value
        w_hh_t = self.weight_hh.value.T
        h = np.zeros((bsz, hsz), dtype=dtype)
        c = np.zeros((bsz, hsz), dtype=dtype)
        gates = np.empty((steps, bsz, 4 * hsz), dtype=dtype)
        cells = np.empty((steps + 1, bsz, hsz), dtype=dtype)
        hiddens = np.empty((steps + 1, bsz, hsz), dtype=dtype)
        tanh_c = np.empty((steps, bsz, hsz), dtype=dtype)
        cells[0] = c
        hiddens[0] = h
        for t in range(steps):
            a = pre[:, t] + h @ w_hh_t
            g = gates[t]
            g[:, : 2 * hsz] = _sigmoid(a[:, : 2 * hsz])
            g[:, 2 * hsz: 3 * hsz] = np.tanh(a[:, 2 * hsz: 3 * hsz])
            g[:, 3 * hsz:] = _sigmoid(a[:, 3 * hsz:])
            c = g[:, hsz: 2 * hsz] * c + g[:, :hsz] * g[:, 2 * hsz: 3 * hsz]
            tanh_c[t] = np.tanh(c)
            h = g[:, 3 * hsz:] * tanh_c[t]
            cells[t + 1] = c
            hiddens[t + 1] = h
        self._cache = (x, gates, cells, hiddens, tanh_c)
        return hiddens[1:].transpose(1, 0, 2)

    def backward(self, dout):
        x, gates, cells, hiddens, tanh_c = self._cache
        steps = gates.shape[0]
        hsz = self.hidden
        w_hh = self.weight_hh.value
        dpre = np.empty_like(gates)
        dh_next = np.zeros_like(hiddens[0])
        dc_next = np.zeros_like(cells[0])
        for t in range(steps - 1, -1, -1):
            g = gates[t]
            i, f, gg, o = g[:, :hsz], g[:, hsz: 2 * hsz], g[:, 2 * hsz: 3 * hsz], g[:, 3 * hsz:]
            dh = dout[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tanh_c[t] ** 2)
            da = dpre[t]
            da[:, :hsz] = dc * gg * i * (1.0 - i)
            da[:, hsz: 2 * hsz] = dc * cells[t] * f * (1.0 - f)
            da[:, 2 * hsz: 3 * hsz] = dc * i * (1.0 - gg * gg)
            da[:, 3 * hsz:] = dh * tanh_c[t] * o * (1.0 - o)
            dc_next = dc * f
            dh_next = da @ w_hh
        dflat = dpre.transpose(1, 0, 2)  # (B, T, 4h)
        self.weight_hh.grad += np.einsum("tbg,tbh->gh", dpre, hiddens[:-1])
        self.weight_ih.grad += dflat.reshape(-1, 4 * hsz).T @ x.reshape(-1, x.shape[-1])
        self.bias.grad += dpre.sum(axis=(0, 1))
        return dflat @ self.weight_ih.value


class BiLSTM(Module):
    """Bidirectional LSTM: (batch, T, input) -> (batch, T, 2*hidden), [forward | backward]."""

    def __init__(self, input_size, hidden, rng=None):
        super().__init__()
        rng = _as_rng(rng)
        self.input_size = input_size
        self.hidden = hidden
        self.fwd = self.add_child("fwd", _LstmDirection(input_size, hidden, rng))
        self.bwd = self.add_child("bwd", _LstmDirection(input_size, hidden, rng))

    def forward(self, x):
        x = np.asarray(x, dtype=self.fwd.weight_ih.value.dtype)
        if x.ndim != 3 or x.shape[2] != self.input_size or x.shape[1] < 1:
            raise ShapeMismatch(f"BiLSTM expects (B, T>=1, {self.input_size}), got {x.shape}")
        out_f = self.fwd.forward(x)
        out_b = self.bwd.forward(x[:, ::-1])[:, ::-1]
        return np.concatenate([out_f, out_b], axis=2)

    def backward(self, dout):
        h = self.hidden
        dx = self.fwd.backward(dout[:, :, :h])
        dx += self.bwd.backward(np.ascontiguousarray(dout[:, ::-1, h:]))[:, ::-1]
        return dx


class BiLstmReadout(Module):
    """Final forward state concatenated with the backward direction's final (t=0) state."""

    def forward(self, x):
        self._shape = x.shape
        h = x.shape[2] // 2
        return np.concatenate([x[:, -1, :h], x[:, 0, h:]], axis=1)

    def backward(self, dout):
        dx = np.zeros(self._shape, dtype=dout.dtype)
        h = self._shape[2] // 2
        dx[:, -1, :h] = dout[:, :h]
        dx[:, 0, h:] += dout[:, h:]
        return dx
