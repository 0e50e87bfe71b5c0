"""Reverse-mode automatic differentiation over float64 numpy arrays.

The engine is deliberately small: it provides exactly the operations the
rectification and recognition networks need, nothing more.  Every tensor
holds a C-contiguous float64 array; every op records its parents and a
closure that accumulates gradients into them.  ``backward(loss)`` walks the
graph once in reverse topological order.

Conventions:
  * gradients of leaf tensors persist and accumulate across backward calls
    until explicitly cleared (``zero_grad``),
  * gradients of interior nodes are reset at the start of each pass,
  * all computation is float64 and serially deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand dimensions do not line up."""


_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """N-dimensional float64 array with optional gradient accumulation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        # note: ascontiguousarray would promote 0-d arrays to shape (1,)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward_fn) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    # ------------------------------------------------------------------
    # basic protocol
    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _fail_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------
    def __add__(self, other):
        other = _as_tensor(other)
        out_data = self.data + other.data

        def bwd(out):
            _accum(self, _unbroadcast(out.grad, self.data.shape))
            _accum(other, _unbroadcast(out.grad, other.data.shape))

        return Tensor._from_op(out_data, (self, other), bwd)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_tensor(other)
        out_data = self.data - other.data

        def bwd(out):
            _accum(self, _unbroadcast(out.grad, self.data.shape))
            _accum(other, _unbroadcast(-out.grad, other.data.shape))

        return Tensor._from_op(out_data, (self, other), bwd)

    def __rsub__(self, other):
        return _as_tensor(other).__sub__(self)

    def __neg__(self):
        def bwd(out):
            _accum(self, -out.grad)

        return Tensor._from_op(-self.data, (self,), bwd)

    def __mul__(self, other):
        other = _as_tensor(other)
        out_data = self.data * other.data

        def bwd(out):
            _accum(self, _unbroadcast(out.grad * other.data, self.data.shape))
            _accum(other, _unbroadcast(out.grad * self.data, other.data.shape))

        return Tensor._from_op(out_data, (self, other), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out_data = self.data / other.data

        def bwd(out):
            _accum(self, _unbroadcast(out.grad / other.data, self.data.shape))
            _accum(other, _unbroadcast(-out.grad * self.data / (other.data * other.data), other.data.shape))

        return Tensor._from_op(out_data, (self, other), bwd)

    def __rtruediv__(self, other):
        return _as_tensor(other).__truediv__(self)

    def __pow__(self, exponent: float):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out_data = self.data ** exponent

        def bwd(out):
            _accum(self, out.grad * exponent * self.data ** (exponent - 1))

        return Tensor._from_op(out_data, (self,), bwd)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, key):
        out_data = np.asarray(self.data[key], dtype=np.float64)
        if out_data.ndim and not out_data.flags.c_contiguous:
            out_data = np.ascontiguousarray(out_data)
        fancy = _is_fancy_index(key)

        def bwd(out):
            g = np.zeros_like(self.data)
            if fancy:
                np.add.at(g, key, out.grad)
            else:
                g[key] += out.grad
            _accum(self, g)

        return Tensor._from_op(out_data, (self,), bwd)

    # ------------------------------------------------------------------
    # shape ops
    # ------------------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        in_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def bwd(out):
            _accum(self, out.grad.reshape(in_shape))

        return Tensor._from_op(out_data, (self,), bwd)

    def transpose(self, *axes) -> "Tensor":
        if not axes:
            axes = tuple(range(self.data.ndim))[::-1]
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(int(i) for i in np.argsort(axes))
        out_data = np.ascontiguousarray(self.data.transpose(axes))

        def bwd(out):
            _accum(self, out.grad.transpose(inv))

        return Tensor._from_op(out_data, (self,), bwd)

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    # ------------------------------------------------------------------
    # reductions and elementwise functions
    # ------------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = np.asarray(self.data.sum(axis=axis, keepdims=keepdims))
        in_shape = self.data.shape

        def bwd(out):
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(self, np.broadcast_to(g, in_shape).copy())

        return Tensor._from_op(out_data, (self,), bwd)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)

        def bwd(out):
            _accum(self, out.grad * out.data)

        return Tensor._from_op(out_data, (self,), bwd)

    def log(self) -> "Tensor":
        out_data = np.log(self.data)

        def bwd(out):
            _accum(self, out.grad / self.data)

        return Tensor._from_op(out_data, (self,), bwd)

    def clamp(self, lo: float, hi: float) -> "Tensor":
        out_data = np.clip(self.data, lo, hi)
        mask = (self.data >= lo) & (self.data <= hi)

        def bwd(out):
            _accum(self, out.grad * mask)

        return Tensor._from_op(out_data, (self,), bwd)

    def backward(self) -> None:
        backward(self)


def _fail_scalar(t: Tensor):
    raise ShapeError(f"item() requires a single-element tensor, got shape {t.shape}")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _is_fancy_index(key) -> bool:
    items = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (np.ndarray, list)) for k in items)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    # non-inplace: g may alias a consumer's grad buffer
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ----------------------------------------------------------------------
# backward driver
# ----------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate gradients of every reachable leaf from a scalar loss.

    Interior gradients are recomputed from scratch on every call; leaf
    gradients accumulate until zeroed, so two backward passes from two
    losses add their contributions.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    for node in topo:
        if node._parents:
            node.grad = None

    seed = np.ones_like(loss.data)
    loss.grad = seed if loss.grad is None else loss.grad + seed

    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node)


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product with gradients for both operands."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def bwd(out):
        _accum(a, out.grad @ b.data.T)
        _accum(b, a.data.T @ out.grad)

    return Tensor._from_op(out_data, (a, b), bwd)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for inputs of shape (I,) or (B, I)."""
    if weight.data.ndim != 2:
        raise ShapeError(f"linear weight must be 2-D (out, in), got {weight.shape}")
    single = x.data.ndim == 1
    xd = x.data[None, :] if single else x.data
    if xd.ndim != 2 or xd.shape[1] != weight.data.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out_data = xd @ weight.data.T
    if bias is not None:
        out_data = out_data + bias.data
    if single:
        out_data = out_data[0]

    def bwd(out):
        g = out.grad[None, :] if single else out.grad
        _accum(x, (g @ weight.data)[0] if single else g @ weight.data)
        _accum(weight, g.T @ xd)
        if bias is not None:
            _accum(bias, g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out_data, parents, bwd)


# ----------------------------------------------------------------------
# activations
# ----------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out_data = np.where(mask, x.data, 0.0)

    def bwd(out):
        _accum(x, out.grad * mask)

    return Tensor._from_op(out_data, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def bwd(out):
        _accum(x, out.grad * (1.0 - out.data * out.data))

    return Tensor._from_op(out_data, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    out_data = _sigmoid(x.data)

    def bwd(out):
        _accum(x, out.grad * out.data * (1.0 - out.data))

    return Tensor._from_op(out_data, (x,), bwd)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # evaluated piecewise to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Axis-normalized softmax; outputs sum to 1 along ``axis``."""
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(out):
        dot = (out.grad * out.data).sum(axis=axis, keepdims=True)
        _accum(x, out.data * (out.grad - dot))

    return Tensor._from_op(out_data, (x,), bwd)


def log_softmax_data(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


# ----------------------------------------------------------------------
# structural ops
# ----------------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def bwd(out):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(int(start), int(stop))
            _accum(t, out.grad[tuple(idx)])

    return Tensor._from_op(out_data, tuple(tensors), bwd)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def bwd(out):
        for i, t in enumerate(tensors):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = i
            _accum(t, out.grad[tuple(idx)])

    return Tensor._from_op(out_data, tuple(tensors), bwd)


# ----------------------------------------------------------------------
# convolution and pooling
# ----------------------------------------------------------------------

def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None,
    stride: tuple[int, int] = (1, 1),
    padding: tuple[int, int] = (0, 0),
    pad_mode: str = "zeros",
) -> Tensor:
    """Cross-correlation of an NCHW batch with an OIHW kernel.

    Output spatial size is floor((in + 2p - k) / s) + 1 per axis.  With
    ``pad_mode="edge"`` the border pixels are replicated instead of
    zero-filled (gradients fold back onto the border).
    """
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d input must be NCHW, got shape {x.shape}")
    if weight.data.ndim != 4:
        raise ShapeError(f"conv2d weight must be OIHW, got shape {weight.shape}")
    n, c, h, w = x.data.shape
    o, ci, kh, kw = weight.data.shape
    if ci != c:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects {ci}")
    sh, sw = stride
    ph, pw = padding
    hp, wp = h + 2 * ph, w + 2 * pw
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    if pad_mode not in ("zeros", "edge"):
        raise ValueError(f"unknown pad_mode {pad_mode!r}")

    hout = (hp - kh) // sh + 1
    wout = (wp - kw) // sw + 1
    if ph or pw:
        mode = "constant" if pad_mode == "zeros" else "edge"
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode=mode)
    else:
        xp = x.data

    cols = np.empty((n, c, kh, kw, hout, wout), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + sh * hout : sh, j : j + sw * wout : sw]
    cols2 = cols.reshape(n, c * kh * kw, hout * wout)
    wmat = weight.data.reshape(o, c * kh * kw)
    out_data = np.matmul(wmat, cols2).reshape(n, o, hout, wout)
    if bias is not None:
        out_data += bias.data[None, :, None, None]

    def bwd(out):
        g2 = out.grad.reshape(n, o, hout * wout)
        _accum(weight, np.tensordot(g2, cols2, axes=([0, 2], [0, 2])).reshape(weight.data.shape))
        if bias is not None:
            _accum(bias, out.grad.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = np.matmul(wmat.T, g2).reshape(n, c, kh, kw, hout, wout)
            dxp = np.zeros((n, c, hp, wp), dtype=np.float64)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + sh * hout : sh, j : j + sw * wout : sw] += dcols[:, :, i, j]
            _accum(x, _fold_padding(dxp, (h, w), (ph, pw), pad_mode))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out_data, parents, bwd)


def _fold_padding(dxp: np.ndarray, hw: tuple[int, int], padding: tuple[int, int], pad_mode: str) -> np.ndarray:
    h, w = hw
    ph, pw = padding
    if not (ph or pw):
        return dxp
    if pad_mode == "zeros":
        return np.ascontiguousarray(dxp[:, :, ph : ph + h, pw : pw + w])
    # edge mode: padded cells replicate border pixels, so their gradients
    # fold onto the borders (rows first, then columns, which routes the
    # pad corners to the corner pixels)
    tmp = dxp[:, :, ph : ph + h, :].copy()
    if ph:
        tmp[:, :, 0, :] += dxp[:, :, :ph, :].sum(axis=2)
        tmp[:, :, -1, :] += dxp[:, :, ph + h :, :].sum(axis=2)
    out = tmp[:, :, :, pw : pw + w].copy()
    if pw:
        out[:, :, :, 0] += tmp[:, :, :, :pw].sum(axis=3)
        out[:, :, :, -1] += tmp[:, :, :, pw + w :].sum(axis=3)
    return out


def maxpool2(x: Tensor) -> Tensor:
    """2x2/stride-2 max pool; odd extents are padded with -inf.

    Backward routes each window's gradient to the first maximal element in
    row-major window order, which makes tie handling deterministic.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2 input must be NCHW, got shape {x.shape}")
    n, c, h, w = x.data.shape
    hp, wp = h + (h % 2), w + (w % 2)
    if hp != h or wp != w:
        xp = np.full((n, c, hp, wp), -np.inf, dtype=np.float64)
        xp[:, :, :h, :w] = x.data
    else:
        xp = x.data
    h2, w2 = hp // 2, wp // 2
    windows = (
        xp.reshape(n, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2, w2, 4)
    )
    idx = windows.argmax(axis=-1)
    out_data = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def bwd(out):
        dwin = np.zeros_like(windows)
        np.put_along_axis(dwin, idx[..., None], out.grad[..., None], axis=-1)
        dxp = (
            dwin.reshape(n, c, h2, w2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, hp, wp)
        )
        _accum(x, np.ascontiguousarray(dxp[:, :, :h, :w]))

    return Tensor._from_op(np.ascontiguousarray(out_data), (x,), bwd)


# ----------------------------------------------------------------------
# recurrent cells (fused single-step ops)
# ----------------------------------------------------------------------

def gru_cell(x: Tensor, s_prev: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor) -> Tensor:
    """One GRU step for a batch: returns the next state (B, H).

    Gate rows are stacked [update; reset; candidate] in ``w_ih`` (3H, D),
    ``w_hh`` (3H, H) and ``b`` (3H,).  The update gate interpolates
    ``s_next = (1 - z) * s_prev + z * n``, so a saturated-low gate
    preserves the previous state.  The step output equals the state.
    """
    if x.data.ndim != 2 or s_prev.data.ndim != 2:
        raise ShapeError("gru_cell expects batched 2-D x and s_prev")
    bsz, d = x.data.shape
    h = s_prev.data.shape[1]
    if w_ih.data.shape != (3 * h, d) or w_hh.data.shape != (3 * h, h) or b.data.shape != (3 * h,):
        raise ShapeError(
            f"gru_cell parameter shapes {w_ih.shape}/{w_hh.shape}/{b.shape} "
            f"do not match input dim {d} and hidden {h}"
        )
    sd = s_prev.data
    gi = x.data @ w_ih.data.T + b.data
    gh = sd @ w_hh.data.T
    z = _sigmoid(gi[:, :h] + gh[:, :h])
    r = _sigmoid(gi[:, h : 2 * h] + gh[:, h : 2 * h])
    rs = r * sd
    an = gi[:, 2 * h :] + rs @ w_hh.data[2 * h :].T
    nn = np.tanh(an)
    out_data = (1.0 - z) * sd + z * nn

    def bwd(out):
        g = out.grad
        dz = g * (nn - sd)
        dn = g * z
        ds = g * (1.0 - z)
        dan = dn * (1.0 - nn * nn)
        drs = dan @ w_hh.data[2 * h :]
        dr = drs * sd
        ds = ds + drs * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dgates = np.concatenate([daz, dar, dan], axis=1)
        _accum(x, dgates @ w_ih.data)
        _accum(w_ih, dgates.T @ x.data)
        _accum(b, dgates.sum(axis=0))
        dwhh = np.concatenate([daz, dar], axis=1).T @ sd
        dwhh = np.concatenate([dwhh, dan.T @ rs], axis=0)
        _accum(w_hh, dwhh)
        ds = ds + np.concatenate([daz, dar], axis=1) @ w_hh.data[: 2 * h]
        _accum(s_prev, ds)

    return Tensor._from_op(out_data, (x, s_prev, w_ih, w_hh, b), bwd)


def lstm_cell(
    x: Tensor, h_prev: Tensor, c_prev: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor
) -> tuple[Tensor, Tensor]:
    """One LSTM step for a batch: returns (h_next, c_next), each (B, H).

    Gate rows are stacked [input; forget; candidate; output].
    """
    if x.data.ndim != 2 or h_prev.data.ndim != 2 or c_prev.data.ndim != 2:
        raise ShapeError("lstm_cell expects batched 2-D x, h_prev, c_prev")
    bsz, d = x.data.shape
    hdim = h_prev.data.shape[1]
    if w_ih.data.shape != (4 * hdim, d) or w_hh.data.shape != (4 * hdim, hdim) or b.data.shape != (4 * hdim,):
        raise ShapeError(
            f"lstm_cell parameter shapes {w_ih.shape}/{w_hh.shape}/{b.shape} "
            f"do not match input dim {d} and hidden {hdim}"
        )
    a = x.data @ w_ih.data.T + h_prev.data @ w_hh.data.T + b.data
    ig = _sigmoid(a[:, :hdim])
    fg = _sigmoid(a[:, hdim : 2 * hdim])
    gg = np.tanh(a[:, 2 * hdim : 3 * hdim])
    og = _sigmoid(a[:, 3 * hdim :])
    c_new = fg * c_prev.data + ig * gg
    tc = np.tanh(c_new)
    h_new = og * tc
    out_data = np.concatenate([h_new, c_new], axis=1)

    def bwd(out):
        dh = out.grad[:, :hdim]
        dc_out = out.grad[:, hdim:]
        do = dh * tc
        dc = dc_out + dh * og * (1.0 - tc * tc)
        df = dc * c_prev.data
        dcp = dc * fg
        di = dc * gg
        dg = dc * ig
        da = np.concatenate(
            [
                di * ig * (1.0 - ig),
                df * fg * (1.0 - fg),
                dg * (1.0 - gg * gg),
                do * og * (1.0 - og),
            ],
            axis=1,
        )
        _accum(x, da @ w_ih.data)
        _accum(h_prev, da @ w_hh.data)
        _accum(c_prev, dcp)
        _accum(w_ih, da.T @ x.data)
        _accum(w_hh, da.T @ h_prev.data)
        _accum(b, da.sum(axis=0))

    fused = Tensor._from_op(out_data, (x, h_prev, c_prev, w_ih, w_hh, b), bwd)
    return fused[:, :hdim], fused[:, hdim:]


# ----------------------------------------------------------------------
# embeddings and losses
# ----------------------------------------------------------------------

def embedding_lookup(table: Tensor, index) -> Tensor:
    """Row lookup in a (V, D) table; backward scatters into the rows.

    ``index`` is an int (returns (D,)) or an int array (returns (B, D)).
    Repeated indices accumulate their gradients.
    """
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    v = table.data.shape[0]
    idx = np.asarray(index)
    if idx.ndim > 1:
        raise ShapeError("embedding index must be a scalar or 1-D array")
    if idx.min() < 0 or idx.max() >= v:
        raise IndexError(f"embedding index out of range [0, {v})")
    out_data = np.ascontiguousarray(table.data[idx])

    def bwd(out):
        g = np.zeros_like(table.data)
        np.add.at(g, idx, out.grad)
        _accum(table, g)

    return Tensor._from_op(out_data, (table,), bwd)


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Negative log-softmax at the target class.

    For (V,) logits and an int target the result is a scalar; for (B, V)
    logits and a (B,) index array it is the per-sample loss vector.
    """
    if logits.data.ndim == 1:
        tgt = int(target)
        if not 0 <= tgt < logits.data.shape[0]:
            raise IndexError(f"target {tgt} out of range for {logits.data.shape[0]} classes")
        ls = log_softmax_data(logits.data)
        out_data = np.asarray(-ls[tgt])

        def bwd(out):
            d = np.exp(ls)
            d[tgt] -= 1.0
            _accum(logits, d * out.grad)

        return Tensor._from_op(out_data, (logits,), bwd)

    if logits.data.ndim == 2:
        tgt = np.asarray(target, dtype=np.int64)
        bsz, v = logits.data.shape
        if tgt.shape != (bsz,):
            raise ShapeError(f"targets {tgt.shape} do not match batch {bsz}")
        if tgt.min() < 0 or tgt.max() >= v:
            raise IndexError(f"target index out of range [0, {v})")
        ls = log_softmax_data(logits.data, axis=1)
        out_data = -ls[np.arange(bsz), tgt]

        def bwd(out):
            d = np.exp(ls)
            d[np.arange(bsz), tgt] -= 1.0
            _accum(logits, d * out.grad[:, None])

        return Tensor._from_op(out_data, (logits,), bwd)

    raise ShapeError(f"cross_entropy expects 1-D or 2-D logits, got {logits.shape}")


# ----------------------------------------------------------------------
# parameters
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Parameter:
    """A named learnable tensor; names are unique within a model."""

    name: str
    tensor: Tensor


class ParameterStore:
    """Ordered name -> tensor registry shared by a model's components."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __len__(self) -> int:
        return len(self._params)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def parameters(self) -> list[Parameter]:
        return [Parameter(n, t) for n, t in self._params.items()]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def scalar_count(self) -> int:
        return sum(t.data.size for t in self._params.values())


def uniform_init(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float = 1.0
) -> np.ndarray:
    """Uniform(-gain/sqrt(fan_in), +gain/sqrt(fan_in)) weight draw.

    Unit gain is the right scale for output projections and embeddings,
    but recurrent and attention weights need gain > 1 here: at gain 1 the
    per-column feature variation reaching the attention scores is so
    small that the weights stay effectively uniform and the visual
    pathway never gets a usable gradient.
    """
    bound = gain / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def relu_uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform draw with std sqrt(2/fan_in), for relu-fed conv/linear layers.

    The plain 1/sqrt(fan_in) bound shrinks activations ~0.58x per layer,
    which collapses deep stacks to numerically dead features; the relu
    gain keeps layer output variance near its input variance.
    """
    bound = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)
