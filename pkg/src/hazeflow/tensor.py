"""Dense-tensor engine with reverse-mode differentiation.

Tensors wrap numpy arrays (float32 by default, float64 for high-precision
gradient checks) and record a computation graph when gradients are enabled.
The operation set is exactly what the dehazing pipeline needs: elementwise
arithmetic, reductions, 2d convolution, pooling, bilinear upsampling,
instance normalization, and a sigmoid-gated spatial attention.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import erfc

from .errors import GraphError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


def grad_enabled() -> bool:
    return _grad_enabled


def _as_array(data: ArrayLike, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in (np.float32, np.float64):
        return arr.astype(np.float32)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy-backed array that can participate in reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op: Optional[str] = None

    # -- construction of graph nodes -------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: Iterable["Tensor"], op: str) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._backward = None
        out._op = None
        parents = tuple(parents)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._op = op
        else:
            out.requires_grad = False
            out._parents = ()
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        # grads are never mutated in place after creation, so the first
        # contribution can be stored by reference
        if self.grad is None:
            self.grad = grad
        else:
            self.grad = self.grad + grad

    # -- basic properties --------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff ----------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Run reverse-mode differentiation from this node.

        Raises GraphError when the tensor was not produced by a recorded
        computation, or when no seed gradient is given for a non-scalar.
        """
        if self._op is None:
            raise GraphError(
                "backward() called on a tensor that is not connected to a "
                "recorded computation"
            )
        if grad is None:
            if self.data.size != 1:
                raise GraphError("backward() on a non-scalar requires an explicit gradient")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)

        # Iterative DFS: unrolled solver graphs get deep enough to overflow
        # Python's recursion limit.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out = Tensor._result(self.data + other.data, (self, other), "add")
        if out._op:
            def _bwd(g, a=self, b=other):
                if a.requires_grad or a._op:
                    a._accumulate(_unbroadcast(g, a.data.shape))
                if b.requires_grad or b._op:
                    b._accumulate(_unbroadcast(g, b.data.shape))
            out._backward = _bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._result(-self.data, (self,), "neg")
        if out._op:
            out._backward = lambda g, a=self: a._accumulate(-g)
        return out

    def __sub__(self, other):
        other = self._coerce(other)
        out = Tensor._result(self.data - other.data, (self, other), "sub")
        if out._op:
            def _bwd(g, a=self, b=other):
                if a.requires_grad or a._op:
                    a._accumulate(_unbroadcast(g, a.data.shape))
                if b.requires_grad or b._op:
                    b._accumulate(_unbroadcast(-g, b.data.shape))
            out._backward = _bwd
        return out

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out = Tensor._result(self.data * other.data, (self, other), "mul")
        if out._op:
            def _bwd(g, a=self, b=other):
                if a.requires_grad or a._op:
                    a._accumulate(_unbroadcast(g * b.data, a.data.shape))
                if b.requires_grad or b._op:
                    b._accumulate(_unbroadcast(g * a.data, b.data.shape))
            out._backward = _bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out = Tensor._result(self.data / other.data, (self, other), "div")
        if out._op:
            def _bwd(g, a=self, b=other):
                if a.requires_grad or a._op:
                    a._accumulate(_unbroadcast(g / b.data, a.data.shape))
                if b.requires_grad or b._op:
                    b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))
            out._backward = _bwd
        return out

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent: float):
        out = Tensor._result(self.data ** exponent, (self,), "pow")
        if out._op:
            def _bwd(g, a=self, p=exponent):
                a._accumulate(g * p * a.data ** (p - 1))
            out._backward = _bwd
        return out

    # -- elementwise nonlinearities ------------------------------------------

    def abs(self):
        out = Tensor._result(np.abs(self.data), (self,), "abs")
        if out._op:
            out._backward = lambda g, a=self: a._accumulate(g * np.sign(a.data))
        return out

    def clamp(self, lo: float, hi: float):
        out = Tensor._result(np.clip(self.data, lo, hi), (self,), "clamp")
        if out._op:
            def _bwd(g, a=self):
                inside = (a.data >= lo) & (a.data <= hi)
                a._accumulate(g * inside.astype(a.data.dtype))
            out._backward = _bwd
        return out

    def sigmoid(self):
        x = self.data
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        s = s.astype(x.dtype, copy=False)
        out = Tensor._result(s, (self,), "sigmoid")
        if out._op:
            out._backward = lambda g, a=self, sv=s: a._accumulate(g * sv * (1.0 - sv))
        return out

    # -- reductions ------------------------------------------------------------

    def sum(self):
        out = Tensor._result(np.asarray(self.data.sum(), dtype=self.data.dtype), (self,), "sum")
        if out._op:
            out._backward = lambda g, a=self: a._accumulate(
                np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=False))
        return out

    def mean(self):
        out = Tensor._result(np.asarray(self.data.mean(), dtype=self.data.dtype), (self,), "mean")
        if out._op:
            n = self.data.size
            out._backward = lambda g, a=self: a._accumulate(
                np.broadcast_to(g / n, a.data.shape).astype(a.data.dtype, copy=False))
        return out


# ---------------------------------------------------------------------------
# neural-network operations
# ---------------------------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: x * Phi(x) with the Gaussian CDF evaluated through erfc.

    erfc keeps the far negative tail accurate where 1 + erf(x) would
    cancel to zero.
    """
    d = x.data
    cdf = (0.5 * erfc(-d * _INV_SQRT2)).astype(d.dtype, copy=False)
    out = Tensor._result(d * cdf, (x,), "gelu")
    if out._op:
        def _bwd(g, a=x, cdfv=cdf):
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
            a._accumulate(g * (cdfv + a.data * pdf.astype(a.data.dtype, copy=False)))
        out._backward = _bwd
    return out


def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # xp: padded input (B, C, Hp, Wp) -> (B, C*kh*kw, Hout*Wout), stride 1
    b, c, hp, wp = xp.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # (B, C, Ho, Wo, kh, kw) -> (B, C, kh, kw, Ho, Wo)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols)


def _col2im(grad_cols: np.ndarray, b: int, c: int, hp: int, wp: int,
            kh: int, kw: int) -> np.ndarray:
    ho, wo = hp - kh + 1, wp - kw + 1
    gc = grad_cols.reshape(b, c, kh, kw, ho, wo)
    gx = np.zeros((b, c, hp, wp), dtype=grad_cols.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + ho, j:j + wo] += gc[:, :, i, j]
    return gx


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2d cross-correlation. Kernels are 1x1 or 3x3, stride 1 in this project."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d expects a rank-4 input, got shape {x.shape}")
    if weight.data.ndim != 4:
        raise ShapeError(f"conv2d expects a rank-4 kernel, got shape {weight.shape}")
    b, c_in, h, w = x.data.shape
    c_out, c_k, kh, kw = weight.data.shape
    if c_k != c_in:
        raise ShapeError(
            f"kernel expects {c_k} input channels, input has {c_in}")
    if stride != 1:
        raise ShapeError("only stride 1 is supported")

    if padding > 0:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    hp, wp = xp.shape[2], xp.shape[3]
    ho, wo = hp - kh + 1, wp - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {hp}x{wp}")

    cols = _im2col(xp, kh, kw)                          # (B, C*kh*kw, L)
    w_mat = weight.data.reshape(c_out, c_in * kh * kw)  # (Cout, C*kh*kw)
    out_data = np.einsum("ok,bkl->bol", w_mat, cols, optimize=True)
    out_data = out_data.reshape(b, c_out, ho, wo)
    if bias is not None:
        out_data = out_data + bias.data.reshape(1, c_out, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor._result(np.ascontiguousarray(out_data), parents, "conv2d")
    if out._op:
        saved_cols = cols

        def _bwd(g, a=x, wt=weight, bt=bias):
            g_mat = g.reshape(b, c_out, ho * wo)
            if wt.requires_grad or wt._op:
                gw = np.einsum("bol,bkl->ok", g_mat, saved_cols, optimize=True)
                wt._accumulate(gw.reshape(wt.data.shape))
            if bt is not None and (bt.requires_grad or bt._op):
                bt._accumulate(g.sum(axis=(0, 2, 3)))
            if a.requires_grad or a._op:
                g_cols = np.einsum("ok,bol->bkl", w_mat, g_mat, optimize=True)
                gx = _col2im(g_cols, b, c_in, hp, wp, kh, kw)
                if padding > 0:
                    gx = gx[:, :, padding:padding + h, padding:padding + w]
                a._accumulate(np.ascontiguousarray(gx))
        out._backward = _bwd
    return out


def maxpool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """2x2/stride-2 max pooling.

    Odd spatial sizes are replication-padded to even first; gradient goes
    to the first maximal element of each window in row-major order.
    """
    if window != 2 or stride != 2:
        raise ShapeError("only window=2, stride=2 pooling is supported")
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d expects a rank-4 input, got shape {x.shape}")
    b, c, h, w = x.data.shape
    pad_h, pad_w = h % 2, w % 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="edge") \
        if (pad_h or pad_w) else x.data
    hp, wp = xp.shape[2], xp.shape[3]
    ho, wo = hp // 2, wp // 2

    # Window raveled row-major so argmax picks the first tied maximum.
    windows = xp.reshape(b, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(b, c, ho, wo, 4)
    arg = windows.argmax(axis=-1)
    out_data = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    out = Tensor._result(np.ascontiguousarray(out_data), (x,), "maxpool2d")
    if out._op:
        def _bwd(g, a=x):
            gw = np.zeros((b, c, ho, wo, 4), dtype=g.dtype)
            np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
            gp = gw.reshape(b, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            gp = gp.reshape(b, c, hp, wp)
            if pad_h:
                gp[:, :, h - 1, :] += gp[:, :, h, :]
            if pad_w:
                gp[:, :, :, w - 1] += gp[:, :, :, w]
            a._accumulate(np.ascontiguousarray(gp[:, :, :h, :w]))
        out._backward = _bwd
    return out


def _bilinear_axis_maps(n_in: int, dtype):
    # align_corners=False sampling positions for 2x upsampling
    n_out = 2 * n_in
    src = (np.arange(n_out, dtype=np.float64) + 0.5) / 2.0 - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    w_hi = (src - lo).astype(dtype)
    w_lo = (1.0 - (src - lo)).astype(dtype)
    return lo, hi, w_lo, w_hi


def upsample_bilinear2x(x: Tensor) -> Tensor:
    """Bilinear 2x spatial upsampling, align_corners=False."""
    if x.data.ndim != 4:
        raise ShapeError(f"upsample expects a rank-4 input, got shape {x.shape}")
    b, c, h, w = x.data.shape
    lo_h, hi_h, wl_h, wh_h = _bilinear_axis_maps(h, x.data.dtype)
    lo_w, hi_w, wl_w, wh_w = _bilinear_axis_maps(w, x.data.dtype)

    rows = x.data[:, :, lo_h, :] * wl_h[None, None, :, None] \
        + x.data[:, :, hi_h, :] * wh_h[None, None, :, None]
    out_data = rows[:, :, :, lo_w] * wl_w[None, None, None, :] \
        + rows[:, :, :, hi_w] * wh_w[None, None, None, :]

    out = Tensor._result(np.ascontiguousarray(out_data), (x,), "upsample_bilinear2x")
    if out._op:
        def _bwd(g, a=x):
            # adjoint of the column gather, then of the row gather
            gt = np.moveaxis(g, 3, 0)
            acc_w = np.zeros((w, b, c, 2 * h), dtype=g.dtype)
            np.add.at(acc_w, lo_w, gt * wl_w[:, None, None, None])
            np.add.at(acc_w, hi_w, gt * wh_w[:, None, None, None])
            g_rows = np.moveaxis(acc_w, 0, 3)
            gt = np.moveaxis(g_rows, 2, 0)
            acc_h = np.zeros((h, b, c, w), dtype=g.dtype)
            np.add.at(acc_h, lo_h, gt * wl_h[:, None, None, None])
            np.add.at(acc_h, hi_h, gt * wh_h[:, None, None, None])
            a._accumulate(np.ascontiguousarray(np.moveaxis(acc_h, 0, 2)))
        out._backward = _bwd
    return out


def instance_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(batch, channel) normalization with learnable per-channel affine.

    Zero-variance channels (including the degenerate 1x1 spatial case) are
    guarded by eps and normalize to zero, so the output collapses to the
    affine bias there.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"instance_norm expects a rank-4 input, got shape {x.shape}")
    b, c, h, w = x.data.shape
    if gain.data.shape != (c,) or bias.data.shape != (c,):
        raise ShapeError(f"gain/bias must have shape ({c},)")

    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    inv = inv.astype(x.data.dtype, copy=False)
    y = (x.data - mu) * inv
    out_data = y * gain.data.reshape(1, c, 1, 1) + bias.data.reshape(1, c, 1, 1)

    out = Tensor._result(out_data.astype(x.data.dtype, copy=False), (x, gain, bias), "instance_norm")
    if out._op:
        def _bwd(g, a=x, gn=gain, bs=bias, yv=y, invv=inv):
            if gn.requires_grad or gn._op:
                gn._accumulate((g * yv).sum(axis=(0, 2, 3)))
            if bs.requires_grad or bs._op:
                bs._accumulate(g.sum(axis=(0, 2, 3)))
            if a.requires_grad or a._op:
                gy = g * gn.data.reshape(1, c, 1, 1)
                m1 = gy.mean(axis=(2, 3), keepdims=True)
                m2 = (gy * yv).mean(axis=(2, 3), keepdims=True)
                a._accumulate(invv * (gy - m1 - yv * m2))
        out._backward = _bwd
    return out


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate rank-4 tensors along the channel axis."""
    for t in tensors:
        if t.data.ndim != 4:
            raise ShapeError("concat_channels expects rank-4 tensors")
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    out = Tensor._result(out_data, tuple(tensors), "concat")
    if out._op:
        sizes = [t.data.shape[1] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def _bwd(g, ts=tuple(tensors), offs=offsets):
            for t, o0, o1 in zip(ts, offs[:-1], offs[1:]):
                if t.requires_grad or t._op:
                    t._accumulate(np.ascontiguousarray(g[:, o0:o1]))
        out._backward = _bwd
    return out


def crop2d(x: Tensor, height: int, width: int) -> Tensor:
    """Crop the trailing spatial rows/columns down to (height, width)."""
    b, c, h, w = x.data.shape
    if height > h or width > w:
        raise ShapeError(f"cannot crop {h}x{w} up to {height}x{width}")
    if height == h and width == w:
        return x
    out = Tensor._result(np.ascontiguousarray(x.data[:, :, :height, :width]), (x,), "crop2d")
    if out._op:
        def _bwd(g, a=x):
            gx = np.zeros_like(a.data)
            gx[:, :, :height, :width] = g
            a._accumulate(gx)
        out._backward = _bwd
    return out


def spatial_attention(features: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Sigmoid gate from a 3x3 conv, broadcast-multiplied onto the features."""
    gate = conv2d(features, weight, bias, padding=(weight.shape[2] - 1) // 2)
    if gate.shape[1] != 1:
        raise ShapeError("attention conv must produce a single-channel map")
    return features * gate.sigmoid()
