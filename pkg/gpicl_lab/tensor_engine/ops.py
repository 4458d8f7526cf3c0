"""
Differentiable operations of the engine.

Every op is a stateless strategy object with a shared lifecycle:
    1. check(): validate input shapes (raises ShapeError).
    2. forward(): compute the output and whatever must be saved for backward.
    3. backward(): map the output gradient to one gradient per input.

backward() never mutates the incoming gradient, so the graph may hand the
same array to several consumers.
"""
from abc import ABC, abstractmethod
from typing import Any

import numpy as np

from gpicl_lab.errors import EmptyBatchError, ShapeError

# Written by causal_masked_fill; finite so every node stays finite.
MASK_VALUE = -1e9

Arrays = tuple[np.ndarray, ...]
Grads = tuple[np.ndarray | None, ...]


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """
    Sums a broadcast gradient back down to the operand's shape.

    Input:
        grad of shape (B, T, D), operand shape (D,)
    Output:
        grad summed over axes 0 and 1, shape (D,)
    """
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) never overflows; the branch picks the matching algebraic form.
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)


def _broadcast_shape(kind: str, a: np.ndarray, b: np.ndarray) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast")


class Op(ABC):
    """Abstract base for one op-kind."""

    arity: int | None = 1

    def check(self, arrays: Arrays, attrs: dict[str, Any]) -> None:
        if self.arity is not None and len(arrays) != self.arity:
            raise ShapeError(
                f"{type(self).__name__} takes {self.arity} inputs, got {len(arrays)}"
            )

    @abstractmethod
    def forward(self, arrays: Arrays, attrs: dict[str, Any]) -> tuple[np.ndarray, Any]:
        pass

    @abstractmethod
    def backward(
        self,
        grad: np.ndarray,
        arrays: Arrays,
        out: np.ndarray,
        saved: Any,
        attrs: dict[str, Any],
    ) -> Grads:
        pass


class MatMul(Op):
    arity = 2

    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        a, b = arrays
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} differ")

    def forward(self, arrays, attrs):
        a, b = arrays
        return np.matmul(a, b), None

    def backward(self, grad, arrays, out, saved, attrs):
        a, b = arrays
        ga = np.matmul(grad, np.swapaxes(b, -1, -2))
        gb = np.matmul(np.swapaxes(a, -1, -2), grad)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)


class Add(Op):
    arity = 2

    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        _broadcast_shape("add", *arrays)

    def forward(self, arrays, attrs):
        a, b = arrays
        return a + b, None

    def backward(self, grad, arrays, out, saved, attrs):
        a, b = arrays
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Mul(Op):
    arity = 2

    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        _broadcast_shape("mul", *arrays)

    def forward(self, arrays, attrs):
        a, b = arrays
        return a * b, None

    def backward(self, grad, arrays, out, saved, attrs):
        a, b = arrays
        return unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)


class Concat(Op):
    arity = None

    def check(self, arrays, attrs):
        if not arrays:
            raise ShapeError("concat: no inputs")
        axis = attrs.get("axis", -1)
        ref = list(arrays[0].shape)
        for arr in arrays[1:]:
            other = list(arr.shape)
            if len(other) != len(ref):
                raise ShapeError(f"concat: rank mismatch {arrays[0].shape} vs {arr.shape}")
            ax = axis % len(ref)
            if other[:ax] + other[ax + 1 :] != ref[:ax] + ref[ax + 1 :]:
                raise ShapeError(f"concat: {arrays[0].shape} vs {arr.shape} along axis {axis}")

    def forward(self, arrays, attrs):
        return np.concatenate(arrays, axis=attrs.get("axis", -1)), None

    def backward(self, grad, arrays, out, saved, attrs):
        axis = attrs.get("axis", -1)
        bounds = np.cumsum([arr.shape[axis] for arr in arrays])[:-1]
        return tuple(np.split(grad, bounds, axis=axis))


class Slice(Op):
    """Contiguous slice [start, stop) along one axis."""

    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        (a,) = arrays
        axis = attrs["axis"] % a.ndim
        start, stop = attrs["start"], attrs["stop"]
        if not 0 <= start < stop <= a.shape[axis]:
            raise ShapeError(f"slice: [{start}, {stop}) outside axis of size {a.shape[axis]}")

    @staticmethod
    def _index(ndim: int, attrs: dict[str, Any]) -> tuple[slice, ...]:
        axis = attrs["axis"] % ndim
        idx = [slice(None)] * ndim
        idx[axis] = slice(attrs["start"], attrs["stop"])
        return tuple(idx)

    def forward(self, arrays, attrs):
        (a,) = arrays
        return a[self._index(a.ndim, attrs)], None

    def backward(self, grad, arrays, out, saved, attrs):
        (a,) = arrays
        full = np.zeros_like(a)
        full[self._index(a.ndim, attrs)] = grad
        return (full,)


class Reshape(Op):
    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        (a,) = arrays
        shape = tuple(attrs["shape"])
        known = [d for d in shape if d != -1]
        if shape.count(-1) > 1 or any(d < 0 and d != -1 for d in shape):
            raise ShapeError(f"reshape: invalid target {shape}")
        size = int(np.prod(known)) if known else 1
        if (-1 in shape and (size == 0 or a.size % size)) or (-1 not in shape and size != a.size):
            raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")

    def forward(self, arrays, attrs):
        (a,) = arrays
        return a.reshape(tuple(attrs["shape"])), None

    def backward(self, grad, arrays, out, saved, attrs):
        (a,) = arrays
        return (grad.reshape(a.shape),)


class Transpose(Op):
    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        (a,) = arrays
        axes = attrs.get("axes")
        if axes is not None and sorted(axes) != list(range(a.ndim)):
            raise ShapeError(f"transpose: {axes} is not a permutation of {a.ndim} axes")

    def forward(self, arrays, attrs):
        (a,) = arrays
        return np.transpose(a, attrs.get("axes")), None

    def backward(self, grad, arrays, out, saved, attrs):
        axes = attrs.get("axes")
        if axes is None:
            return (np.transpose(grad),)
        return (np.transpose(grad, np.argsort(axes)),)


class Tanh(Op):
    def forward(self, arrays, attrs):
        return np.tanh(arrays[0]), None

    def backward(self, grad, arrays, out, saved, attrs):
        return (grad * (1.0 - out * out),)


class Sigmoid(Op):
    def forward(self, arrays, attrs):
        return stable_sigmoid(arrays[0]), None

    def backward(self, grad, arrays, out, saved, attrs):
        return (grad * out * (1.0 - out),)


class Softplus(Op):
    def forward(self, arrays, attrs):
        return np.logaddexp(0.0, arrays[0]).astype(arrays[0].dtype), None

    def backward(self, grad, arrays, out, saved, attrs):
        return (grad * stable_sigmoid(arrays[0]),)


class Relu(Op):
    def forward(self, arrays, attrs):
        return np.maximum(arrays[0], 0.0).astype(arrays[0].dtype), None

    def backward(self, grad, arrays, out, saved, attrs):
        return (grad * (arrays[0] > 0),)


class LayerNorm(Op):
    """Normalizes the last axis to zero mean and unit variance; no affine part."""

    def forward(self, arrays, attrs):
        (x,) = arrays
        eps = attrs.get("eps", 1e-5)
        xc = x - x.mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
        y = xc * inv
        return y.astype(x.dtype), inv

    def backward(self, grad, arrays, out, saved, attrs):
        inv = saved
        g_mean = grad.mean(axis=-1, keepdims=True)
        gy_mean = (grad * out).mean(axis=-1, keepdims=True)
        return (inv * (grad - g_mean - out * gy_mean),)


class Softmax(Op):
    def forward(self, arrays, attrs):
        (x,) = arrays
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True), None

    def backward(self, grad, arrays, out, saved, attrs):
        return (out * (grad - (grad * out).sum(axis=-1, keepdims=True)),)


class EmbeddingLookup(Op):
    """Rows of a table gathered by integer indices held in attrs."""

    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        (table,) = arrays
        idx = np.asarray(attrs["indices"])
        if table.ndim != 2:
            raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
        if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
            raise ShapeError(
                f"embedding_lookup: index {int(idx.max())} outside table of {table.shape[0]} rows"
            )

    def forward(self, arrays, attrs):
        return arrays[0][np.asarray(attrs["indices"])], None

    def backward(self, grad, arrays, out, saved, attrs):
        gt = np.zeros_like(arrays[0])
        np.add.at(gt, np.asarray(attrs["indices"]), grad)
        return (gt,)


class CausalMaskedFill(Op):
    """Fills entries above the diagonal of the last two axes with MASK_VALUE."""

    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        (a,) = arrays
        if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
            raise ShapeError(f"causal_masked_fill: needs square trailing dims, got {a.shape}")

    def forward(self, arrays, attrs):
        (a,) = arrays
        keep = np.tril(np.ones(a.shape[-2:], dtype=bool))
        return np.where(keep, a, a.dtype.type(MASK_VALUE)), keep

    def backward(self, grad, arrays, out, saved, attrs):
        return (grad * saved,)


class Sum(Op):
    def forward(self, arrays, attrs):
        (a,) = arrays
        return np.asarray(a.sum(axis=attrs.get("axis")), dtype=a.dtype), None

    def backward(self, grad, arrays, out, saved, attrs):
        (a,) = arrays
        axis = attrs.get("axis")
        if axis is not None:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).astype(a.dtype),)


class CrossEntropy(Op):
    """
    Masked mean of -log softmax(logits)[target] over the leading axes.

    attrs:
        targets (int array): class index per position.
        mask (0/1 array): positions that contribute.
    """

    def check(self, arrays, attrs):
        super().check(arrays, attrs)
        (logits,) = arrays
        targets = np.asarray(attrs["targets"])
        mask = np.asarray(attrs["mask"])
        if logits.shape[-1] < 2:
            raise ShapeError("cross_entropy: needs at least 2 classes")
        if targets.shape != logits.shape[:-1] or mask.shape != targets.shape:
            raise ShapeError(
                f"cross_entropy: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}"
            )
        if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[-1]):
            raise ShapeError("cross_entropy: target outside [0, C)")
        if not np.any(mask):
            raise EmptyBatchError("cross_entropy: mask selects no positions")

    def forward(self, arrays, attrs):
        (logits,) = arrays
        targets = np.asarray(attrs["targets"])
        mask = np.asarray(attrs["mask"], dtype=logits.dtype)
        z = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        total = e.sum(axis=-1, keepdims=True)
        log_p = z - np.log(total)
        picked = np.take_along_axis(log_p, targets[..., None], axis=-1)[..., 0]
        count = mask.sum()
        loss = -(picked * mask).sum() / count
        return np.asarray(loss, dtype=logits.dtype), (e / total, count)

    def backward(self, grad, arrays, out, saved, attrs):
        probs, count = saved
        targets = np.asarray(attrs["targets"])
        mask = np.asarray(attrs["mask"], dtype=probs.dtype)
        d = probs.copy()
        np.put_along_axis(
            d, targets[..., None], np.take_along_axis(d, targets[..., None], axis=-1) - 1.0, axis=-1
        )
        return (d * (mask / count)[..., None] * grad,)


OPS: dict[str, Op] = {
    "matmul": MatMul(),
    "add": Add(),
    "mul": Mul(),
    "concat": Concat(),
    "slice": Slice(),
    "reshape": Reshape(),
    "transpose": Transpose(),
    "tanh": Tanh(),
    "sigmoid": Sigmoid(),
    "softplus": Softplus(),
    "relu": Relu(),
    "layer_norm": LayerNorm(),
    "softmax": Softmax(),
    "embedding_lookup": EmbeddingLookup(),
    "causal_masked_fill": CausalMaskedFill(),
    "sum": Sum(),
    "cross_entropy": CrossEntropy(),
}
