"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable operation records a `Node` (its parents plus a
vector-Jacobian product) on the tensor it produces. `ComputationGraph` turns
those records into a topological order and runs the backward pass over it.

Row operations (`softmax_rows`, `logsumexp_rows`, `layer_norm`, ...) act on
the last axis. Leading axes are treated as batch/head axes; binary operations
broadcast across them, which also covers the row-wise bias addition.

Example:
    ```python
    x = Tensor([[1.0, 2.0]], requires_grad=True)
    w = Tensor([[3.0], [4.0]], requires_grad=True)
    loss = matmul(x, w).sum()
    backward(loss)
    x.grad  # array([[3., 4.]])
    ```
"""

from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
import contextlib
import contextvars
import logging
import math
from typing import TYPE_CHECKING

import numpy as np
from scipy import special

from credal_transformer.errors import ContractError, DimensionError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, DTypeLike, NDArray

logger = logging.getLogger(__name__)

Axis = int | tuple[int, ...] | None
VjpFn = Callable[["NDArray[np.floating]"], Sequence["NDArray[np.floating] | None"]]

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "credal_grad_enabled", default=True
)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording within the block (evaluation, timing)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    """Whether operations currently record graph nodes."""
    return _grad_enabled.get()


class Node:
    """One recorded operation: its inputs and how to pull a gradient back to them."""

    __slots__ = ("op", "parents", "vjp")

    def __init__(self, op: str, parents: tuple[Tensor, ...], vjp: VjpFn) -> None:
        self.op = op
        self.parents = parents
        self.vjp = vjp


class Tensor:
    """Dense row-major array that can take part in a differentiation graph.

    Values are read-only after construction; only `grad` is mutable. Leaves
    created with `requires_grad=True` accumulate gradients across backward
    passes until `zero_grad()` is called.
    """

    __slots__ = ("_node", "grad", "requires_grad", "values")

    # Let numpy defer to our reflected operators (ndarray + Tensor).
    __array_ufunc__ = None

    def __init__(
        self,
        values: ArrayLike,
        *,
        requires_grad: bool = False,
        dtype: DTypeLike = None,
    ) -> None:
        """Create a tensor from array-like values (always copied).

        Args:
            values: Nested sequences or ndarray
            requires_grad: Whether this tensor is a differentiable leaf
            dtype: Element type; float64 unless values already hold floats
        """
        arr = np.array(values, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        arr.flags.writeable = False
        self.values: NDArray[np.floating] = arr
        self.requires_grad = requires_grad
        self.grad: NDArray[np.floating] | None = None
        self._node: Node | None = None

    @classmethod
    def _wrap(cls, values: NDArray[np.floating]) -> Tensor:
        """Wrap an operation result without copying."""
        out = cls.__new__(cls)
        # full reductions of 0-d arrays come back as numpy scalars
        values = np.asarray(values)
        values.flags.writeable = False
        out.values = values
        out.requires_grad = False
        out.grad = None
        out._node = None
        return out

    # -- introspection --------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def item(self) -> float:
        """Return the single value of a one-element tensor."""
        if self.size != 1:
            raise ContractError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def numpy(self) -> NDArray[np.floating]:
        """Return a writable copy of the values."""
        return self.values.copy()

    def detach(self) -> Tensor:
        """Same values, cut from the graph."""
        return Tensor._wrap(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Shorthand for `backward(self)`."""
        backward(self)

    # -- operators ------------------------------------------------------

    def __add__(self, other: Tensor | ArrayLike) -> Tensor:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | ArrayLike) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Tensor | ArrayLike) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Tensor | ArrayLike) -> Tensor:
        return div(self, other)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: int | slice | tuple) -> Tensor:
        return getitem(self, index)

    def sum(self, axis: Axis = None, *, keepdims: bool = False) -> Tensor:
        return tensor_sum(self, axis, keepdims=keepdims)

    def mean(self, axis: Axis = None, *, keepdims: bool = False) -> Tensor:
        return tensor_mean(self, axis, keepdims=keepdims)

    def reshape(self, *shape: int | Sequence[int]) -> Tensor:
        if len(shape) == 1 and not isinstance(shape[0], int):
            return reshape(self, shape[0])
        return reshape(self, shape)  # type: ignore[arg-type]

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)


# -- graph ----------------------------------------------------------------


class ComputationGraph:
    """Operations reachable from an output tensor, in recording order.

    The order is a valid topological order (parents before children), so the
    backward pass visits each node exactly once by walking it in reverse.
    """

    def __init__(self, output: Tensor) -> None:
        self.output = output
        self.order: list[Tensor] = self._toposort(output)

    @staticmethod
    def _toposort(root: Tensor) -> list[Tensor]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                stack.extend(
                    (parent, False)
                    for parent in reversed(tensor._node.parents)
                    if parent.requires_grad and id(parent) not in visited
                )
        return order

    @property
    def leaves(self) -> list[Tensor]:
        """Differentiable leaves reachable from the output."""
        return [t for t in self.order if t.is_leaf and t.requires_grad]

    def __len__(self) -> int:
        return len(self.order)

    def backward(self, seed: NDArray[np.floating] | None = None) -> None:
        """Propagate d(output) back to every leaf, adding into `leaf.grad`.

        Args:
            seed: Gradient of the final objective w.r.t. the output; ones if omitted
        """
        root = self.output
        if seed is None:
            seed = np.ones_like(root.values)
        pending: dict[int, NDArray[np.floating]] = {id(root): seed}

        for tensor in reversed(self.order):
            grad = pending.pop(id(tensor), None)
            if grad is None:
                continue
            if tensor._node is None:
                total = grad if tensor.grad is None else tensor.grad + grad
                tensor.grad = np.array(total)
                continue
            parent_grads = tensor._node.vjp(grad)
            for parent, parent_grad in zip(tensor._node.parents, parent_grads, strict=True):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = np.asarray(parent_grad)
                key = id(parent)
                if key in pending:
                    pending[key] = np.asarray(pending[key] + parent_grad)
                else:
                    pending[key] = parent_grad


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every differentiable leaf.

    Raises:
        ContractError: If the loss is not a scalar
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        logger.debug("backward() on a tensor that does not require grad; nothing to do")
        return
    ComputationGraph(loss).backward()


# -- helpers --------------------------------------------------------------


def as_tensor(value: Tensor | ArrayLike, *, dtype: DTypeLike = None) -> Tensor:
    """Return `value` unchanged if it is a Tensor, else a constant Tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=dtype or np.float64))


def _operands(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> tuple[Tensor, Tensor]:
    """Lift a binary operation's operands; constants take the dtype of the tensor side."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, as_tensor(b, dtype=a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return as_tensor(a, dtype=b.dtype), b
    return as_tensor(a), as_tensor(b)


def _record(
    op: str, values: NDArray[np.floating], parents: tuple[Tensor, ...], vjp: VjpFn
) -> Tensor:
    out = Tensor._wrap(values)
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(op, parents, vjp)
    return out


def _unbroadcast(grad: NDArray[np.floating], shape: tuple[int, ...]) -> NDArray[np.floating]:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if squeeze:
        grad = grad.sum(axis=squeeze, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from e


# -- elementwise arithmetic ---------------------------------------------


def add(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    ta, tb = _operands(a, b)
    _broadcast_shape("add", ta, tb)

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating], NDArray[np.floating]]:
        return _unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)

    return _record("add", ta.values + tb.values, (ta, tb), vjp)


def sub(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    ta, tb = _operands(a, b)
    _broadcast_shape("sub", ta, tb)

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating], NDArray[np.floating]]:
        return _unbroadcast(g, ta.shape), _unbroadcast(-g, tb.shape)

    return _record("sub", ta.values - tb.values, (ta, tb), vjp)


def mul(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    ta, tb = _operands(a, b)
    _broadcast_shape("mul", ta, tb)

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating], NDArray[np.floating]]:
        return _unbroadcast(g * tb.values, ta.shape), _unbroadcast(g * ta.values, tb.shape)

    return _record("mul", ta.values * tb.values, (ta, tb), vjp)


def div(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    ta, tb = _operands(a, b)
    _broadcast_shape("div", ta, tb)
    out = ta.values / tb.values

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating], NDArray[np.floating]]:
        return (
            _unbroadcast(g / tb.values, ta.shape),
            _unbroadcast(-g * out / tb.values, tb.shape),
        )

    return _record("div", out, (ta, tb), vjp)


def neg(x: Tensor) -> Tensor:
    return _record("neg", -x.values, (x,), lambda g: (-g,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.values)
    return _record("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _record("log", np.log(x.values), (x,), lambda g: (g / x.values,))


def log1p(x: Tensor) -> Tensor:
    return _record("log1p", np.log1p(x.values), (x,), lambda g: (g / (1.0 + x.values),))


def relu(x: Tensor) -> Tensor:
    keep = x.values > 0
    return _record("relu", np.where(keep, x.values, 0.0), (x,), lambda g: (g * keep,))


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)) as logaddexp(0, x); never overflows."""
    v = x.values
    out = np.logaddexp(0.0, v)
    return _record("softplus", out, (x,), lambda g: (g * special.expit(v),))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x·Φ(x)."""
    v = x.values
    cdf = 0.5 * (1.0 + special.erf(v * _INV_SQRT2))

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating]]:
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * v * v)
        return (g * (cdf + v * pdf),)

    return _record("gelu", v * cdf, (x,), vjp)


def where_mask(x: Tensor, keep: NDArray[np.bool_], fill: float) -> Tensor:
    """Replace entries where `keep` is False by `fill`; no gradient flows there.

    Raises:
        DimensionError: If `keep` would broadcast `x` to a larger shape
    """
    keep = np.asarray(keep, dtype=bool)
    try:
        target = np.broadcast_shapes(x.shape, keep.shape)
    except ValueError as e:
        raise DimensionError(f"where_mask: mask {keep.shape} does not fit {x.shape}") from e
    if target != x.shape:
        raise DimensionError(f"where_mask: mask {keep.shape} does not fit {x.shape}")
    out = np.where(keep, x.values, np.asarray(fill, dtype=x.dtype))
    return _record("where_mask", out, (x,), lambda g: (np.where(keep, g, 0.0),))


# -- linear algebra -----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast.

    Raises:
        DimensionError: If either operand has fewer than 2 axes or inner dims differ
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:  # noqa: PLR2004
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.values, b.values)
    except ValueError as e:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}") from e

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating], NDArray[np.floating]]:
        grad_a = _unbroadcast(np.matmul(g, np.swapaxes(b.values, -1, -2)), a.shape)
        grad_b = _unbroadcast(np.matmul(np.swapaxes(a.values, -1, -2), g), b.shape)
        return grad_a, grad_b

    return _record("matmul", out, (a, b), vjp)


# -- reductions and shape ----------------------------------------------


def _normalize_axes(axis: Axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else axis
    return tuple(sorted(a % ndim for a in axes))


def tensor_sum(x: Tensor, axis: Axis = None, *, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = np.sum(x.values, axis=axes, keepdims=keepdims)

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating]]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record("sum", np.asarray(out), (x,), vjp)


def tensor_mean(x: Tensor, axis: Axis = None, *, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = math.prod(x.shape[a] for a in axes)
    return tensor_sum(x, axes, keepdims=keepdims) * (1.0 / count)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = np.reshape(x.values, tuple(shape))
    except ValueError as e:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from e
    return _record("reshape", out, (x,), lambda g: (np.reshape(g, x.shape),))


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes; by default swap the last two."""
    if axes is None:
        perm = list(range(x.ndim))
        perm[-2], perm[-1] = perm[-1], perm[-2]
    else:
        perm = list(axes)
    inverse = np.argsort(perm)
    return _record(
        "transpose", np.transpose(x.values, perm), (x,), lambda g: (np.transpose(g, inverse),)
    )


def getitem(x: Tensor, index: int | slice | tuple) -> Tensor:
    """Basic or integer-array indexing; gradients scatter back additively."""

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating]]:
        grad = np.zeros_like(x.values)
        np.add.at(grad, index, g)
        return (grad,)

    return _record("getitem", np.array(x.values[index]), (x,), vjp)


def embedding(weight: Tensor, indices: NDArray[np.integer]) -> Tensor:
    """Gather rows of `weight` (vocab x d) at integer `indices` of any shape."""
    idx = np.asarray(indices)

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating]]:
        grad = np.zeros_like(weight.values)
        np.add.at(grad, idx, g)
        return (grad,)

    return _record("embedding", weight.values[idx], (weight,), vjp)


# -- row operations -----------------------------------------------------


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis (max-shifted). Entries equal to -inf get weight 0."""
    out = special.softmax(x.values, axis=-1)

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating]]:
        inner = np.sum(g * out, axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _record("softmax_rows", out, (x,), vjp)


def logsumexp_rows(x: Tensor) -> Tensor:
    """log Σ_j exp(x_ij) over the last axis, with row-max shift; drops that axis."""
    out = np.asarray(special.logsumexp(x.values, axis=-1))

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating]]:
        weights = np.exp(x.values - out[..., None])
        return (g[..., None] * weights,)

    return _record("logsumexp_rows", out, (x,), vjp)


def layer_norm(x: Tensor, scale: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply scale and bias."""
    if scale.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise DimensionError(
            f"layer_norm: scale {scale.shape} / bias {bias.shape} do not match rows of {x.shape}"
        )
    v = x.values
    mu = v.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(v.var(axis=-1, keepdims=True) + eps)
    xhat = (v - mu) * inv_std
    out = xhat * scale.values + bias.values
    lead = tuple(range(x.ndim - 1))

    def vjp(g: NDArray[np.floating]) -> tuple[NDArray[np.floating], ...]:
        dxhat = g * scale.values
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, np.sum(g * xhat, axis=lead), np.sum(g, axis=lead)

    return _record("layer_norm", out, (x, scale, bias), vjp)
