# diff_engine.py
# A small reverse-mode differentiation engine on top of numpy (float64 everywhere).
#
# Every operation is a Function subclass: forward() computes on raw arrays and saves
# what backward() needs, backward() maps the output gradient to one gradient per
# input. Function.apply() wires the result Tensor to its creator only when some input
# requires a gradient and recording is enabled, so the tape is rebuilt on every call.
#
# Tensor.backward() walks the recorded graph once in reverse topological order and
# accumulates gradients on leaf tensors only.
#
# Also here: Mlp (ReLU hidden layers), Adam, soft_update, the no_grad()/frozen()
# contexts, and a central finite-difference helper used by the gradient checks.

import copy
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from src.guardrails import ShapeMismatch

_RECORDING = True

LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0


@contextmanager
def no_grad():
    """Run forward passes without recording a tape."""
    global _RECORDING
    previous, _RECORDING = _RECORDING, False
    try:
        yield
    finally:
        _RECORDING = previous


@contextmanager
def frozen(*modules):
    """Stop gradients into the given modules' parameters for the duration."""
    params = [p for m in modules for p in m.parameters()]
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, flags):
            p.requires_grad = flag


class Tensor:
    # ndarray <op> Tensor defers to the reflected Tensor operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.ctx: Optional["Function"] = None
        self.name = name

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- operators --

    def __neg__(self): return Neg.apply(self)
    def __add__(self, x): return Add.apply(self, x)
    def __radd__(self, x): return Add.apply(x, self)
    def __sub__(self, x): return Sub.apply(self, x)
    def __rsub__(self, x): return Sub.apply(x, self)
    def __mul__(self, x): return Mul.apply(self, x)
    def __rmul__(self, x): return Mul.apply(x, self)
    def __truediv__(self, x): return Div.apply(self, x)
    def __rtruediv__(self, x): return Div.apply(x, self)
    def __matmul__(self, x): return MatMul.apply(self, x)
    def __getitem__(self, index): return Index.apply(self, index=index)

    def tanh(self): return Tanh.apply(self)
    def relu(self): return Relu.apply(self)
    def exp(self): return Exp.apply(self)
    def sqrt(self): return Sqrt.apply(self)
    def square(self): return Square.apply(self)
    def abs(self): return Abs.apply(self)
    def sum(self, axis=None, keepdims=False): return Sum.apply(self, axis=axis, keepdims=keepdims)
    def mean(self, axis=None, keepdims=False): return Mean.apply(self, axis=axis, keepdims=keepdims)
    def clip(self, lo, hi): return Clip.apply(self, lo=lo, hi=hi)

    # -- backward --

    def _toposort(self) -> List["Tensor"]:
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.ctx is not None:
                for parent, needed in zip(node.ctx.parents, node.ctx.needs):
                    if needed and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self, grad=None):
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeMismatch(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")

        grads: Dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(self._toposort()):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.ctx is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, needed, parent_grad in zip(node.ctx.parents, node.ctx.needs, node.ctx.backward(g)):
                if parent_grad is None or not needed:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    def __init__(self, *parents: Tensor):
        self.parents = parents

    @classmethod
    def apply(cls, *inputs, **kwargs) -> Tensor:
        tensors = [as_tensor(x) for x in inputs]
        fn = cls(*tensors)
        data = fn.forward(*[t.data for t in tensors], **kwargs)
        needs_grad = _RECORDING and any(t.requires_grad for t in tensors)
        out = Tensor(data, requires_grad=needs_grad)
        if needs_grad:
            # flags as of the forward pass; frozen() may restore them before backward()
            fn.needs = tuple(t.requires_grad for t in tensors)
            out.ctx = fn
        return out

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


def _check_broadcast(x: np.ndarray, y: np.ndarray, op: str):
    try:
        np.broadcast_shapes(x.shape, y.shape)
    except ValueError:
        raise ShapeMismatch(f"cannot {op} shapes {x.shape} and {y.shape}") from None


class Add(Function):
    def forward(self, x, y):
        _check_broadcast(x, y, "add")
        self.shapes = x.shape, y.shape
        return x + y

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, x, y):
        _check_broadcast(x, y, "subtract")
        self.shapes = x.shape, y.shape
        return x - y

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Mul(Function):
    def forward(self, x, y):
        _check_broadcast(x, y, "multiply")
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return _unbroadcast(grad * self.y, self.x.shape), _unbroadcast(grad * self.x, self.y.shape)


class Div(Function):
    def forward(self, x, y):
        _check_broadcast(x, y, "divide")
        self.x, self.y = x, y
        return x / y

    def backward(self, grad):
        gx = grad / self.y
        gy = -grad * self.x / (self.y * self.y)
        return _unbroadcast(gx, self.x.shape), _unbroadcast(gy, self.y.shape)


class MatMul(Function):
    def forward(self, x, y):
        if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[0]:
            raise ShapeMismatch(f"cannot matmul shapes {x.shape} and {y.shape}")
        self.x, self.y = x, y
        return x @ y

    def backward(self, grad):
        return grad @ self.y.T, self.x.T @ grad


class Tanh(Function):
    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return x * self.mask

    def backward(self, grad):
        return (grad * self.mask,)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Sqrt(Function):
    def forward(self, x):
        self.out = np.sqrt(x)
        return self.out

    def backward(self, grad):
        # subgradient 0 at the origin
        safe = np.where(self.out > 0, self.out, 1.0)
        return (np.where(self.out > 0, grad / (2.0 * safe), 0.0),)


class Square(Function):
    def forward(self, x):
        self.x = x
        return x * x

    def backward(self, grad):
        return (2.0 * self.x * grad,)


class Abs(Function):
    def forward(self, x):
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad):
        return (grad * self.sign,)


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return x.sum(axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Sum):
    def forward(self, x, axis=None, keepdims=False):
        out = super().forward(x, axis=axis, keepdims=keepdims)
        self.count = x.size // max(out.size, 1)
        return out / self.count

    def backward(self, grad):
        return (super().backward(grad)[0] / self.count,)


class Clip(Function):
    def forward(self, x, lo, hi):
        self.mask = (x >= lo) & (x <= hi)
        return np.clip(x, lo, hi)

    def backward(self, grad):
        return (grad * self.mask,)


class Index(Function):
    def forward(self, x, index):
        self.shape, self.index = x.shape, index
        return x[index]

    def backward(self, grad):
        out = np.zeros(self.shape)
        np.add.at(out, self.index, grad)
        return (out,)


class Concat(Function):
    def forward(self, *xs, axis=-1):
        self.axis = axis
        self.sizes = [x.shape[axis] for x in xs]
        try:
            return np.concatenate(xs, axis=axis)
        except ValueError as err:
            raise ShapeMismatch(f"cannot concat shapes {[x.shape for x in xs]}: {err}") from None

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def l1_norm(x: Tensor, axis: int = -1) -> Tensor:
    return as_tensor(x).abs().sum(axis=axis)


def gaussian_sample(mean: Tensor, log_std: Tensor, noise: np.ndarray,
                    lo: float = LOG_STD_MIN, hi: float = LOG_STD_MAX) -> Tensor:
    """Reparameterized draw mean + exp(clip(log_std)) * noise, with noise supplied by the caller."""
    std = as_tensor(log_std).clip(lo, hi).exp()
    return as_tensor(mean) + std * np.asarray(noise, dtype=np.float64)


def finite_difference_grad(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + h
        f_plus = fn(x)
        x[i] = orig - h
        f_minus = fn(x)
        x[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


# -- Networks --

class Mlp:
    """
    Fully connected network: ReLU on hidden layers, optional tanh on the output.

    widths = [in, hidden..., out]. Weights start uniform in +-1/sqrt(fan_in);
    final_scale shrinks the last layer (1e-2 for actors gives near-zero initial actions).
    """

    def __init__(self, widths: Sequence[int], rng: np.random.Generator,
                 output_activation: Optional[str] = None, final_scale: float = 1.0):
        if len(widths) < 2:
            raise ValueError(f"an Mlp needs at least input and output widths, got {widths}")
        if output_activation not in (None, "tanh"):
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.widths = list(widths)
        self.output_activation = output_activation
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        n_layers = len(widths) - 1
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            scale = final_scale if i == n_layers - 1 else 1.0
            self.weights.append(Tensor(scale * rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True))
            self.biases.append(Tensor(scale * rng.uniform(-bound, bound, (fan_out,)), requires_grad=True))

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ShapeMismatch(f"Mlp expects (batch, {self.widths[0]}), got {x.shape}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if i < last:
                x = x.relu()
        if self.output_activation == "tanh":
            x = x.tanh()
        return x

    def parameters(self) -> List[Tensor]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def named_parameters(self) -> Dict[str, Tensor]:
        named = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"layers.{i}.weight"] = w
            named[f"layers.{i}.bias"] = b
        return named

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        named = self.named_parameters()
        if set(state) != set(named):
            raise ShapeMismatch(f"parameter names differ: {sorted(set(state) ^ set(named))}")
        for name, values in state.items():
            values = np.asarray(values, dtype=np.float64)
            if values.shape != named[name].shape:
                raise ShapeMismatch(f"{name}: expected {named[name].shape}, got {values.shape}")
            named[name].data = values.copy()

    def copy(self) -> "Mlp":
        clone = copy.deepcopy(self)
        for p in clone.parameters():
            p.grad = None
        return clone

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class Adam:
    def __init__(self, params: Iterable[Tensor], lr: float = 1e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data = p.data - self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def _param_list(obj) -> List[Tensor]:
    return list(obj.parameters()) if hasattr(obj, "parameters") else list(obj)


def soft_update(target, online, tau: float):
    """target <- tau * online + (1 - tau) * target, in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    target_params, online_params = _param_list(target), _param_list(online)
    if len(target_params) != len(online_params):
        raise ShapeMismatch(f"{len(target_params)} target parameters vs {len(online_params)} online")
    for t, o in zip(target_params, online_params):
        if t.shape != o.shape:
            raise ShapeMismatch(f"target shape {t.shape} does not match online shape {o.shape}")
        t.data = tau * o.data + (1.0 - tau) * t.data
