# -*- coding: utf-8 -*-
"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every op returns a new `Tensor`. When gradient recording is on and any operand
requires a gradient, the result keeps references to its operands and a
closure that pushes the result's gradient back into them. `backward` walks
that graph once, in reverse topological order.

Elementwise ops accept equal shapes, or one operand whose shape equals the
other's shape without its leading batch dimension. Nothing else broadcasts.
"""
import contextlib
import logging
import threading

import numpy as np

from ..exceptions import ContractError, DomainError

_logger = logging.getLogger(__name__)

_grad_mode = threading.local()


def is_grad_enabled():
    return getattr(_grad_mode, 'enabled', True)


@contextlib.contextmanager
def no_grad():
    """
    Disables graph recording for the current thread. Forward values are
    unchanged; results simply carry no operands and no backward rule.
    """
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Tensor:
    """
    An n-dimensional float64 array with an optional gradient slot.

    Attributes:
        data (np.ndarray): The values, row-major float64.
        requires_grad (bool): Whether backward should fill `grad`.
        grad (np.ndarray | None): Accumulated gradient, same shape as `data`.
        name (str | None): Optional label, used in error messages.
    """
    __slots__ = ('data', 'requires_grad', 'grad', 'name', '_parents', '_backward', 'op')

    def __init__(self, data, requires_grad=False, name=None):
        array = np.array(data, dtype=np.float64)
        if any(dim <= 0 for dim in array.shape):
            raise ContractError("Tensor dimensions must be positive, got shape %s." % (array.shape,))
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self.op = None

    def __repr__(self):
        label = " name=%r" % self.name if self.name else ""
        return "Tensor(shape=%s%s, requires_grad=%s)" % (self.shape, label, self.requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError("item() needs a single-element tensor, got shape %s." % (self.shape,))
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def is_finite(self):
        """Validity check: True when no NaN/Inf is stored in data or grad."""
        if not np.all(np.isfinite(self.data)):
            return False
        return self.grad is None or bool(np.all(np.isfinite(self.grad)))

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def backward(self):
        backward(self)

    # Operator sugar, all routed through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul_elementwise(self, other)

    def __rmul__(self, other):
        return mul_elementwise(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _constant_like(value, like):
    return Tensor(np.full(like.shape, float(value)))


def _as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value
    if like is not None and np.ndim(value) == 0:
        return _constant_like(value, like)
    return Tensor(value)


def _record(data, parents, backward_rule, op):
    """Wraps a forward result and, when recording, attaches its backward rule."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    tracked = is_grad_enabled() and any(parent.requires_grad for parent in parents)
    out.requires_grad = tracked
    if tracked:
        out._parents = tuple(parents)
        out._backward = backward_rule
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(tensor, gradient):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.array(gradient, dtype=np.float64, copy=True)
    else:
        tensor.grad = tensor.grad + gradient


def _broadcast_kind(a, b, op):
    """
    Returns 'same', 'left' (a is [B, ...], b is [...]) or 'right' (the reverse).
    """
    if a.shape == b.shape:
        return 'same'
    if a.ndim == b.ndim + 1 and a.shape[1:] == b.shape:
        return 'left'
    if b.ndim == a.ndim + 1 and b.shape[1:] == a.shape:
        return 'right'
    raise ContractError("%s: shape mismatch between %s and %s." % (op, a.shape, b.shape))


def _unbroadcast(gradient, kind, side):
    # side is 'a' or 'b'; the operand without a batch dimension sums over it.
    if (kind == 'left' and side == 'b') or (kind == 'right' and side == 'a'):
        return gradient.sum(axis=0)
    return gradient


# --- Arithmetic ---

def add(a, b):
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    kind = _broadcast_kind(a, b, 'add')

    def backward_rule(out):
        _accumulate(a, _unbroadcast(out.grad, kind, 'a'))
        _accumulate(b, _unbroadcast(out.grad, kind, 'b'))

    return _record(a.data + b.data, (a, b), backward_rule, 'add')


def sub(a, b):
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    kind = _broadcast_kind(a, b, 'sub')

    def backward_rule(out):
        _accumulate(a, _unbroadcast(out.grad, kind, 'a'))
        _accumulate(b, -_unbroadcast(out.grad, kind, 'b'))

    return _record(a.data - b.data, (a, b), backward_rule, 'sub')


def neg(a):
    def backward_rule(out):
        _accumulate(a, -out.grad)

    return _record(-a.data, (a,), backward_rule, 'neg')


def mul_elementwise(a, b):
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    kind = _broadcast_kind(a, b, 'mul_elementwise')

    def backward_rule(out):
        _accumulate(a, _unbroadcast(out.grad * b.data, kind, 'a'))
        _accumulate(b, _unbroadcast(out.grad * a.data, kind, 'b'))

    return _record(a.data * b.data, (a, b), backward_rule, 'mul')


def matmul(a, b):
    """Matrix product of two 2-D tensors, [n × k] @ [k × m] -> [n × m]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError("matmul: shape mismatch between %s and %s." % (a.shape, b.shape))

    def backward_rule(out):
        if a.requires_grad:
            _accumulate(a, out.grad @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ out.grad)

    return _record(a.data @ b.data, (a, b), backward_rule, 'matmul')


def transpose(a):
    if a.ndim != 2:
        raise ContractError("transpose: expected a 2-D tensor, got shape %s." % (a.shape,))

    def backward_rule(out):
        _accumulate(a, out.grad.T)

    return _record(a.data.T.copy(), (a,), backward_rule, 'transpose')


def reshape(a, shape):
    shape = tuple(int(dim) for dim in shape)
    if int(np.prod(shape)) != a.size:
        raise ContractError("reshape: cannot view shape %s as %s." % (a.shape, shape))

    def backward_rule(out):
        _accumulate(a, out.grad.reshape(a.shape))

    return _record(a.data.reshape(shape).copy(), (a,), backward_rule, 'reshape')


def sum(a, axis=None):
    """Sum over one axis, or over everything into a [1] tensor when axis is None."""
    if axis is None:
        def backward_rule(out):
            _accumulate(a, np.full(a.shape, out.grad.reshape(-1)[0]))

        return _record(np.array([a.data.sum()]), (a,), backward_rule, 'sum')

    if not 0 <= axis < a.ndim:
        raise ContractError("sum: axis %s out of range for shape %s." % (axis, a.shape))
    if a.ndim == 1:
        return sum(a)

    def backward_rule(out):
        _accumulate(a, np.broadcast_to(np.expand_dims(out.grad, axis), a.shape))

    return _record(a.data.sum(axis=axis), (a,), backward_rule, 'sum')


def mean(a):
    return mul_elementwise(sum(a), 1.0 / a.size)


# --- Structure ---

def concat(a, b, axis):
    if a.ndim != b.ndim or not 0 <= axis < a.ndim or any(
            a.shape[dim] != b.shape[dim] for dim in range(a.ndim) if dim != axis):
        raise ContractError("concat: shape mismatch between %s and %s on axis %s." % (a.shape, b.shape, axis))
    split = a.shape[axis]

    def backward_rule(out):
        _accumulate(a, np.take(out.grad, np.arange(split), axis=axis))
        _accumulate(b, np.take(out.grad, np.arange(split, out.grad.shape[axis]), axis=axis))

    return _record(np.concatenate([a.data, b.data], axis=axis), (a, b), backward_rule, 'concat')


def concat_all(tensors, axis):
    """Left fold of `concat` over a non-empty list."""
    if not tensors:
        raise ContractError("concat_all: nothing to concatenate.")
    result = tensors[0]
    for tensor in tensors[1:]:
        result = concat(result, tensor, axis)
    return result


def slice(a, axis, start, stop):
    """Keeps indices [start, stop) along `axis`."""
    if not 0 <= axis < a.ndim or not 0 <= start < stop <= a.shape[axis]:
        raise ContractError("slice: range [%s, %s) on axis %s invalid for shape %s." % (start, stop, axis, a.shape))
    index = [np.s_[:]] * a.ndim
    index[axis] = np.s_[start:stop]
    index = tuple(index)

    def backward_rule(out):
        gradient = np.zeros(a.shape)
        gradient[index] = out.grad
        _accumulate(a, gradient)

    return _record(a.data[index].copy(), (a,), backward_rule, 'slice')


def stack(tensors, axis):
    if not tensors:
        raise ContractError("stack: nothing to stack.")
    shape = tensors[0].shape
    for tensor in tensors:
        if tensor.shape != shape:
            raise ContractError("stack: shape mismatch between %s and %s." % (shape, tensor.shape))
    if not 0 <= axis <= len(shape):
        raise ContractError("stack: axis %s out of range for shape %s." % (axis, shape))

    def backward_rule(out):
        for position, tensor in enumerate(tensors):
            if tensor.requires_grad:
                _accumulate(tensor, np.take(out.grad, position, axis=axis))

    return _record(np.stack([tensor.data for tensor in tensors], axis=axis), tuple(tensors), backward_rule, 'stack')


def take(table, ids):
    """
    Row lookup: result[..., :] = table[ids[...], :]. The gradient scatters back
    into the looked-up rows only, summing over repeated ids.
    """
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ContractError("take: table must be 2-D, got shape %s." % (table.shape,))
    if ids.size == 0:
        raise ContractError("take: no ids given.")
    if not np.issubdtype(ids.dtype, np.integer) or ids.min() < 0 or ids.max() >= table.shape[0]:
        raise ContractError("take: ids must be integers in [0, %s), got range [%s, %s]." % (
            table.shape[0], ids.min(), ids.max()))

    def backward_rule(out):
        gradient = np.zeros(table.shape)
        np.add.at(gradient, ids.reshape(-1), out.grad.reshape(-1, table.shape[1]))
        _accumulate(table, gradient)

    return _record(table.data[ids], (table,), backward_rule, 'take')


def gather_steps(x, index):
    """Picks x[i, index[i], :] for every row i of a [B × T × D] tensor."""
    index = np.asarray(index, dtype=np.int64)
    if x.ndim != 3 or index.shape != (x.shape[0],) or index.min() < 0 or index.max() >= x.shape[1]:
        raise ContractError("gather_steps: index %s does not fit shape %s." % (index.tolist(), x.shape))
    rows = np.arange(x.shape[0])

    def backward_rule(out):
        gradient = np.zeros(x.shape)
        gradient[rows, index] = out.grad
        _accumulate(x, gradient)

    return _record(x.data[rows, index].copy(), (x,), backward_rule, 'gather_steps')


# --- Nonlinearities ---

def sigmoid(a):
    # exp(-|x|) never overflows.
    decay = np.exp(-np.abs(a.data))
    values = np.where(a.data >= 0, 1.0 / (1.0 + decay), decay / (1.0 + decay))

    def backward_rule(out):
        _accumulate(a, out.grad * values * (1.0 - values))

    return _record(values, (a,), backward_rule, 'sigmoid')


def tanh(a):
    values = np.tanh(a.data)

    def backward_rule(out):
        _accumulate(a, out.grad * (1.0 - values * values))

    return _record(values, (a,), backward_rule, 'tanh')


def exp(a):
    values = np.exp(a.data)

    def backward_rule(out):
        _accumulate(a, out.grad * values)

    return _record(values, (a,), backward_rule, 'exp')


def log(a):
    if np.any(a.data <= 0) or not np.all(np.isfinite(a.data)):
        raise DomainError("log: input has non-positive or non-finite values (min %s)." % a.data.min())

    def backward_rule(out):
        _accumulate(a, out.grad / a.data)

    return _record(np.log(a.data), (a,), backward_rule, 'log')


def softmax_cross_entropy(logits, target_ids, ignore_id=None, reduction='sum'):
    """
    Fused log-softmax + negative log-likelihood over the last axis.

    Args:
        logits (Tensor): [N × V] scores, or [V] for a single row.
        target_ids (array-like): N integer targets (a scalar for a single row).
        ignore_id (int | None): Rows whose target equals this id contribute
            neither loss nor gradient.
        reduction (str): 'sum' -> [1], 'mean' over kept rows -> [1],
            'none' -> [N] with zeros at ignored rows.

    Returns:
        Tensor: The loss.
    """
    if reduction not in ('sum', 'mean', 'none'):
        raise ContractError("softmax_cross_entropy: unknown reduction %r." % (reduction,))
    scores = logits.data
    targets = np.asarray(target_ids, dtype=np.int64)
    if scores.ndim == 1:
        scores = scores.reshape(1, -1)
        targets = targets.reshape(1)
    if scores.ndim != 2 or targets.shape != (scores.shape[0],):
        raise ContractError("softmax_cross_entropy: logits %s do not match targets %s." % (
            logits.shape, targets.shape))
    if not np.all(np.isfinite(scores)):
        raise DomainError("softmax_cross_entropy: logits are not finite.")

    kept = np.ones(targets.shape, dtype=bool) if ignore_id is None else targets != ignore_id
    safe_targets = np.where(kept, targets, 0)
    if safe_targets.min() < 0 or safe_targets.max() >= scores.shape[1]:
        raise ContractError("softmax_cross_entropy: target ids out of range [0, %s)." % scores.shape[1])

    shifted = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(scores.shape[0])
    per_row = np.where(kept, log_norm - shifted[rows, safe_targets], 0.0)
    kept_count = int(kept.sum())

    if reduction == 'none':
        value = per_row
    elif reduction == 'sum':
        value = np.array([per_row.sum()])
    else:
        if kept_count == 0:
            raise ContractError("softmax_cross_entropy: every target is ignored, mean is undefined.")
        value = np.array([per_row.sum() / kept_count])

    def backward_rule(out):
        probabilities = np.exp(shifted - log_norm[:, None])
        probabilities[rows, safe_targets] -= 1.0
        probabilities *= kept[:, None]
        if reduction == 'none':
            gradient = probabilities * out.grad[:, None]
        elif reduction == 'sum':
            gradient = probabilities * out.grad.reshape(-1)[0]
        else:
            gradient = probabilities * (out.grad.reshape(-1)[0] / kept_count)
        _accumulate(logits, gradient.reshape(logits.shape))

    return _record(value, (logits,), backward_rule, 'softmax_cross_entropy')


# --- Graph traversal ---

class ComputeGraph:
    """
    The operations reachable from a root tensor, in topological order: every
    node appears after all the nodes that produced its operands.
    """

    def __init__(self, root):
        self.root = root
        self.nodes = self._topological_order(root)

    @staticmethod
    def _topological_order(root):
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self):
        if self.root.size != 1:
            raise ContractError("backward: loss must be a scalar, got shape %s." % (self.root.shape,))
        if not self.root.requires_grad:
            raise ContractError("backward: loss does not depend on any tensor that requires a gradient.")
        self.root.grad = np.ones(self.root.shape)
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node)
        _logger.debug("Backward pass visited %s nodes.", len(self.nodes))


def backward(loss):
    """
    Fills `grad` of every tensor that requires a gradient and is reachable
    from `loss`. Gradients add up across multiple uses of a tensor and across
    calls; clear them with `zero_grad` between steps.
    """
    ComputeGraph(loss).backward()


# --- Finite-difference checks ---

def _relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))


def grad_check(f, point, step=1e-5):
    """
    Compares the backward gradient of a scalar function with central finite
    differences.

    Args:
        f (callable): Maps a Tensor to a scalar Tensor.
        point (Tensor | array-like): Where to evaluate.
        step (float): Finite-difference step, > 0.

    Returns:
        float: max over coordinates of |analytic - numeric| / max(1, |analytic|).
    """
    if step <= 0:
        raise ContractError("grad_check: step must be positive, got %s." % step)
    base = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)

    variable = Tensor(base.copy(), requires_grad=True)
    loss = f(variable)
    if not np.all(np.isfinite(loss.data)):
        raise DomainError("grad_check: function value is not finite at the given point.")
    backward(loss)
    analytic = variable.grad if variable.grad is not None else np.zeros(base.shape)

    numeric = np.zeros(base.shape)
    flat = numeric.reshape(-1)
    with no_grad():
        for position in range(base.size):
            shifted = base.copy().reshape(-1)
            shifted[position] += step
            upper = f(Tensor(shifted.reshape(base.shape))).item()
            shifted[position] -= 2 * step
            lower = f(Tensor(shifted.reshape(base.shape))).item()
            if not (np.isfinite(upper) and np.isfinite(lower)):
                raise DomainError("grad_check: non-finite value near coordinate %s." % position)
            flat[position] = (upper - lower) / (2 * step)
    return float(_relative_error(analytic, numeric).max())


def check_parameter_gradients(loss_fn, params, step=1e-5, coords=None, rng=None, directions=None):
    """
    Finite-difference check over a dict of named parameters used in place.

    Args:
        loss_fn (callable): No-argument function returning the scalar loss
            built from `params`.
        params (dict[str, Tensor]): Parameters that require gradients.
        step (float): Finite-difference step.
        coords (int | None): Check this many random coordinates per parameter
            instead of all of them.
        rng (np.random.Generator | None): Source for the coordinate and
            direction draws.
        directions (int | None): Also compare the directional derivative along
            this many random unit directions per parameter, which involves
            every coordinate at once. With `coords` left at None, only the
            directions are checked.

    Returns:
        dict[str, float]: Max relative error per parameter.
    """
    for param in params.values():
        param.zero_grad()
    loss = loss_fn()
    backward(loss)
    rng = rng if rng is not None else np.random.default_rng(0)

    def central_difference(param, name, original, offset):
        param.data = original + offset
        upper = loss_fn().item()
        param.data = original - offset
        lower = loss_fn().item()
        param.data = original
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise DomainError("check_parameter_gradients: non-finite loss perturbing %s." % name)
        return (upper - lower) / (2 * step)

    errors = {}
    with no_grad():
        for name, param in params.items():
            analytic = param.grad if param.grad is not None else np.zeros(param.shape)
            original = param.data
            worst = 0.0
            positions = []
            if directions is None or coords is not None:
                positions = np.arange(param.size)
                if coords is not None and coords < param.size:
                    positions = rng.choice(param.size, size=coords, replace=False)
            for position in positions:
                offset = np.zeros(param.size)
                offset[position] = step
                numeric = central_difference(param, name, original, offset.reshape(original.shape))
                worst = max(worst, float(_relative_error(analytic.reshape(-1)[position], numeric)))
            for _ in range(directions or 0):
                direction = rng.standard_normal(param.shape)
                direction /= np.linalg.norm(direction)
                numeric = central_difference(param, name, original, step * direction)
                worst = max(worst, float(_relative_error(np.sum(analytic * direction), numeric)))
            errors[name] = worst
    return errors
