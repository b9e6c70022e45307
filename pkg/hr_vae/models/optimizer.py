# -*- coding: utf-8 -*-
"""
Adam with bias correction, plus global-norm gradient clipping.
"""
import dataclasses
import logging

import numpy as np

from ..exceptions import ContractError, NumericalError

_logger = logging.getLogger(__name__)


@dataclasses.dataclass
class AdamState:
    """
    Moment estimates per parameter name and the shared step count.

    Attributes:
        m (dict[str, np.ndarray]): First moments.
        v (dict[str, np.ndarray]): Second moments.
        step (int): Updates applied so far.
    """
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = dataclasses.field(default_factory=dict)
    v: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def for_parameters(cls, params, **hyper):
        state = cls(**hyper)
        for name, param in params.items():
            state.m[name] = np.zeros(param.shape)
            state.v[name] = np.zeros(param.shape)
        return state


def global_grad_norm(params):
    total = 0.0
    for param in params.values():
        if param.grad is not None:
            total += float(np.sum(param.grad * param.grad))
    return float(np.sqrt(total))


def clip_grad_norm(params, max_norm):
    """
    Rescales every gradient by max_norm / norm when the global norm exceeds
    max_norm. A max_norm of 0 disables clipping.

    Returns:
        float: The norm before clipping.
    """
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for param in params.values():
            if param.grad is not None:
                param.grad = param.grad * scale
        _logger.debug("Clipped gradient norm %.4g to %.4g.", norm, max_norm)
    return norm


def adam_step(params, state):
    """
    One Adam update from the gradients stored on the parameters:
    m_hat = m / (1 - beta1^t), v_hat = v / (1 - beta2^t),
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).

    The step is aborted before any parameter moves if a gradient is missing
    or not finite.

    Args:
        params (dict[str, Tensor]): Parameters, updated in place.
        state (AdamState): Moments, updated in place.
    """
    for name, param in params.items():
        if param.grad is None:
            raise ContractError("adam_step: parameter %s has no gradient." % name)
        if not np.all(np.isfinite(param.grad)):
            raise NumericalError("adam_step: gradient of parameter %s is not finite." % name)
        if name not in state.m:
            raise ContractError("adam_step: parameter %s has no optimizer state." % name)

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        gradient = param.grad
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * gradient
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * gradient * gradient
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        param.data = param.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
