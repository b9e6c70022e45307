# -*- coding: utf-8 -*-
"""
VAE-LSTM-base: the classic sentence VAE whose prior is imposed on the last
encoder state only, trained with an annealed KL weight. It reuses the HR-VAE
parameters, decoder and loss masking unchanged.
"""
import dataclasses
import logging
import math

import numpy as np

from ..exceptions import ContractError
from . import tensor as T
from .hr_vae import EncoderTrace, reparameterize, selection_values

_logger = logging.getLogger(__name__)

ANNEAL_KINDS = [
    ('constant', 'Constant KL weight'),
    ('sigmoid', 'Sigmoid in the training step'),
]


@dataclasses.dataclass(frozen=True)
class AnnealSchedule:
    kind: str = 'sigmoid'
    midpoint_step: int = 2000
    steepness: float = 0.005
    constant_value: float = 1.0

    def __post_init__(self):
        if self.kind not in selection_values(ANNEAL_KINDS):
            raise ContractError("AnnealSchedule.kind must be one of %s, got %r." % (
                selection_values(ANNEAL_KINDS), self.kind))
        if not 0.0 <= self.constant_value <= 1.0:
            raise ContractError("AnnealSchedule.constant_value must lie in [0, 1], got %s." % self.constant_value)
        if self.steepness < 0:
            raise ContractError("AnnealSchedule.steepness must be non-negative, got %s." % self.steepness)


def anneal_weight(schedule, step):
    """
    KL weight at a training step: the constant value, or
    1 / (1 + exp(-steepness * (step - midpoint_step))).
    """
    if step < 0:
        raise ContractError("anneal_weight: step must be non-negative, got %s." % step)
    if schedule.kind == 'constant':
        return schedule.constant_value
    exponent = -schedule.steepness * (step - schedule.midpoint_step)
    # Far left tail: exp overflows while the weight is 0 to double precision.
    if exponent > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(exponent))


def encode_last_state(model, batch, noise=None):
    """
    Runs the same encoder as the HR-VAE but builds a single posterior, from
    [h; c] at each row's last valid timestep.

    Args:
        model (HrVae): Shared parameters.
        batch (Batch): Token ids and lengths.
        noise (np.ndarray | None): Standard-normal draws; None means z = mu.

    Returns:
        EncoderTrace: A trace holding that one posterior.
    """
    features = model.encoder_features(batch)
    last = np.asarray(batch.lengths) - 1
    final = model.posterior(T.gather_steps(T.stack(features, axis=1), last))
    z = reparameterize(final, np.zeros(final.shape) if noise is None else noise)
    return EncoderTrace([final], final, z, batch.lengths, per_timestep=False)
