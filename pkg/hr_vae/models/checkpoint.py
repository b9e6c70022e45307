# -*- coding: utf-8 -*-
"""
Single-file binary checkpoints. All integers and floats are little-endian.

    magic            6 bytes   b'HRVAE\\0'
    version          u32       FORMAT_VERSION
    metadata         u32 length + UTF-8 JSON (sorted keys): model_config,
                     experiment_config (or null), vocab {tokens, counts, min_freq}
    parameters       u32 count, then per tensor:
                     u32 name length, UTF-8 name, u32 ndim, ndim x u32 dims,
                     prod(dims) x f64 values (row-major)
    optimizer        f64 lr, f64 beta1, f64 beta2, f64 eps, u64 step,
                     u32 count, then tensor records named 'm/<param>' and 'v/<param>'
    rng              u32 length + UTF-8 JSON of the numpy bit generator state
    global step      u64

Writing goes through a temporary file and a rename, so an interrupted write
never replaces the previous checkpoint.
"""
import dataclasses
import json
import logging
import os
import struct

import numpy as np

from ..exceptions import CheckpointError, ConfigError, ContractError
from .config import ExperimentConfig
from .hr_vae import HrVae, ModelConfig
from .optimizer import AdamState
from .vocab import Vocab

_logger = logging.getLogger(__name__)

MAGIC = b'HRVAE\x00'
FORMAT_VERSION = 1


@dataclasses.dataclass
class Checkpoint:
    model_config: ModelConfig
    vocab: Vocab
    parameters: dict
    adam: AdamState
    rng_state: dict
    global_step: int
    experiment_config: ExperimentConfig = None
    version: int = FORMAT_VERSION

    @classmethod
    def capture(cls, model, vocab, adam, rng, global_step, experiment_config=None):
        """Snapshots live training objects (arrays are copied)."""
        return cls(
            model_config=model.config,
            vocab=vocab,
            parameters={name: param.data.copy() for name, param in model.parameters().items()},
            adam=AdamState(
                lr=adam.lr, beta1=adam.beta1, beta2=adam.beta2, eps=adam.eps, step=adam.step,
                m={name: array.copy() for name, array in adam.m.items()},
                v={name: array.copy() for name, array in adam.v.items()},
            ),
            rng_state=rng.bit_generator.state,
            global_step=global_step,
            experiment_config=experiment_config,
        )

    def restore_model(self):
        """Builds an HrVae holding the stored parameters."""
        if len(self.vocab) != self.model_config.vocab_size:
            raise CheckpointError("Checkpoint vocab has %s tokens but the model expects %s." % (
                len(self.vocab), self.model_config.vocab_size))
        model = HrVae(self.model_config, np.random.default_rng(0))
        try:
            model.load_parameters(self.parameters)
        except ContractError as e:
            raise CheckpointError("Checkpoint parameters do not match the model config: %s" % e)
        return model

    def restore_rng(self):
        bit_generator = getattr(np.random, self.rng_state['bit_generator'])()
        bit_generator.state = self.rng_state
        return np.random.Generator(bit_generator)


class _Writer:

    def __init__(self):
        self.chunks = []

    def pack(self, fmt, *values):
        self.chunks.append(struct.pack('<' + fmt, *values))

    def blob(self, data):
        self.pack('I', len(data))
        self.chunks.append(data)

    def json(self, value):
        self.blob(json.dumps(value, sort_keys=True, separators=(',', ':')).encode('utf-8'))

    def tensors(self, arrays):
        self.pack('I', len(arrays))
        for name, array in arrays.items():
            array = np.ascontiguousarray(array, dtype='<f8')
            self.blob(name.encode('utf-8'))
            self.pack('I', array.ndim)
            self.pack('%dI' % array.ndim, *array.shape)
            self.chunks.append(array.tobytes())

    def getvalue(self):
        return b''.join(self.chunks)


class _Reader:

    def __init__(self, data, path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size):
        if self.offset + size > len(self.data):
            raise CheckpointError("Checkpoint %s is truncated at byte %s." % (self.path, self.offset))
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt):
        fmt = '<' + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def blob(self):
        (length,) = self.unpack('I')
        return self.take(length)

    def json(self):
        try:
            return json.loads(self.blob().decode('utf-8'))
        except (UnicodeDecodeError, ValueError) as e:
            raise CheckpointError("Checkpoint %s holds an unreadable JSON block: %s" % (self.path, e))

    def tensors(self):
        (count,) = self.unpack('I')
        arrays = {}
        for _ in range(count):
            name = self.blob().decode('utf-8')
            (ndim,) = self.unpack('I')
            shape = self.unpack('%dI' % ndim)
            size = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(self.take(8 * size), dtype='<f8').reshape(shape).astype(np.float64)
        return arrays


def encode_checkpoint(checkpoint):
    writer = _Writer()
    writer.chunks.append(MAGIC)
    writer.pack('I', checkpoint.version)
    writer.json({
        'model_config': checkpoint.model_config.to_dict(),
        'experiment_config': (dataclasses.asdict(checkpoint.experiment_config)
                              if checkpoint.experiment_config is not None else None),
        'vocab': checkpoint.vocab.to_dict(),
    })
    writer.tensors(checkpoint.parameters)
    adam = checkpoint.adam
    writer.pack('4d', adam.lr, adam.beta1, adam.beta2, adam.eps)
    writer.pack('Q', adam.step)
    moments = {'m/' + name: array for name, array in adam.m.items()}
    moments.update({'v/' + name: array for name, array in adam.v.items()})
    writer.tensors(moments)
    writer.json(checkpoint.rng_state)
    writer.pack('Q', checkpoint.global_step)
    return writer.getvalue()


def decode_checkpoint(data, path='<memory>'):
    reader = _Reader(data, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("%s is not an HR-VAE checkpoint (bad magic bytes)." % path)
    (version,) = reader.unpack('I')
    if version != FORMAT_VERSION:
        raise CheckpointError("Checkpoint %s has format version %s, expected %s." % (path, version, FORMAT_VERSION))
    metadata = reader.json()
    try:
        model_config = ModelConfig(**metadata['model_config'])
        experiment_config = (ExperimentConfig(**metadata['experiment_config'])
                             if metadata.get('experiment_config') is not None else None)
        vocab = Vocab.from_dict(metadata['vocab'])
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise CheckpointError("Checkpoint %s holds invalid metadata: %s" % (path, e))
    parameters = reader.tensors()
    lr, beta1, beta2, eps = reader.unpack('4d')
    (step,) = reader.unpack('Q')
    moments = reader.tensors()
    adam = AdamState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=step,
        m={name[2:]: array for name, array in moments.items() if name.startswith('m/')},
        v={name[2:]: array for name, array in moments.items() if name.startswith('v/')},
    )
    rng_state = reader.json()
    (global_step,) = reader.unpack('Q')
    if reader.offset != len(data):
        raise CheckpointError("Checkpoint %s has %s trailing bytes." % (path, len(data) - reader.offset))
    return Checkpoint(
        model_config=model_config,
        vocab=vocab,
        parameters=parameters,
        adam=adam,
        rng_state=rng_state,
        global_step=global_step,
        experiment_config=experiment_config,
        version=version,
    )


def save_checkpoint(path, checkpoint):
    data = encode_checkpoint(checkpoint)
    temporary = path + '.tmp'
    with open(temporary, 'wb') as checkpoint_file:
        checkpoint_file.write(data)
    os.replace(temporary, path)
    _logger.info("Checkpoint written: %s (step %s, %s bytes).", path, checkpoint.global_step, len(data))


def load_checkpoint(path, expected_model_config=None):
    """
    Reads a checkpoint.

    Args:
        path (str): Checkpoint file.
        expected_model_config (ModelConfig | None): When given, the stored
            model config must equal it.

    Returns:
        Checkpoint: The decoded checkpoint.
    """
    try:
        with open(path, 'rb') as checkpoint_file:
            data = checkpoint_file.read()
    except OSError as e:
        raise CheckpointError("Cannot read checkpoint %s: %s" % (path, e))
    checkpoint = decode_checkpoint(data, path)
    if expected_model_config is not None and expected_model_config != checkpoint.model_config:
        raise CheckpointError("Checkpoint %s was trained with %s, but the config asks for %s." % (
            path, checkpoint.model_config, expected_model_config))
    return checkpoint
