# -*- coding: utf-8 -*-
"""
Parameterised layers shared by the encoder, the decoder and the baseline:
linear maps, the embedding table and the stacked LSTM.
"""
import logging
import math

import numpy as np

from ..exceptions import ContractError
from . import tensor as T

_logger = logging.getLogger(__name__)

EMBEDDING_INIT_BOUND = 0.1
FORGET_GATE_BIAS = 1.0


def uniform_init(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


def parameter_count(params):
    """Total number of scalars in a dict of parameter tensors."""
    return int(np.sum([param.size for param in params.values()]))


class LinearLayer:
    """
    y = x W^T + b, with W of shape [out_dim × in_dim] and b of shape [out_dim].
    The bias broadcasts over the leading batch dimension of x.
    """

    def __init__(self, in_dim, out_dim, rng, name, bound=None):
        if in_dim <= 0 or out_dim <= 0:
            raise ContractError("Linear layer %s needs positive dims, got %s -> %s." % (name, in_dim, out_dim))
        bound = bound if bound is not None else 1.0 / math.sqrt(in_dim)
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = T.Tensor(uniform_init(rng, (out_dim, in_dim), bound), requires_grad=True, name=name + '.weight')
        self.bias = T.Tensor(np.zeros(out_dim), requires_grad=True, name=name + '.bias')

    def __call__(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ContractError("Linear layer %s expects [batch × %s], got %s." % (self.name, self.in_dim, x.shape))
        return T.add(T.matmul(x, T.transpose(self.weight)), self.bias)

    def parameters(self):
        return {self.weight.name: self.weight, self.bias.name: self.bias}


class EmbeddingTable:
    """Trainable [vocab_size × embed_dim] lookup table."""

    def __init__(self, vocab_size, embed_dim, rng, name='embedding'):
        if vocab_size <= 0 or embed_dim <= 0:
            raise ContractError("Embedding needs positive dims, got %s × %s." % (vocab_size, embed_dim))
        self.name = name
        self.table = T.Tensor(uniform_init(rng, (vocab_size, embed_dim), EMBEDDING_INIT_BOUND),
                              requires_grad=True, name=name + '.table')

    @property
    def vocab_size(self):
        return self.table.shape[0]

    @property
    def embed_dim(self):
        return self.table.shape[1]

    def __call__(self, ids):
        return embed(ids, self)

    def parameters(self):
        return {self.table.name: self.table}


def embed(ids, table):
    """
    Looks up rows of the table.

    Args:
        ids (array-like of int): Token ids of any shape, e.g. [batch × T].
        table (EmbeddingTable): The table.

    Returns:
        Tensor: Shape ids.shape + (embed_dim,).
    """
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.vocab_size):
        raise ContractError("embed: ids must lie in [0, %s), got max %s." % (table.vocab_size, ids.max()))
    return T.take(table.table, ids)


class LstmCell:
    """
    One LSTM layer. The four gate pre-activations come from a single linear
    map of [input; h] with rows ordered input, forget, candidate, output.
    """

    def __init__(self, in_dim, hidden_dim, rng, name):
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.gates = LinearLayer(in_dim + hidden_dim, 4 * hidden_dim, rng, name, bound=1.0 / math.sqrt(hidden_dim))
        bias = self.gates.bias.data.copy()
        bias[hidden_dim:2 * hidden_dim] = FORGET_GATE_BIAS
        self.gates.bias.data = bias

    def parameters(self):
        return self.gates.parameters()


def lstm_cell_step(x, state, cell):
    """
    Standard LSTM recurrence for one timestep.

    Args:
        x (Tensor): [batch × in_dim] input.
        state (tuple[Tensor, Tensor]): (h, c), each [batch × hidden_dim].
        cell (LstmCell): Parameters.

    Returns:
        tuple[Tensor, Tensor]: (h', c').
    """
    h, c = state
    hidden = cell.hidden_dim
    if x.ndim != 2 or x.shape[1] != cell.in_dim:
        raise ContractError("lstm_cell_step: input %s does not match in_dim %s." % (x.shape, cell.in_dim))
    if h.shape != (x.shape[0], hidden) or c.shape != h.shape:
        raise ContractError("lstm_cell_step: state shapes %s / %s do not match [%s × %s]." % (
            h.shape, c.shape, x.shape[0], hidden))
    pre = cell.gates(T.concat(x, h, axis=1))
    input_gate = T.sigmoid(T.slice(pre, 1, 0, hidden))
    forget_gate = T.sigmoid(T.slice(pre, 1, hidden, 2 * hidden))
    candidate = T.tanh(T.slice(pre, 1, 2 * hidden, 3 * hidden))
    output_gate = T.sigmoid(T.slice(pre, 1, 3 * hidden, 4 * hidden))
    new_c = T.add(T.mul_elementwise(forget_gate, c), T.mul_elementwise(input_gate, candidate))
    new_h = T.mul_elementwise(output_gate, T.tanh(new_c))
    return new_h, new_c


class LstmState:
    """Per-layer (h, c) pairs of a stacked LSTM, bottom layer first."""

    def __init__(self, layers):
        self.layers = list(layers)

    def __len__(self):
        return len(self.layers)

    @property
    def top_hidden(self):
        return self.layers[-1][0]

    def concat_hidden_cell(self, top_layer_only=False):
        """[h; c] with h and c each the concatenation over layers (or the top layer only)."""
        layers = self.layers[-1:] if top_layer_only else self.layers
        return T.concat_all([h for h, _ in layers] + [c for _, c in layers], axis=1)


class LstmStack:
    """A stack of LSTM cells; layer k reads layer k-1's new h."""

    def __init__(self, in_dim, hidden_dim, num_layers, rng, name):
        if num_layers <= 0:
            raise ContractError("LSTM stack %s needs at least one layer." % name)
        self.hidden_dim = hidden_dim
        self.cells = [
            LstmCell(in_dim if layer == 0 else hidden_dim, hidden_dim, rng, '%s.layer%d' % (name, layer))
            for layer in range(num_layers)
        ]

    @property
    def num_layers(self):
        return len(self.cells)

    def zero_state(self, batch_size):
        zeros = np.zeros((batch_size, self.hidden_dim))
        return LstmState([(T.Tensor(zeros), T.Tensor(zeros)) for _ in self.cells])

    def step(self, x, state):
        return lstm_stack_step(x, state, self.cells)

    def parameters(self):
        params = {}
        for cell in self.cells:
            params.update(cell.parameters())
        return params


def lstm_stack_step(x, state, cells):
    """
    Runs one timestep through every layer.

    Args:
        x (Tensor): [batch × in_dim] input of the bottom layer.
        state (LstmState): One (h, c) per layer.
        cells (list[LstmCell]): Parameters, bottom layer first.

    Returns:
        LstmState: The updated state of every layer.
    """
    if len(state) != len(cells):
        raise ContractError("lstm_stack_step: %s states given for %s layers." % (len(state), len(cells)))
    new_layers = []
    layer_input = x
    for cell, layer_state in zip(cells, state.layers):
        h, c = lstm_cell_step(layer_input, layer_state, cell)
        new_layers.append((h, c))
        layer_input = h
    return LstmState(new_layers)


def load_embeddings(path, vocab, embedding):
    """
    Overwrites rows of an embedding table from a plain-text vector file with
    lines of the form `token v1 v2 ... vD`.

    Args:
        path (str): UTF-8 text file.
        vocab (Vocab): Maps tokens to rows.
        embedding (EmbeddingTable): Table to update in place.

    Returns:
        int: Number of rows loaded.
    """
    table = embedding.table.data.copy()
    loaded = 0
    skipped = 0
    with open(path, encoding='utf-8') as vector_file:
        for line_number, line in enumerate(vector_file, start=1):
            parts = line.rstrip('\n').split(' ')
            if not parts or not parts[0]:
                continue
            token, values = parts[0], [value for value in parts[1:] if value]
            if len(values) != embedding.embed_dim:
                raise ContractError("Embedding file %s line %s has %s values, expected %s." % (
                    path, line_number, len(values), embedding.embed_dim))
            if token not in vocab.token_to_id:
                skipped += 1
                continue
            try:
                table[vocab.token_to_id[token]] = [float(value) for value in values]
            except ValueError:
                raise ContractError("Embedding file %s line %s holds a non-numeric value." % (path, line_number))
            loaded += 1
    if not np.all(np.isfinite(table)):
        raise ContractError("Embedding file %s holds non-finite values." % path)
    embedding.table.data = table
    _logger.info("Loaded %s embedding rows from %s (%s tokens not in vocab).", loaded, path, skipped)
    return loaded
