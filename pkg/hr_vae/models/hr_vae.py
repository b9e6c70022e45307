# -*- coding: utf-8 -*-
"""
The holistically regularised VAE: a two-layer LSTM encoder with a Gaussian
posterior over [h_t; c_t] at every timestep, a two-layer LSTM decoder
conditioned on z in the standard or inputless setting, and the loss that
averages the per-timestep KL terms.
"""
import dataclasses
import logging
import math

import numpy as np

from ..exceptions import ContractError
from . import layers
from . import tensor as T
from .vocab import EOS, PAD, SOS, MAX_SENTENCE_LENGTH, Batch

_logger = logging.getLogger(__name__)

DECODER_SETTINGS = [
    ('standard', 'Standard: previous ground-truth word and z'),
    ('inputless', 'Inputless: z only'),
]
VARIANTS = [
    ('hr', 'HR-VAE: KL at every encoder timestep, averaged'),
    ('last_state_baseline', 'VAE-LSTM-base: KL at the last encoder state only'),
]
POSTERIOR_SOURCES = [
    ('all_layers', '[h; c] of both encoder layers'),
    ('top_layer', '[h; c] of the top encoder layer'),
]
GENERATION_MODES = [
    ('greedy', 'z = mu and argmax tokens'),
    ('sample', 'z drawn from the posterior and tokens drawn from the softmax'),
]


def selection_values(selection):
    return [value for value, _label in selection]


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 512
    hidden_dim: int = 256
    num_layers: int = 2
    latent_dim: int = 32
    decoder_setting: str = 'standard'
    variant: str = 'hr'
    posterior_source: str = 'all_layers'

    def __post_init__(self):
        for name in ('vocab_size', 'embed_dim', 'hidden_dim', 'latent_dim'):
            if getattr(self, name) <= 0:
                raise ContractError("ModelConfig.%s must be positive, got %s." % (name, getattr(self, name)))
        if self.num_layers != 2:
            raise ContractError("ModelConfig.num_layers is fixed at 2, got %s." % self.num_layers)
        for name, selection in (('decoder_setting', DECODER_SETTINGS), ('variant', VARIANTS),
                                ('posterior_source', POSTERIOR_SOURCES)):
            if getattr(self, name) not in selection_values(selection):
                raise ContractError("ModelConfig.%s must be one of %s, got %r." % (
                    name, selection_values(selection), getattr(self, name)))

    @property
    def posterior_input_dim(self):
        layer_count = self.num_layers if self.posterior_source == 'all_layers' else 1
        return 2 * layer_count * self.hidden_dim

    @property
    def decoder_input_dim(self):
        if self.decoder_setting == 'standard':
            return self.embed_dim + self.latent_dim
        return self.latent_dim

    def to_dict(self):
        return dataclasses.asdict(self)


class GaussianPosterior:
    """N(mu, exp(log_var)) with mu and log_var of shape [batch × latent_dim]."""

    def __init__(self, mu, log_var):
        if mu.shape != log_var.shape:
            raise ContractError("GaussianPosterior: mu %s and log_var %s differ in shape." % (mu.shape, log_var.shape))
        self.mu = mu
        self.log_var = log_var

    @property
    def shape(self):
        return self.mu.shape


class EncoderTrace:
    """
    Posteriors produced by one encoder pass.

    Attributes:
        posteriors (list[GaussianPosterior]): One per timestep t < max length
            (a single entry for the last-state baseline).
        final (GaussianPosterior): Posterior at each row's last valid timestep.
        z (Tensor): Sample from `final`, [batch × latent_dim].
        lengths (list[int]): Row lengths.
        per_timestep (bool): Whether `posteriors` covers every timestep.
    """

    def __init__(self, posteriors, final, z, lengths, per_timestep):
        self.posteriors = posteriors
        self.final = final
        self.z = z
        self.lengths = list(lengths)
        self.per_timestep = per_timestep

    def timestep_mask(self):
        steps = len(self.posteriors)
        return np.arange(steps)[None, :] < np.asarray(self.lengths)[:, None]


@dataclasses.dataclass
class ElboBreakdown:
    """The negated ELBO and its parts. total_loss = reconstruction_nll + kl_weight * kl_mean."""
    reconstruction_nll: T.Tensor
    kl_per_timestep: list
    kl_mean: T.Tensor
    kl_weight: float
    total_loss: T.Tensor
    reconstruction_total: float
    token_count: int
    sentence_count: int


def kl_per_sample(posterior):
    """1/2 * sum_d (mu^2 + exp(log_var) - log_var - 1) per row, shape [batch]."""
    mu, log_var = posterior.mu, posterior.log_var
    terms = T.sub(T.sub(T.add(T.mul_elementwise(mu, mu), T.exp(log_var)), log_var), 1.0)
    return T.mul_elementwise(T.sum(terms, axis=1), 0.5)


def kl_diag_gaussian_vs_standard(posterior):
    """KL(N(mu, sigma^2) || N(0, I)) in closed form, averaged over the batch."""
    return T.mean(kl_per_sample(posterior))


def reparameterize(posterior, noise):
    """
    z = mu + exp(log_var / 2) * noise. The noise is a constant: gradients reach
    mu and log_var only.
    """
    noise = np.asarray(noise.data if isinstance(noise, T.Tensor) else noise, dtype=np.float64)
    if noise.shape != posterior.shape:
        raise ContractError("reparameterize: noise %s does not match posterior %s." % (noise.shape, posterior.shape))
    std = T.exp(T.mul_elementwise(posterior.log_var, 0.5))
    return T.add(posterior.mu, T.mul_elementwise(std, T.Tensor(noise)))


class HrVae:
    """
    Encoder, posterior heads and decoder of the HR-VAE. The same parameters
    serve the last-state baseline; the variants differ only in where the KL
    term attaches (see `baselines.encode_last_state`).
    """

    def __init__(self, config, rng):
        self.config = config
        bound = 1.0 / math.sqrt(config.hidden_dim)
        hidden = config.hidden_dim
        self.embedding = layers.EmbeddingTable(config.vocab_size, config.embed_dim, rng, name='embedding')
        self.encoder = layers.LstmStack(config.embed_dim, hidden, config.num_layers, rng, name='encoder')
        self.mu_head = layers.LinearLayer(config.posterior_input_dim, config.latent_dim, rng,
                                          name='posterior.mu', bound=bound)
        self.log_var_head = layers.LinearLayer(config.posterior_input_dim, config.latent_dim, rng,
                                               name='posterior.log_var', bound=bound)
        self.decoder_init = layers.LinearLayer(config.latent_dim, 2 * config.num_layers * hidden, rng,
                                               name='decoder.init', bound=bound)
        self.decoder = layers.LstmStack(config.decoder_input_dim, hidden, config.num_layers, rng, name='decoder')
        self.output = layers.LinearLayer(hidden, config.vocab_size, rng, name='decoder.output', bound=bound)

    def parameters(self):
        params = {}
        for part in (self.embedding, self.encoder, self.mu_head, self.log_var_head,
                     self.decoder_init, self.decoder, self.output):
            params.update(part.parameters())
        return params

    def zero_grad(self):
        for param in self.parameters().values():
            param.zero_grad()

    def load_parameters(self, arrays):
        """Replaces parameter values from a name -> array mapping with identical names and shapes."""
        params = self.parameters()
        if set(arrays) != set(params):
            missing = sorted(set(params) - set(arrays))
            extra = sorted(set(arrays) - set(params))
            raise ContractError("Parameter names differ: missing %s, unexpected %s." % (missing, extra))
        for name, param in params.items():
            array = np.asarray(arrays[name], dtype=np.float64)
            if array.shape != param.shape:
                raise ContractError("Parameter %s has shape %s, expected %s." % (name, array.shape, param.shape))
            param.data = array.copy()
            param.grad = None

    # --- Encoder ---

    def encoder_features(self, batch):
        """
        Runs the encoder over timesteps t < max(lengths).

        Returns:
            list[Tensor]: [h_t; c_t] per timestep, each [batch × posterior_input_dim].
        """
        if not isinstance(batch, Batch) or batch.size == 0:
            raise ContractError("encode: an empty batch cannot be encoded.")
        top_layer_only = self.config.posterior_source == 'top_layer'
        state = self.encoder.zero_state(batch.size)
        features = []
        for step in range(batch.max_length):
            state = self.encoder.step(self.embedding(batch.ids[:, step]), state)
            features.append(state.concat_hidden_cell(top_layer_only=top_layer_only))
        return features

    def posterior(self, features):
        return GaussianPosterior(self.mu_head(features), self.log_var_head(features))

    def encode(self, batch, noise=None):
        """
        Builds a posterior at every timestep and samples z from each row's
        posterior at its last valid timestep.

        Args:
            batch (Batch): Token ids and lengths.
            noise (np.ndarray | None): Standard-normal draws [batch ×
                latent_dim]; None means zero noise (z = mu).

        Returns:
            EncoderTrace: The trace.
        """
        posteriors = [self.posterior(features) for features in self.encoder_features(batch)]
        last = np.asarray(batch.lengths) - 1
        final = GaussianPosterior(
            T.gather_steps(T.stack([posterior.mu for posterior in posteriors], axis=1), last),
            T.gather_steps(T.stack([posterior.log_var for posterior in posteriors], axis=1), last),
        )
        z = reparameterize(final, self._noise(noise, final))
        return EncoderTrace(posteriors, final, z, batch.lengths, per_timestep=True)

    @staticmethod
    def _noise(noise, posterior):
        return np.zeros(posterior.shape) if noise is None else noise

    # --- Decoder ---

    def initial_decoder_state(self, z):
        """Maps z to (h0, c0) of every decoder layer through one linear layer."""
        hidden = self.config.hidden_dim
        init = self.decoder_init(z)
        states = []
        for layer in range(self.config.num_layers):
            offset = 2 * layer * hidden
            states.append((T.slice(init, 1, offset, offset + hidden),
                           T.slice(init, 1, offset + hidden, offset + 2 * hidden)))
        return layers.LstmState(states)

    def decoder_step(self, z, previous_ids, state):
        """
        One decoder timestep.

        Args:
            z (Tensor): [batch × latent_dim].
            previous_ids (np.ndarray): [batch] previous tokens (ignored when inputless).
            state (LstmState): Decoder state.

        Returns:
            tuple[Tensor, LstmState]: Logits [batch × vocab_size] and the new state.
        """
        setting = self.config.decoder_setting
        if setting == 'standard':
            step_input = T.concat(self.embedding(previous_ids), z, axis=1)
        elif setting == 'inputless':
            step_input = z
        else:
            raise ContractError("Unknown decoder setting %r." % (setting,))
        state = self.decoder.step(step_input, state)
        return self.output(state.top_hidden), state

    def decode(self, z, batch):
        """
        Teacher-forced decoding over timesteps t < max(lengths). The standard
        setting feeds SOS at the first step and the ground-truth token t-1
        afterwards; the inputless setting feeds z alone.

        Returns:
            Tensor: Logits [batch × max_length × vocab_size].
        """
        if z.shape != (batch.size, self.config.latent_dim):
            raise ContractError("decode: z has shape %s, expected [%s × %s]." % (
                z.shape, batch.size, self.config.latent_dim))
        state = self.initial_decoder_state(z)
        previous = np.full(batch.size, SOS, dtype=np.int64)
        logits = []
        for step in range(batch.max_length):
            step_logits, state = self.decoder_step(z, previous, state)
            logits.append(step_logits)
            previous = batch.ids[:, step]
        return T.stack(logits, axis=1)

    # --- Loss ---

    def elbo_loss(self, trace, logits, batch, kl_weight):
        """
        Negated ELBO: token cross-entropy summed per sentence and averaged over
        the batch, plus kl_weight times the KL term. With a per-timestep trace,
        each row's KL is the mean over its own valid timesteps; padded
        timesteps are left out of both sum and count.

        Returns:
            ElboBreakdown: Loss parts.
        """
        steps = batch.max_length
        if logits.shape != (batch.size, steps, self.config.vocab_size):
            raise ContractError("elbo_loss: logits %s do not match batch [%s × %s × %s]." % (
                logits.shape, batch.size, steps, self.config.vocab_size))
        targets = batch.ids[:, :steps].reshape(-1)
        if np.all(targets == PAD):
            raise ContractError("elbo_loss: the batch holds no tokens besides PAD.")
        flat = T.reshape(logits, (batch.size * steps, self.config.vocab_size))
        token_nll = T.softmax_cross_entropy(flat, targets, ignore_id=PAD, reduction='sum')
        reconstruction = T.mul_elementwise(token_nll, 1.0 / batch.size)

        if trace.per_timestep:
            kl_mean, kl_per_timestep = self._holistic_kl(trace)
        else:
            kl_rows = kl_per_sample(trace.final)
            kl_mean = T.mean(kl_rows)
            kl_per_timestep = [kl_mean.item()]

        total = T.add(reconstruction, T.mul_elementwise(kl_mean, float(kl_weight)))
        return ElboBreakdown(
            reconstruction_nll=reconstruction,
            kl_per_timestep=kl_per_timestep,
            kl_mean=kl_mean,
            kl_weight=float(kl_weight),
            total_loss=total,
            reconstruction_total=token_nll.item(),
            token_count=batch.token_count,
            sentence_count=batch.size,
        )

    @staticmethod
    def _holistic_kl(trace):
        mask = trace.timestep_mask()
        lengths = np.asarray(trace.lengths, dtype=np.float64)
        rows = len(trace.lengths)
        kl_mean = None
        kl_per_timestep = []
        for step, posterior in enumerate(trace.posteriors):
            kl_rows = kl_per_sample(posterior)
            valid = mask[:, step]
            kl_per_timestep.append(float(kl_rows.data[valid].mean()))
            weighted = T.sum(T.mul_elementwise(kl_rows, valid / lengths / rows))
            kl_mean = weighted if kl_mean is None else T.add(kl_mean, weighted)
        return kl_mean, kl_per_timestep

    # --- Generation ---

    def generate(self, z, mode='greedy', rng=None, max_length=MAX_SENTENCE_LENGTH):
        """
        Autoregressive decoding from latent codes. The standard setting feeds
        back the previously emitted token; the inputless setting feeds z only.

        Args:
            z (Tensor): [batch × latent_dim].
            mode (str): 'greedy' (argmax) or 'sample' (draw from the softmax).
            rng (np.random.Generator | None): Needed in sample mode.
            max_length (int): Stop after this many tokens when no EOS appears.

        Returns:
            list[list[int]]: Emitted ids per row, EOS excluded.
        """
        if mode not in selection_values(GENERATION_MODES):
            raise ContractError("generate: unknown mode %r." % (mode,))
        if mode == 'sample' and rng is None:
            raise ContractError("generate: sample mode needs a random generator.")
        rows = z.shape[0]
        outputs = [[] for _ in range(rows)]
        finished = np.zeros(rows, dtype=bool)
        with T.no_grad():
            state = self.initial_decoder_state(z)
            previous = np.full(rows, SOS, dtype=np.int64)
            for _ in range(max_length):
                logits, state = self.decoder_step(z, previous, state)
                scores = logits.data
                if mode == 'greedy':
                    emitted = scores.argmax(axis=1)
                else:
                    shifted = np.exp(scores - scores.max(axis=1, keepdims=True))
                    probabilities = shifted / shifted.sum(axis=1, keepdims=True)
                    emitted = np.array([rng.choice(scores.shape[1], p=row) for row in probabilities])
                for row, token in enumerate(emitted):
                    if finished[row]:
                        continue
                    if token == EOS:
                        finished[row] = True
                    else:
                        outputs[row].append(int(token))
                if finished.all():
                    break
                previous = emitted.astype(np.int64)
        return outputs

    def reconstruct(self, sentence_ids, mode='greedy', rng=None, max_length=MAX_SENTENCE_LENGTH):
        """
        Encodes one sentence and decodes it again. Greedy mode uses z = mu,
        so it is deterministic.

        Args:
            sentence_ids (list[int]): Encoded sentence, EOS included.

        Returns:
            list[int]: Reconstructed ids, EOS excluded.
        """
        if len(sentence_ids) == 0:
            raise ContractError("reconstruct: the input sentence is empty.")
        batch = Batch.from_sequences([list(sentence_ids)])
        with T.no_grad():
            noise = None
            if mode == 'sample':
                if rng is None:
                    raise ContractError("reconstruct: sample mode needs a random generator.")
                noise = rng.standard_normal((1, self.config.latent_dim))
            trace = self.encode(batch, noise=noise)
        return self.generate(trace.z, mode=mode, rng=rng, max_length=max_length)[0]

    def sample_from_prior(self, count, rng, mode='greedy', max_length=MAX_SENTENCE_LENGTH):
        """Decodes `count` sentences from z ~ N(0, I)."""
        if count <= 0:
            raise ContractError("sample_from_prior: count must be positive, got %s." % count)
        z = T.Tensor(rng.standard_normal((count, self.config.latent_dim)))
        return self.generate(z, mode=mode, rng=rng, max_length=max_length)
