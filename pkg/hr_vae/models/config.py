# -*- coding: utf-8 -*-
"""
Experiment configuration: one flat `key = value` file, every field with a
documented default, unknown keys rejected.
"""
import dataclasses
import logging
import re

from ..exceptions import ConfigError, ContractError
from .baselines import ANNEAL_KINDS, AnnealSchedule
from .hr_vae import DECODER_SETTINGS, POSTERIOR_SOURCES, VARIANTS, ModelConfig, selection_values
from .vocab import MAX_BATCH_SIZE

_logger = logging.getLogger(__name__)

# `#` starts a comment at the beginning of a line or after whitespace.
COMMENT_PATTERN = re.compile(r'(^|\s)#.*$')


def _field(default, help, selection=None):
    return dataclasses.field(default=default, metadata={'help': help, 'selection': selection})


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    # Model
    embed_dim: int = _field(512, "Word embedding dimensionality.")
    hidden_dim: int = _field(256, "Hidden size of every encoder and decoder LSTM layer.")
    num_layers: int = _field(2, "LSTM layers in encoder and decoder (only 2 is supported).")
    latent_dim: int = _field(32, "Dimensionality of z.")
    decoder_setting: str = _field('standard', "Decoder input at each step.", DECODER_SETTINGS)
    variant: str = _field('hr', "Where the KL term attaches.", VARIANTS)
    posterior_source: str = _field('all_layers', "Encoder states feeding the posterior heads.", POSTERIOR_SOURCES)
    # KL annealing (last_state_baseline only; the hr variant always uses weight 1)
    anneal: str = _field('sigmoid', "KL weight schedule of the baseline.", ANNEAL_KINDS)
    anneal_midpoint: int = _field(2000, "Step at which the sigmoid schedule reaches 0.5.")
    anneal_steepness: float = _field(0.005, "Slope of the sigmoid schedule.")
    anneal_constant: float = _field(1.0, "KL weight of the constant schedule, in [0, 1].")
    # Optimizer
    lr: float = _field(1e-4, "Adam learning rate.")
    beta1: float = _field(0.9, "Adam first-moment decay.")
    beta2: float = _field(0.999, "Adam second-moment decay.")
    eps: float = _field(1e-8, "Adam denominator epsilon.")
    grad_clip: float = _field(5.0, "Global gradient-norm clip; 0 disables clipping.")
    # Data
    batch_size: int = _field(32, "Sentences per batch, at most 128.")
    min_freq: int = _field(1, "Minimum training-split count for a word to enter the vocabulary.")
    max_length: int = _field(60, "Tokens kept per sentence, EOS included.")
    train_file: str = _field('', "Training split, one sentence per line.")
    dev_file: str = _field('', "Development split; empty disables dev evaluation.")
    test_file: str = _field('', "Test split used by the eval command when no file is given.")
    embeddings_file: str = _field('', "Optional `token v1 ... vD` vector file; empty keeps random init.")
    output_dir: str = _field('runs/default', "Directory for history, checkpoints and the resolved config.")
    # Run
    seed: int = _field(0, "Seed of initialisation, data order and noise draws.")
    epochs: int = _field(1, "Passes over the training split.")
    max_steps: int = _field(8000, "Step budget across epochs; 0 means no cap.")
    checkpoint_every: int = _field(500, "Write a checkpoint every this many steps.")
    eval_every: int = _field(0, "Evaluate on the dev split every this many steps; 0 only at the end.")
    eval_samples: int = _field(0, "Average evaluation NLL over this many z draws; 0 uses z = mu.")
    eval_workers: int = _field(1, "Threads sharding evaluation batches.")
    compare_against: str = _field('last_state_baseline', "Variant trained next to hr by the compare command.",
                                  VARIANTS)

    def __post_init__(self):
        for field in dataclasses.fields(self):
            selection = field.metadata.get('selection')
            if selection and getattr(self, field.name) not in selection_values(selection):
                raise ConfigError("Config field '%s' must be one of %s, got %r." % (
                    field.name, selection_values(selection), getattr(self, field.name)))
        checks = [
            ('embed_dim', self.embed_dim > 0, "must be positive"),
            ('hidden_dim', self.hidden_dim > 0, "must be positive"),
            ('num_layers', self.num_layers == 2, "must be 2"),
            ('latent_dim', self.latent_dim > 0, "must be positive"),
            ('anneal_midpoint', self.anneal_midpoint >= 0, "must be non-negative"),
            ('anneal_steepness', self.anneal_steepness >= 0, "must be non-negative"),
            ('anneal_constant', 0.0 <= self.anneal_constant <= 1.0, "must lie in [0, 1]"),
            ('lr', self.lr > 0, "must be positive"),
            ('beta1', 0.0 <= self.beta1 < 1.0, "must lie in [0, 1)"),
            ('beta2', 0.0 <= self.beta2 < 1.0, "must lie in [0, 1)"),
            ('eps', self.eps > 0, "must be positive"),
            ('grad_clip', self.grad_clip >= 0, "must be non-negative"),
            ('batch_size', 1 <= self.batch_size <= MAX_BATCH_SIZE, "must lie in [1, %s]" % MAX_BATCH_SIZE),
            ('min_freq', self.min_freq >= 1, "must be at least 1"),
            ('max_length', self.max_length >= 2, "must be at least 2"),
            ('epochs', self.epochs >= 0, "must be non-negative"),
            ('max_steps', self.max_steps >= 0, "must be non-negative"),
            ('checkpoint_every', self.checkpoint_every >= 1, "must be at least 1"),
            ('eval_every', self.eval_every >= 0, "must be non-negative"),
            ('eval_samples', self.eval_samples >= 0, "must be non-negative"),
            ('eval_workers', self.eval_workers >= 1, "must be at least 1"),
        ]
        for name, valid, requirement in checks:
            if not valid:
                raise ConfigError("Config field '%s' %s, got %r." % (name, requirement, getattr(self, name)))

    # --- Views used by the rest of the package ---

    def model_config(self, vocab_size, variant=None):
        try:
            return ModelConfig(
                vocab_size=vocab_size,
                embed_dim=self.embed_dim,
                hidden_dim=self.hidden_dim,
                num_layers=self.num_layers,
                latent_dim=self.latent_dim,
                decoder_setting=self.decoder_setting,
                variant=variant or self.variant,
                posterior_source=self.posterior_source,
            )
        except ContractError as e:
            raise ConfigError(str(e))

    def anneal_schedule(self):
        return AnnealSchedule(
            kind=self.anneal,
            midpoint_step=self.anneal_midpoint,
            steepness=self.anneal_steepness,
            constant_value=self.anneal_constant,
        )

    def anneal_overridden(self):
        """True when any anneal_* field differs from its default."""
        return any(getattr(self, field.name) != field.default for field in dataclasses.fields(self)
                   if field.name.startswith('anneal'))

    def adam_hyperparameters(self):
        return {'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps}

    def replace(self, **values):
        return dataclasses.replace(self, **values)

    # --- Text format ---

    @classmethod
    def field_names(cls):
        return [field.name for field in dataclasses.fields(cls)]

    @classmethod
    def parse_assignments(cls, assignments, source):
        """
        Converts (key, raw value) pairs into typed field values.

        Args:
            assignments (list[tuple[str, str]]): Keys and raw strings.
            source (str): Where they came from, for messages.

        Returns:
            dict: Field name -> typed value.
        """
        fields = {field.name: field for field in dataclasses.fields(cls)}
        values = {}
        for key, raw in assignments:
            if key not in fields:
                raise ConfigError("Unknown config key '%s' in %s." % (key, source))
            cast = fields[key].type
            try:
                values[key] = cast(raw) if cast is not str else raw
            except ValueError:
                raise ConfigError("Config field '%s' in %s expects %s, got %r." % (
                    key, source, cast.__name__, raw))
        return values

    @staticmethod
    def split_assignment(text, source):
        if '=' not in text:
            raise ConfigError("Expected `key = value` in %s, got %r." % (source, text))
        key, raw = text.split('=', 1)
        return key.strip(), raw.strip()

    @classmethod
    def from_file(cls, path, overrides=()):
        """
        Reads a config file, then applies `key=value` overrides.

        Args:
            path (str | None): Config file; None starts from the defaults.
            overrides (iterable[str]): `key=value` strings.

        Returns:
            ExperimentConfig: Validated config.
        """
        assignments = []
        if path:
            try:
                with open(path, encoding='utf-8') as config_file:
                    lines = config_file.read().splitlines()
            except OSError as e:
                raise ConfigError("Cannot read config file %s: %s" % (path, e))
            for line_number, line in enumerate(lines, start=1):
                text = COMMENT_PATTERN.sub('', line).strip()
                if text:
                    assignments.append(cls.split_assignment(text, "%s line %s" % (path, line_number)))
        values = cls.parse_assignments(assignments, path or 'defaults')
        values.update(cls.parse_assignments(
            [cls.split_assignment(override, '--set') for override in overrides], '--set'))
        _logger.debug("Config values from %s: %s", path, values)
        return cls(**values)

    def to_text(self):
        lines = []
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            help_text = field.metadata['help']
            if field.metadata.get('selection'):
                help_text += " One of: %s." % ', '.join(selection_values(field.metadata['selection']))
            lines.append("# %s" % help_text)
            lines.append("%s = %s" % (field.name, repr(value) if isinstance(value, float) else value))
        return '\n'.join(lines) + '\n'

    def write(self, path):
        with open(path, 'w', encoding='utf-8') as config_file:
            config_file.write(self.to_text())
