# -*- coding: utf-8 -*-
"""
The training and evaluation loops: Adam updates over shuffled batches,
per-step loss history, periodic checkpoints and dev-split monitoring.
"""
import concurrent.futures
import csv
import dataclasses
import logging
import math
import os

import numpy as np

from ..exceptions import ConfigError, ContractError, NumericalError
from . import layers
from . import tensor as T
from .baselines import anneal_weight, encode_last_state
from .checkpoint import Checkpoint, save_checkpoint
from .hr_vae import HrVae
from .optimizer import AdamState, adam_step, clip_grad_norm
from .vocab import EOS, MAX_SENTENCE_LENGTH, build_vocab, make_batches

_logger = logging.getLogger(__name__)

HISTORY_FILE = 'history.csv'
DEV_HISTORY_FILE = 'dev_history.csv'
FINAL_CHECKPOINT = 'final.ckpt'
HISTORY_COLUMNS = ['step', 'recon_loss', 'kl_loss', 'kl_weight']
DEV_HISTORY_COLUMNS = ['step', 'nll', 'ppl', 'kl']
COMPARE_COLUMNS = ['step', 'recon_hr', 'kl_hr', 'recon_base', 'kl_base', 'kl_weight_base']


@dataclasses.dataclass(frozen=True)
class HistoryRow:
    step: int
    recon_loss: float
    kl_loss: float
    kl_weight: float


@dataclasses.dataclass(frozen=True)
class EvalReport:
    """
    Test-set metrics. nll is the mean over sentences of the token NLL summed
    per sentence; ppl = exp(total_nll / token_count).
    """
    nll: float
    ppl: float
    kl: float
    token_count: int
    sentence_count: int
    total_nll: float

    def to_dict(self):
        return {
            'nll': self.nll,
            'ppl': self.ppl,
            'kl': self.kl,
            'tokens': self.token_count,
            'sentences': self.sentence_count,
        }


@dataclasses.dataclass
class TrainingRun:
    model: HrVae
    vocab: object
    adam: AdamState
    rng: np.random.Generator
    global_step: int = 0
    history: list = dataclasses.field(default_factory=list)
    dev_reports: list = dataclasses.field(default_factory=list)


class CsvLog:
    """A CSV file written row by row and flushed after each row."""

    def __init__(self, path, columns):
        self.path = path
        self.columns = columns
        self._file = open(path, 'w', encoding='utf-8', newline='')
        self._writer = csv.writer(self._file, lineterminator='\n')
        self._writer.writerow(columns)
        self._file.flush()

    def write(self, values):
        self._writer.writerow([_format_value(value) for value in values])
        self._file.flush()

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class _NullLog:

    def write(self, values):
        pass

    def close(self):
        pass


def _format_value(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return '%.9g' % value


def perplexity(total_nll, tokens):
    """exp(total NLL / token count), the single PPL formula of the package."""
    if tokens <= 0:
        raise ContractError("perplexity: token count must be positive, got %s." % tokens)
    return math.exp(total_nll / tokens)


def kl_weight_at(model_config, schedule, step):
    """The hr variant trains at weight 1; the last-state baseline follows the schedule."""
    if model_config.variant == 'hr':
        return 1.0
    return anneal_weight(schedule, step)


def forward_loss(model, batch, kl_weight, noise=None):
    """
    Encodes with the model's variant, decodes under teacher forcing and
    returns the ElboBreakdown.
    """
    if model.config.variant == 'last_state_baseline':
        trace = encode_last_state(model, batch, noise=noise)
    else:
        trace = model.encode(batch, noise=noise)
    logits = model.decode(trace.z, batch)
    return model.elbo_loss(trace, logits, batch, kl_weight)


def train(config, sentences, epochs=None, seed=None, dev_sentences=None, out_dir=None, vocab=None,
          variant=None):
    """
    Trains one model from scratch.

    Args:
        config (ExperimentConfig): Hyperparameters and budgets.
        sentences (list[list[str]]): Tokenized training split.
        epochs (int | None): Overrides config.epochs.
        seed (int | None): Overrides config.seed.
        dev_sentences (list[list[str]] | None): Dev split for monitoring.
        out_dir (str | None): Where history, checkpoints and the vocabulary go;
            None keeps everything in memory.
        vocab (Vocab | None): Built from `sentences` when omitted.
        variant (str | None): Overrides config.variant.

    Returns:
        TrainingRun: Final model, optimizer state and history.
    """
    if not sentences:
        raise ContractError("train: the training corpus is empty.")
    epochs = config.epochs if epochs is None else epochs
    seed = config.seed if seed is None else seed
    if epochs < 0:
        raise ContractError("train: epochs must be non-negative, got %s." % epochs)
    vocab = vocab if vocab is not None else build_vocab(sentences, min_freq=config.min_freq)
    model_config = config.model_config(len(vocab), variant=variant)
    schedule = config.anneal_schedule()
    if model_config.variant == 'hr' and config.anneal_overridden():
        _logger.warning("Anneal settings are ignored for the hr variant; it trains with KL weight 1.")

    rng = np.random.default_rng(seed)
    model = HrVae(model_config, rng)
    if config.embeddings_file:
        try:
            layers.load_embeddings(config.embeddings_file, vocab, model.embedding)
        except OSError as e:
            raise ConfigError("Config field 'embeddings_file': cannot read %s: %s" % (config.embeddings_file, e))
    params = model.parameters()
    adam = AdamState.for_parameters(params, **config.adam_hyperparameters())
    run = TrainingRun(model=model, vocab=vocab, adam=adam, rng=rng)
    _logger.info("Training %s (%s, %s parameters, vocab %s) on %s sentences, seed %s.",
                 model_config.variant, model_config.decoder_setting, layers.parameter_count(params),
                 len(vocab), len(sentences), seed)

    history_log = dev_log = _NullLog()
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        history_log = CsvLog(os.path.join(out_dir, HISTORY_FILE), HISTORY_COLUMNS)
        if dev_sentences:
            dev_log = CsvLog(os.path.join(out_dir, DEV_HISTORY_FILE), DEV_HISTORY_COLUMNS)
    try:
        for epoch in range(epochs):
            if _budget_spent(config, run.global_step):
                break
            batches = make_batches(sentences, vocab, config.batch_size, shuffle_seed=seed + epoch)
            for batch in batches:
                if _budget_spent(config, run.global_step):
                    break
                row = _train_step(config, run, schedule, batch, out_dir)
                run.history.append(row)
                history_log.write(dataclasses.astuple(row))
                if out_dir and run.global_step % config.checkpoint_every == 0:
                    _write_checkpoint(run, config, os.path.join(out_dir, 'checkpoint-%06d.ckpt' % run.global_step))
                if dev_sentences and config.eval_every and run.global_step % config.eval_every == 0:
                    _monitor(config, run, dev_sentences, dev_log)
            _logger.info("Epoch %s done at step %s.", epoch + 1, run.global_step)
        if dev_sentences and not (config.eval_every and run.history and run.global_step % config.eval_every == 0):
            _monitor(config, run, dev_sentences, dev_log)
    finally:
        history_log.close()
        dev_log.close()

    if out_dir:
        vocab.export(os.path.join(out_dir, 'vocab.tsv'))
        _write_checkpoint(run, config, os.path.join(out_dir, FINAL_CHECKPOINT))
    _logger.info("Training finished after %s steps.", run.global_step)
    return run


def _budget_spent(config, step):
    return bool(config.max_steps) and step >= config.max_steps


def _train_step(config, run, schedule, batch, out_dir):
    model, params = run.model, run.model.parameters()
    step = run.global_step
    kl_weight = kl_weight_at(model.config, schedule, step)
    noise = run.rng.standard_normal((batch.size, model.config.latent_dim))
    model.zero_grad()
    breakdown = forward_loss(model, batch, kl_weight, noise=noise)
    if not breakdown.total_loss.is_finite():
        _logger.error("Non-finite loss at step %s; the last written checkpoint in %s is kept.", step, out_dir)
        raise NumericalError("Training loss became non-finite at step %s." % step)
    T.backward(breakdown.total_loss)
    norm = clip_grad_norm(params, config.grad_clip)
    try:
        adam_step(params, run.adam)
    except NumericalError:
        _logger.error("Optimizer step %s aborted; the last written checkpoint in %s is kept.",
                      step, out_dir, exc_info=True)
        raise
    run.global_step += 1
    row = HistoryRow(step, breakdown.reconstruction_nll.item(), breakdown.kl_mean.item(), kl_weight)
    _logger.debug("step %s recon %.4f kl %.4f weight %.4f grad norm %.4f",
                  step, row.recon_loss, row.kl_loss, kl_weight, norm)
    return row


def _write_checkpoint(run, config, path):
    save_checkpoint(path, Checkpoint.capture(run.model, run.vocab, run.adam, run.rng, run.global_step, config))


def _monitor(config, run, dev_sentences, dev_log):
    rng = np.random.default_rng(config.seed) if config.eval_samples else None
    report = evaluate(run.model, run.vocab, dev_sentences, batch_size=config.batch_size,
                      samples=config.eval_samples, rng=rng, workers=config.eval_workers)
    run.dev_reports.append((run.global_step, report))
    dev_log.write((run.global_step, report.nll, report.ppl, report.kl))
    _logger.info("Dev at step %s: nll %.4f ppl %.4f kl %.4f", run.global_step, report.nll, report.ppl, report.kl)


def evaluate(model, vocab, sentences, batch_size=32, samples=0, rng=None, workers=1):
    """
    Teacher-forced test metrics under the model's decoder setting.

    Args:
        model (HrVae): Trained model.
        vocab (Vocab): The model's vocabulary.
        sentences (list[list[str]]): Tokenized test split.
        batch_size (int): Sentences per batch.
        samples (int): 0 evaluates at z = mu; k > 0 averages the NLL over k
            reparameterized draws.
        rng (np.random.Generator | None): Noise source, needed when samples > 0.
        workers (int): Threads sharing the batches; results do not depend on it.

    Returns:
        EvalReport: The metrics.
    """
    if not sentences:
        raise ContractError("evaluate: the test set is empty.")
    if samples < 0:
        raise ContractError("evaluate: samples must be non-negative, got %s." % samples)
    if samples and rng is None:
        raise ContractError("evaluate: sampled evaluation needs a random generator.")
    batches = make_batches(sentences, vocab, batch_size)
    latent_dim = model.config.latent_dim
    # Noise is drawn up front in batch order, so threading never changes it.
    jobs = [
        (batch, [rng.standard_normal((batch.size, latent_dim)) for _ in range(samples)])
        for batch in batches
    ]

    def score(job):
        batch, noises = job
        with T.no_grad():
            breakdown = forward_loss(model, batch, 1.0)
            total = breakdown.reconstruction_total
            if noises:
                total = sum(forward_loss(model, batch, 1.0, noise=noise).reconstruction_total
                            for noise in noises) / len(noises)
        return total, breakdown.kl_mean.item(), batch.token_count, batch.size

    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(score, jobs))
    else:
        results = [score(job) for job in jobs]

    total_nll = 0.0
    tokens = count = 0
    for batch_nll, _kl, batch_tokens, batch_sentences in results:
        total_nll += batch_nll
        tokens += batch_tokens
        count += batch_sentences
    kl = sum(result[1] for result in results) / len(results)
    report = EvalReport(
        nll=total_nll / count,
        ppl=perplexity(total_nll, tokens),
        kl=kl,
        token_count=tokens,
        sentence_count=count,
        total_nll=total_nll,
    )
    if not all(math.isfinite(value) for value in (report.nll, report.ppl, report.kl)):
        raise NumericalError("Evaluation produced non-finite metrics: %s." % (report.to_dict(),))
    _logger.info("Evaluated %s sentences (%s tokens): nll %.4f ppl %.4f kl %.4f",
                 count, tokens, report.nll, report.ppl, report.kl)
    return report


def token_accuracy(model, vocab, sentences, max_length=MAX_SENTENCE_LENGTH):
    """
    Greedy reconstruction accuracy: the share of target positions (EOS
    included) where the reconstruction, closed by EOS, holds the same token.
    """
    if not sentences:
        raise ContractError("token_accuracy: no sentences given.")
    correct = total = 0
    for sentence in sentences:
        target = vocab.encode(sentence)
        predicted = model.reconstruct(target, mode='greedy', max_length=max_length)
        predicted = predicted + [EOS] if len(predicted) < max_length else predicted
        correct += sum(1 for expected, actual in zip(target, predicted) if expected == actual)
        total += len(target)
    return correct / total


def merge_histories(hr_history, base_history):
    """
    Aligns two histories by step for the compare CSV. Missing steps on either
    side (different budgets) are left blank.
    """
    hr_rows = {row.step: row for row in hr_history}
    base_rows = {row.step: row for row in base_history}
    merged = []
    for step in sorted(set(hr_rows) | set(base_rows)):
        hr_row, base_row = hr_rows.get(step), base_rows.get(step)
        merged.append((
            step,
            hr_row.recon_loss if hr_row else None,
            hr_row.kl_loss if hr_row else None,
            base_row.recon_loss if base_row else None,
            base_row.kl_loss if base_row else None,
            base_row.kl_weight if base_row else None,
        ))
    return merged


def write_compare_csv(path, merged):
    with open(path, 'w', encoding='utf-8', newline='') as compare_file:
        writer = csv.writer(compare_file, lineterminator='\n')
        writer.writerow(COMPARE_COLUMNS)
        for row in merged:
            writer.writerow(['' if value is None else _format_value(value) for value in row])
    _logger.info("Comparison written: %s (%s rows).", path, len(merged))
