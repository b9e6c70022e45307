# -*- coding: utf-8 -*-
"""
Command-line entry point. Machine-readable results go to stdout (JSON for
eval and stats, TSV for reconstruct); logs and error messages go to stderr.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .exceptions import CheckpointError, ConfigError, HrVaeError
from .models import training
from .models.checkpoint import load_checkpoint
from .models.config import ExperimentConfig
from .models.hr_vae import GENERATION_MODES, selection_values
from .models.vocab import MAX_SENTENCE_LENGTH, Vocab, build_vocab, corpus_statistics, read_corpus, tokenize

_logger = logging.getLogger(__name__)

RESOLVED_CONFIG = 'resolved.cfg'
VOCAB_FILE = 'vocab.tsv'
COMPARE_FILE = 'compare.csv'


def _read_split(path, field, max_length):
    if not path:
        raise ConfigError("Config field '%s' is empty; a file is required." % field)
    try:
        return read_corpus(path, max_length=max_length)
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError("Config field '%s': cannot read %s: %s" % (field, path, e))


def _load_config(args):
    overrides = list(args.set or [])
    if getattr(args, 'out', None):
        overrides.append('output_dir=%s' % args.out)
    return ExperimentConfig.from_file(args.config, overrides)


def _prepare_output(config):
    try:
        os.makedirs(config.output_dir, exist_ok=True)
    except OSError as e:
        raise ConfigError("Config field 'output_dir': cannot create %s: %s" % (config.output_dir, e))
    config.write(os.path.join(config.output_dir, RESOLVED_CONFIG))


def cmd_train(args):
    config = _load_config(args)
    sentences = _read_split(config.train_file, 'train_file', config.max_length)
    dev = _read_split(config.dev_file, 'dev_file', config.max_length) if config.dev_file else None
    _prepare_output(config)
    training.train(config, sentences, dev_sentences=dev, out_dir=config.output_dir)
    return 0


def cmd_compare(args):
    config = _load_config(args)
    sentences = _read_split(config.train_file, 'train_file', config.max_length)
    dev = _read_split(config.dev_file, 'dev_file', config.max_length) if config.dev_file else None
    _prepare_output(config)
    vocab = build_vocab(sentences, min_freq=config.min_freq)
    vocab.export(os.path.join(config.output_dir, VOCAB_FILE))
    runs = {}
    # Sequential on purpose: one model in memory at a time.
    for label, variant in (('hr', 'hr'), ('baseline', config.compare_against)):
        _logger.info("Compare: training %s (%s).", label, variant)
        runs[label] = training.train(config, sentences, dev_sentences=dev, vocab=vocab, variant=variant,
                                     out_dir=os.path.join(config.output_dir, label))
    merged = training.merge_histories(runs['hr'].history, runs['baseline'].history)
    training.write_compare_csv(os.path.join(config.output_dir, COMPARE_FILE), merged)
    return 0


def _checkpoint_for(args):
    """Loads the checkpoint; with --config or --set its model fields must match."""
    checkpoint = load_checkpoint(args.checkpoint)
    if args.config or args.set:
        config = ExperimentConfig.from_file(args.config, args.set or [])
        expected = config.model_config(len(checkpoint.vocab), variant=checkpoint.model_config.variant)
        if expected != checkpoint.model_config:
            raise CheckpointError("Checkpoint %s was trained with %s, but the config asks for %s." % (
                args.checkpoint, checkpoint.model_config, expected))
    return checkpoint


def cmd_eval(args):
    checkpoint = _checkpoint_for(args)
    model = checkpoint.restore_model()
    test_file = args.test_file
    if not test_file and checkpoint.experiment_config is not None:
        test_file = checkpoint.experiment_config.test_file
    max_length = (checkpoint.experiment_config.max_length if checkpoint.experiment_config is not None
                  else MAX_SENTENCE_LENGTH)
    sentences = _read_split(test_file, 'test_file', max_length)
    if args.vocab:
        try:
            vocab = Vocab.from_file(args.vocab)
        except (OSError, ValueError) as e:
            raise CheckpointError("Cannot read vocabulary %s: %s" % (args.vocab, e))
        if vocab != checkpoint.vocab:
            raise CheckpointError("Vocabulary %s differs from the one stored in %s." % (args.vocab, args.checkpoint))
    rng = np.random.default_rng(args.seed) if args.samples else None
    report = training.evaluate(model, checkpoint.vocab, sentences, batch_size=args.batch_size,
                               samples=args.samples, rng=rng, workers=args.workers)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_reconstruct(args):
    checkpoint = _checkpoint_for(args)
    model = checkpoint.restore_model()
    vocab = checkpoint.vocab
    rng = np.random.default_rng(args.seed) if args.mode == 'sample' else None
    try:
        with open(args.input_file, encoding='utf-8') as input_file:
            lines = input_file.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError("Cannot read input file %s: %s" % (args.input_file, e))
    for line in lines:
        tokens = tokenize(line)
        if not tokens:
            continue
        if len(tokens) > args.max_length:
            tokens = tokens[:args.max_length - 1] + tokens[-1:]
        ids = vocab.encode(tokens)
        output = model.reconstruct(ids, mode=args.mode, rng=rng, max_length=args.max_length)
        print("%s\t%s" % (line.strip(), vocab.detokenize(output)))
    return 0


def cmd_sample(args):
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.restore_model()
    rng = np.random.default_rng(args.seed)
    for ids in model.sample_from_prior(args.count, rng, mode=args.mode, max_length=args.max_length):
        print(checkpoint.vocab.detokenize(ids))
    return 0


def cmd_stats(args):
    vocab = None
    for index, path in enumerate(args.files):
        sentences = _read_split(path, 'files', args.max_length)
        if index == 0:
            vocab = build_vocab(sentences, min_freq=args.min_freq)
            if args.vocab_out:
                vocab.export(args.vocab_out)
        statistics = corpus_statistics(sentences, vocab)
        statistics['file'] = path
        print(json.dumps(statistics, sort_keys=True))
    return 0


def _add_config_arguments(parser):
    parser.add_argument('--config', help="Config file of `key = value` lines.")
    parser.add_argument('--set', action='append', metavar='KEY=VALUE', help="Override one config field.")


def build_parser():
    parser = argparse.ArgumentParser(prog='hr_vae', description="HR-VAE text modelling experiments.")
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command', required=True)

    train_parser = commands.add_parser('train', help="Train one model.")
    _add_config_arguments(train_parser)
    train_parser.add_argument('--out', help="Output directory (overrides output_dir).")
    train_parser.set_defaults(handler=cmd_train)

    compare_parser = commands.add_parser('compare', help="Train hr and a baseline under one seed.")
    _add_config_arguments(compare_parser)
    compare_parser.add_argument('--out', help="Output directory (overrides output_dir).")
    compare_parser.set_defaults(handler=cmd_compare)

    eval_parser = commands.add_parser('eval', help="Print test metrics as JSON.")
    eval_parser.add_argument('checkpoint')
    eval_parser.add_argument('test_file', nargs='?', help="Defaults to the checkpoint's test_file.")
    _add_config_arguments(eval_parser)
    eval_parser.add_argument('--vocab', help="Vocabulary file that must match the checkpoint's.")
    eval_parser.add_argument('--samples', type=int, default=0, help="z draws per batch; 0 uses z = mu.")
    eval_parser.add_argument('--seed', type=int, default=0)
    eval_parser.add_argument('--batch-size', type=int, default=32)
    eval_parser.add_argument('--workers', type=int, default=1)
    eval_parser.set_defaults(handler=cmd_eval)

    reconstruct_parser = commands.add_parser('reconstruct', help="Reconstruct every line of a file.")
    reconstruct_parser.add_argument('checkpoint')
    reconstruct_parser.add_argument('input_file')
    _add_config_arguments(reconstruct_parser)
    reconstruct_parser.add_argument('--mode', default='greedy', choices=selection_values(GENERATION_MODES))
    reconstruct_parser.add_argument('--seed', type=int, default=0)
    reconstruct_parser.add_argument('--max-length', type=int, default=MAX_SENTENCE_LENGTH)
    reconstruct_parser.set_defaults(handler=cmd_reconstruct)

    sample_parser = commands.add_parser('sample', help="Decode sentences from the prior.")
    sample_parser.add_argument('checkpoint')
    sample_parser.add_argument('--count', type=int, default=10)
    sample_parser.add_argument('--seed', type=int, default=0)
    sample_parser.add_argument('--mode', default='greedy', choices=selection_values(GENERATION_MODES))
    sample_parser.add_argument('--max-length', type=int, default=MAX_SENTENCE_LENGTH)
    sample_parser.set_defaults(handler=cmd_sample)

    stats_parser = commands.add_parser('stats', help="Corpus statistics as JSON, one object per file.")
    stats_parser.add_argument('files', nargs='+')
    stats_parser.add_argument('--min-freq', type=int, default=1)
    stats_parser.add_argument('--max-length', type=int, default=MAX_SENTENCE_LENGTH)
    stats_parser.add_argument('--vocab-out', help="Export the vocabulary of the first file.")
    stats_parser.set_defaults(handler=cmd_stats)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        return args.handler(args)
    except HrVaeError as e:
        _logger.error("%s failed: %s", args.command, e.message, exc_info=True)
        print("error: %s" % e.message, file=sys.stderr)
        return e.exit_code
