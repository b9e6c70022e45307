# -*- coding: utf-8 -*-
import contextlib
import csv
import io
import json
import os
import tempfile
import unittest

import hr_vae
from hr_vae import cli
from hr_vae.models import training
from hr_vae.models.checkpoint import load_checkpoint
from hr_vae.models.config import ExperimentConfig

TINY_SETTINGS = ['embed_dim=8', 'hidden_dim=8', 'latent_dim=4', 'batch_size=8', 'max_steps=3', 'seed=2']


def run_cli(*argv):
    """Runs the command line in-process and returns (exit code, stdout, stderr)."""
    stdout, stderr = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
        try:
            code = cli.main(['--log-level', 'ERROR'] + list(argv))
        except SystemExit as e:
            code = e.code
    return code, stdout.getvalue(), stderr.getvalue()


class TestCommandLine(unittest.TestCase):
    """The hr_vae command line, end to end on small corpora."""

    @classmethod
    def setUpClass(cls):
        cls.workspace = tempfile.TemporaryDirectory()
        cls.corpus = os.path.join(cls.workspace.name, 'train.txt')
        with open(hr_vae.toy_corpus_path(), encoding='utf-8') as toy, \
                open(cls.corpus, 'w', encoding='utf-8') as corpus:
            corpus.writelines(toy.readlines()[:32])
        cls.config_path = os.path.join(cls.workspace.name, 'exp.cfg')
        with open(cls.config_path, 'w', encoding='utf-8') as config_file:
            config_file.write("# tiny run\n%s\ntrain_file = %s\ntest_file = %s\n" % (
                '\n'.join(TINY_SETTINGS), cls.corpus, cls.corpus))
        cls.run_dir = os.path.join(cls.workspace.name, 'run')
        code, _stdout, stderr = run_cli('train', '--config', cls.config_path, '--out', cls.run_dir)
        if code != 0:
            raise RuntimeError("training the shared run failed: %s" % stderr)
        cls.checkpoint = os.path.join(cls.run_dir, training.FINAL_CHECKPOINT)

    @classmethod
    def tearDownClass(cls):
        cls.workspace.cleanup()

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

    def _path(self, name):
        return os.path.join(self.directory.name, name)

    def test_01_train_writes_run_files(self):
        """train leaves the history, final checkpoint, resolved config and vocabulary."""
        for name in (training.HISTORY_FILE, training.FINAL_CHECKPOINT, cli.RESOLVED_CONFIG, cli.VOCAB_FILE):
            self.assertTrue(os.path.exists(os.path.join(self.run_dir, name)), name)
        resolved = ExperimentConfig.from_file(os.path.join(self.run_dir, cli.RESOLVED_CONFIG))
        self.assertEqual(resolved.output_dir, self.run_dir)
        self.assertEqual(load_checkpoint(self.checkpoint).experiment_config, resolved)

    def test_02_config_errors_exit_2(self):
        """An unknown key or a missing training file exits with 2 and names the problem."""
        code, _stdout, stderr = run_cli('train', '--set', 'hiden_dim=64', '--out', self._path('bad'))
        self.assertEqual(code, 2)
        self.assertIn('hiden_dim', stderr)
        code, _stdout, stderr = run_cli('train', '--set', 'train_file=%s' % self._path('missing.txt'),
                                        '--out', self._path('bad'))
        self.assertEqual(code, 2)
        self.assertIn('train_file', stderr)

    def test_03_eval_prints_json(self):
        """eval prints one JSON object and falls back to the configured test_file."""
        code, stdout, _stderr = run_cli('eval', self.checkpoint)
        self.assertEqual(code, 0)
        report = json.loads(stdout)
        self.assertEqual(sorted(report), ['kl', 'nll', 'ppl', 'sentences', 'tokens'])
        self.assertEqual(report['sentences'], 32)
        code, threaded, _stderr = run_cli('eval', self.checkpoint, self.corpus, '--workers', '2')
        self.assertEqual(json.loads(threaded), report)

    def test_04_eval_config_mismatch_exits_3(self):
        """A config asking for another model shape is a checkpoint error."""
        code, _stdout, stderr = run_cli('eval', self.checkpoint, self.corpus, '--config', self.config_path,
                                        '--set', 'hidden_dim=16')
        self.assertEqual(code, 3)
        self.assertIn('error:', stderr)
        code, _stdout, _stderr = run_cli('eval', self._path('missing.ckpt'), self.corpus)
        self.assertEqual(code, 3)

    def test_05_eval_untrained_checkpoint(self):
        """A step-0 checkpoint still evaluates to finite metrics."""
        out_dir = self._path('untrained')
        code, _stdout, _stderr = run_cli('train', '--config', self.config_path, '--set', 'epochs=0',
                                         '--out', out_dir)
        self.assertEqual(code, 0)
        code, stdout, _stderr = run_cli('eval', os.path.join(out_dir, training.FINAL_CHECKPOINT), self.corpus)
        self.assertEqual(code, 0)
        self.assertGreater(json.loads(stdout)['ppl'], 1.0)

    def test_06_reconstruct(self):
        """Each non-blank line yields `input<TAB>reconstruction`; an empty file yields nothing."""
        input_path = self._path('input.txt')
        with open(input_path, 'w', encoding='utf-8') as input_file:
            input_file.write("The Mill is a pub .\n\n  Blue Spice serves French food .\n")
        code, stdout, _stderr = run_cli('reconstruct', self.checkpoint, input_path, '--max-length', '12')
        self.assertEqual(code, 0)
        lines = stdout.splitlines()
        self.assertEqual(len(lines), 2)
        self.assertEqual(lines[1].split('\t')[0], "Blue Spice serves French food .")
        self.assertTrue(all(len(line.split('\t')[1].split()) <= 12 for line in lines))
        empty_path = self._path('empty.txt')
        open(empty_path, 'w').close()
        self.assertEqual(run_cli('reconstruct', self.checkpoint, empty_path), (0, '', ''))

    def test_07_sample(self):
        """sample prints --count sentences and is reproducible under one seed."""
        code, stdout, _stderr = run_cli('sample', self.checkpoint, '--count', '3', '--mode', 'sample',
                                        '--seed', '4', '--max-length', '10')
        self.assertEqual(code, 0)
        self.assertEqual(len(stdout.split('\n')), 4)
        self.assertEqual(run_cli('sample', self.checkpoint, '--count', '3', '--mode', 'sample', '--seed', '4',
                                 '--max-length', '10')[1], stdout)

    def test_08_stats(self):
        """stats prints one JSON object per file and can export the vocabulary."""
        vocab_path = self._path('vocab.tsv')
        code, stdout, _stderr = run_cli('stats', self.corpus, self.corpus, '--vocab-out', vocab_path)
        self.assertEqual(code, 0)
        objects = [json.loads(line) for line in stdout.splitlines()]
        self.assertEqual(len(objects), 2)
        self.assertEqual(objects[0]['sentences'], 32)
        self.assertEqual(objects[0]['file'], self.corpus)
        self.assertTrue(os.path.exists(vocab_path))

    def test_09_compare(self):
        """compare trains hr and the baseline and fills every column of compare.csv."""
        out_dir = self._path('compare')
        code, _stdout, stderr = run_cli('compare', '--config', self.config_path, '--out', out_dir)
        self.assertEqual(code, 0, stderr)
        with open(os.path.join(out_dir, cli.COMPARE_FILE), encoding='utf-8') as compare_file:
            rows = list(csv.DictReader(compare_file))
        self.assertEqual([row['step'] for row in rows], ['0', '1', '2'])
        self.assertTrue(all(value != '' for row in rows for value in row.values()))
        for label in ('hr', 'baseline'):
            self.assertTrue(os.path.exists(os.path.join(out_dir, label, training.FINAL_CHECKPOINT)))

    def test_10_compare_hr_against_itself(self):
        """Comparing hr with hr under one seed gives identical columns."""
        out_dir = self._path('self')
        code, _stdout, _stderr = run_cli('compare', '--config', self.config_path, '--set', 'compare_against=hr',
                                         '--out', out_dir)
        self.assertEqual(code, 0)
        with open(os.path.join(out_dir, cli.COMPARE_FILE), encoding='utf-8') as compare_file:
            rows = list(csv.DictReader(compare_file))
        for row in rows:
            self.assertEqual(row['recon_hr'], row['recon_base'])
            self.assertEqual(row['kl_hr'], row['kl_base'])

    def test_11_version(self):
        """--version prints the manifest version."""
        code, stdout, _stderr = run_cli('--version')
        self.assertEqual(code, 0)
        self.assertIn(hr_vae.__version__, stdout)

    def test_12_eval_vocabulary_file(self):
        """--vocab must be readable, well formed and equal to the checkpoint's vocabulary."""
        code, stdout, _stderr = run_cli('eval', self.checkpoint, self.corpus, '--vocab',
                                        os.path.join(self.run_dir, cli.VOCAB_FILE))
        self.assertEqual(code, 0)
        self.assertIn('ppl', json.loads(stdout))
        code, _stdout, stderr = run_cli('eval', self.checkpoint, self.corpus, '--vocab', self._path('missing.tsv'))
        self.assertEqual(code, 3)
        self.assertIn('missing.tsv', stderr)
        malformed = self._path('malformed.tsv')
        with open(malformed, 'w', encoding='utf-8') as vocab_file:
            vocab_file.write("<pad>\tzero\t0\n")
        code, _stdout, stderr = run_cli('eval', self.checkpoint, self.corpus, '--vocab', malformed)
        self.assertEqual(code, 3)
        self.assertIn('line 1', stderr)
