# -*- coding: utf-8 -*-
"""
Corpus ingestion: tokenization, the frequency-thresholded vocabulary, padding
and batching.
"""
import collections
import logging

import numpy as np

from ..exceptions import ContractError

_logger = logging.getLogger(__name__)

PAD, SOS, EOS, UNK = 0, 1, 2, 3
PAD_TOKEN, SOS_TOKEN, EOS_TOKEN, UNK_TOKEN = '<pad>', '<sos>', '<eos>', '<unk>'
RESERVED_TOKENS = [PAD_TOKEN, SOS_TOKEN, EOS_TOKEN, UNK_TOKEN]

MAX_BATCH_SIZE = 128
MAX_SENTENCE_LENGTH = 60


def tokenize(line):
    """
    Lowercased whitespace split with EOS appended. SOS is never stored; the
    decoder adds it.

    Returns:
        list[str]: Tokens, or [] for a blank line (callers skip those).
    """
    words = line.lower().split()
    if not words:
        return []
    return words + [EOS_TOKEN]


def read_corpus(path, max_length=MAX_SENTENCE_LENGTH):
    """
    Reads a split file, one sentence per line.

    Args:
        path (str): UTF-8 text file.
        max_length (int): Cap on tokens per sentence, EOS included.

    Returns:
        list[list[str]]: Tokenized sentences; blank lines are skipped.
    """
    sentences = []
    truncated = 0
    with open(path, encoding='utf-8') as corpus_file:
        for line in corpus_file:
            tokens = tokenize(line)
            if not tokens:
                continue
            if len(tokens) > max_length:
                tokens = tokens[:max_length - 1] + [EOS_TOKEN]
                truncated += 1
            sentences.append(tokens)
    if truncated:
        _logger.warning("Truncated %s of %s sentences in %s to %s tokens.", truncated, len(sentences), path, max_length)
    _logger.info("Read %s sentences from %s.", len(sentences), path)
    return sentences


class Vocab:
    """
    Bidirectional token <-> id mapping. Ids 0..3 are PAD, SOS, EOS, UNK;
    the remaining ids follow descending frequency, ties broken
    lexicographically.
    """

    def __init__(self, tokens, counts, min_freq=1):
        if tokens[:len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise ContractError("Vocab must start with the reserved tokens %s." % RESERVED_TOKENS)
        if len(set(tokens)) != len(tokens):
            raise ContractError("Vocab tokens must be unique.")
        self.id_to_token = list(tokens)
        self.token_to_id = {token: index for index, token in enumerate(tokens)}
        self.counts = [int(count) for count in counts]
        self.min_freq = min_freq

    def __len__(self):
        return len(self.id_to_token)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.id_to_token == other.id_to_token and self.counts == other.counts

    def encode(self, tokens):
        return [self.token_to_id.get(token, UNK) for token in tokens]

    def decode(self, ids):
        """Ids back to words: stops at EOS, drops PAD and SOS."""
        words = []
        for index in ids:
            index = int(index)
            if index == EOS:
                break
            if index in (PAD, SOS):
                continue
            words.append(self.id_to_token[index])
        return words

    def detokenize(self, ids):
        return ' '.join(self.decode(ids))

    def export(self, path):
        """Writes `token<TAB>id<TAB>count` lines, reserved tokens first."""
        with open(path, 'w', encoding='utf-8') as vocab_file:
            for index, token in enumerate(self.id_to_token):
                vocab_file.write("%s\t%d\t%d\n" % (token, index, self.counts[index]))

    @classmethod
    def from_file(cls, path, min_freq=1):
        tokens, counts = [], []
        with open(path, encoding='utf-8') as vocab_file:
            for line_number, line in enumerate(vocab_file, start=1):
                parts = line.rstrip('\n').split('\t')
                try:
                    index, count = (int(parts[1]), int(parts[2])) if len(parts) == 3 else (None, None)
                except ValueError:
                    index = count = None
                if index != line_number - 1 or count is None:
                    raise ContractError("Vocab file %s line %s is not `token<TAB>id<TAB>count` in id order." % (
                        path, line_number))
                tokens.append(parts[0])
                counts.append(count)
        return cls(tokens, counts, min_freq=min_freq)

    def to_dict(self):
        return {'tokens': self.id_to_token, 'counts': self.counts, 'min_freq': self.min_freq}

    @classmethod
    def from_dict(cls, values):
        return cls(values['tokens'], values['counts'], min_freq=values.get('min_freq', 1))


def build_vocab(sentences, min_freq=1):
    """
    Builds the vocabulary from tokenized training sentences.

    Args:
        sentences (list[list[str]]): Output of `tokenize` / `read_corpus`.
        min_freq (int): Tokens seen fewer times map to UNK.

    Returns:
        Vocab: The vocabulary.
    """
    if min_freq < 1:
        raise ContractError("min_freq must be at least 1, got %s." % min_freq)
    if not sentences:
        raise ContractError("Cannot build a vocabulary from an empty corpus.")
    counter = collections.Counter(token for sentence in sentences for token in sentence)
    reserved_counts = [counter.pop(token, 0) for token in RESERVED_TOKENS]
    kept = sorted(
        ((token, count) for token, count in counter.items() if count >= min_freq),
        key=lambda item: (-item[1], item[0]),
    )
    _logger.info("Vocabulary: %s of %s distinct tokens kept at min_freq=%s.", len(kept), len(counter), min_freq)
    return Vocab(
        RESERVED_TOKENS + [token for token, _ in kept],
        reserved_counts + [count for _, count in kept],
        min_freq=min_freq,
    )


class Batch:
    """
    A PAD-filled id matrix with per-row lengths (EOS included, PAD excluded).

    Attributes:
        ids (np.ndarray): int64 [B × width], width >= max(lengths).
        lengths (list[int]): True length of every row.
        mask (np.ndarray): bool [B × width], mask[i, t] == (t < lengths[i]).
    """

    def __init__(self, ids, lengths):
        ids = np.asarray(ids, dtype=np.int64)
        lengths = [int(length) for length in lengths]
        if ids.ndim != 2 or ids.shape[0] == 0:
            raise ContractError("Batch ids must be a non-empty [B × T] matrix, got shape %s." % (ids.shape,))
        if ids.shape[0] > MAX_BATCH_SIZE:
            raise ContractError("Batch size %s exceeds the maximum of %s." % (ids.shape[0], MAX_BATCH_SIZE))
        if len(lengths) != ids.shape[0] or min(lengths) < 1 or max(lengths) > ids.shape[1]:
            raise ContractError("Batch lengths %s do not fit ids of shape %s." % (lengths, ids.shape))
        self.ids = ids
        self.lengths = lengths
        self.mask = np.arange(ids.shape[1])[None, :] < np.asarray(lengths)[:, None]
        if np.any(ids[~self.mask] != PAD):
            raise ContractError("Batch positions past a row's length must hold PAD.")

    @classmethod
    def from_sequences(cls, sequences):
        """Pads id sequences to the longest one."""
        if not sequences:
            raise ContractError("Cannot build a batch from no sequences.")
        width = max(len(sequence) for sequence in sequences)
        ids = np.full((len(sequences), width), PAD, dtype=np.int64)
        for row, sequence in enumerate(sequences):
            ids[row, :len(sequence)] = sequence
        return cls(ids, [len(sequence) for sequence in sequences])

    @property
    def size(self):
        return self.ids.shape[0]

    @property
    def max_length(self):
        return max(self.lengths)

    @property
    def token_count(self):
        return int(np.sum(self.lengths))

    def pad_to(self, width):
        """Appends PAD columns up to `width`; lengths are unchanged."""
        if width < self.ids.shape[1]:
            raise ContractError("pad_to: width %s is below the current width %s." % (width, self.ids.shape[1]))
        ids = np.full((self.size, width), PAD, dtype=np.int64)
        ids[:, :self.ids.shape[1]] = self.ids
        return Batch(ids, self.lengths)


def make_batches(sentences, vocab, batch_size, shuffle_seed=None):
    """
    Encodes, optionally shuffles, and chunks sentences into padded batches.

    Args:
        sentences (list[list[str]]): Tokenized sentences.
        vocab (Vocab): Token to id mapping.
        batch_size (int): In [1, 128].
        shuffle_seed (int | None): Seed for a deterministic permutation;
            None keeps corpus order.

    Returns:
        list[Batch]: Consecutive chunks, each padded to its own max length.
    """
    if not 1 <= batch_size <= MAX_BATCH_SIZE:
        raise ContractError("batch_size must be in [1, %s], got %s." % (MAX_BATCH_SIZE, batch_size))
    order = np.arange(len(sentences))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(sentences))
    encoded = [vocab.encode(sentences[index]) for index in order]
    return [
        Batch.from_sequences(encoded[start:start + batch_size])
        for start in range(0, len(encoded), batch_size)
    ]


def corpus_statistics(sentences, vocab=None):
    """
    Dataset statistics in the shape of a corpus summary table.

    Returns:
        dict: sentences, tokens (EOS included), avg_length (words, EOS
        excluded) and, with a vocab, vocab_size.
    """
    if not sentences:
        raise ContractError("Cannot compute statistics of an empty corpus.")
    tokens = sum(len(sentence) for sentence in sentences)
    words = sum(len([token for token in sentence if token != EOS_TOKEN]) for sentence in sentences)
    statistics = {
        'sentences': len(sentences),
        'tokens': tokens,
        'avg_length': words / len(sentences),
    }
    if vocab is not None:
        statistics['vocab_size'] = len(vocab)
    return statistics
