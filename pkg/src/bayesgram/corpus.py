"""Corpus machinery: vocabulary, subsampling, windows, negative sampling.

Input corpora are plain UTF-8 text files with one document per line.
Tokenization is whitespace split (optionally lowercased). Training windows
never cross document boundaries.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Vocabulary",
    "tokenize_line",
    "iter_documents",
    "build_vocabulary",
    "subsample_stream",
    "extract_windows",
    "sample_negatives",
    "Window",
    "iter_training_windows",
]


class CorpusError(Exception):
    """Raised for unusable corpus input (empty, undecodable, ...)."""


@dataclass(frozen=True)
class Window:
    """One training window: a center word id and its surrounding context ids."""

    center: int
    contexts: tuple


@dataclass
class Vocabulary:
    words: list
    counts: np.ndarray
    subsample_t: float = 1e-4
    neg_table_exponent: float = 1.0
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.words) != len(self.counts):
            raise ValueError("words and counts length mismatch")
        if len(self.words) == 0:
            raise CorpusError("empty corpus")
        if np.any(self.counts <= 0):
            raise ValueError("counts must be positive")
        self._index = {w: i for i, w in enumerate(self.words)}
        total = float(self.counts.sum())
        self.unigram_prob = self.counts / total
        self.keep_prob = np.minimum(1.0, np.sqrt(self.subsample_t / self.unigram_prob))
        p = self.unigram_prob ** self.neg_table_exponent
        self.neg_prob = p / p.sum()

    def __len__(self):
        return len(self.words)

    def __contains__(self, word) -> bool:
        return word in self._index

    def lookup(self, word):
        """word -> id, or None when out of vocabulary."""
        return self._index.get(word)

    def word(self, idx: int) -> str:
        return self.words[idx]

    def ids(self, tokens):
        """Map tokens to ids, dropping out-of-vocabulary tokens."""
        idx = self._index
        return [idx[t] for t in tokens if t in idx]

    def save(self, path):
        """Write the vocabulary as `word<TAB>count` lines, most frequent first."""
        with open(path, "w", encoding="utf-8") as f:
            for w, c in zip(self.words, self.counts):
                f.write(f"{w}\t{int(c)}\n")

    @classmethod
    def load(cls, path, subsample_t=1e-4, neg_table_exponent=1.0):
        words, counts = [], []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    w, c = line.split("\t")
                    counts.append(int(c))
                except ValueError:
                    raise CorpusError(f"malformed vocabulary line {lineno}: {line!r}")
                words.append(w)
        return cls(words, np.asarray(counts, dtype=np.int64),
                   subsample_t=subsample_t, neg_table_exponent=neg_table_exponent)


def tokenize_line(line: str, lowercase: bool = True):
    if lowercase:
        line = line.lower()
    return line.split()


def iter_documents(path, lowercase: bool = True):
    """Yield one token list per non-empty line of a UTF-8 text file."""
    with open(path, "rb") as f:
        offset = 0
        for raw in f:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise CorpusError(f"non-UTF-8 input at byte offset {offset + e.start}")
            offset += len(raw)
            tokens = tokenize_line(line, lowercase=lowercase)
            if tokens:
                yield tokens


def build_vocabulary(token_stream, max_size: int, min_count: int,
                     t: float = 1e-4, neg_exponent: float = 1.0) -> Vocabulary:
    """Count a token stream and keep the most frequent words.

    Words below min_count or beyond max_size are dropped; frequency ties are
    broken by first-seen order. token_stream may be a flat iterable of tokens
    or an iterable of token lists (documents): chunking does not affect counts.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if t <= 0:
        raise ValueError("subsampling t must be > 0")
    counts = {}
    for item in token_stream:
        if isinstance(item, str):
            counts[item] = counts.get(item, 0) + 1
        else:
            for tok in item:
                counts[tok] = counts.get(tok, 0) + 1
    if not counts:
        raise CorpusError("empty corpus")
    # dict preserves insertion order, so the sort is stable on first-seen order
    kept = sorted(counts.items(), key=lambda kv: -kv[1])[:max_size]
    kept = [(w, c) for w, c in kept if c >= min_count]
    if not kept:
        raise CorpusError("empty corpus: no word reaches min_count")
    words = [w for w, _ in kept]
    cts = np.array([c for _, c in kept], dtype=np.int64)
    return Vocabulary(words, cts, subsample_t=t, neg_table_exponent=neg_exponent)


def subsample_stream(tokens, vocab: Vocabulary, rng: np.random.Generator):
    """Drop frequent tokens, each kept independently with keep_prob[id]."""
    keep = vocab.keep_prob
    out = []
    for w in tokens:
        if keep[w] >= 1.0 or rng.random() < keep[w]:
            out.append(w)
    return out


def extract_windows(tokens, window_size: int):
    """Symmetric context windows, truncated at the stream boundaries."""
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    n = len(tokens)
    windows = []
    for i in range(n):
        lo = max(0, i - window_size)
        hi = min(n, i + window_size + 1)
        ctx = tuple(tokens[lo:i]) + tuple(tokens[i + 1:hi])
        if ctx:
            windows.append(Window(tokens[i], ctx))
    return windows


def sample_negatives(vocab: Vocabulary, k: int, rng: np.random.Generator):
    """k i.i.d. draws from the unigram distribution raised to neg_table_exponent."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return list(rng.choice(len(vocab), size=k, p=vocab.neg_prob))


def iter_training_windows(corpus_path, vocab: Vocabulary, window_size: int,
                          negatives_per_positive: int, rng: np.random.Generator,
                          lowercase: bool = True):
    """Yield (center, positives, negatives) triples for one epoch.

    This is the single stream shared by every trainer so that model
    comparisons see identical windows and negatives for a given seed.
    OOV tokens are dropped, the remainder subsampled, then windowed per
    document; negatives are resampled per window.
    """
    for doc in iter_documents(corpus_path, lowercase=lowercase):
        ids = vocab.ids(doc)
        ids = subsample_stream(ids, vocab, rng)
        for win in extract_windows(ids, window_size):
            k = len(win.contexts) * negatives_per_positive
            negs = sample_negatives(vocab, k, rng)
            yield win.center, list(win.contexts), negs
