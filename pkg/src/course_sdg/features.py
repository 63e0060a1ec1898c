"""TF-IDF bag-of-words featurizer with document-frequency pruning."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import EmptyVocabularyError

_TOKEN = re.compile(r"[^\W\d_]{2,}")


@dataclass(frozen=True)
class FeaturizerConfig:
    min_df: int = 2
    bigrams: bool = False


def tokenize(text, bigrams=False):
    """Lowercase alphabetic runs of length >= 2, optionally plus bigrams."""
    words = _TOKEN.findall(text.lower())
    if bigrams:
        words = words + [f"{a} {b}" for a, b in zip(words, words[1:])]
    return words


@dataclass(frozen=True)
class Featurizer:
    vocabulary: dict  # token -> column, lexicographic order
    document_frequencies: dict
    corpus_size: int
    config: FeaturizerConfig

    @property
    def n_features(self):
        return len(self.vocabulary)

    def idf(self, token):
        df = self.document_frequencies[token]
        return math.log((1 + self.corpus_size) / (1 + df)) + 1.0

    @property
    def idf_vector(self):
        vec = np.empty(self.n_features)
        for tok, col in self.vocabulary.items():
            vec[col] = self.idf(tok)
        return vec


def fit_featurizer(corpus, config: FeaturizerConfig | None = None):
    config = config or FeaturizerConfig()
    if not corpus:
        raise ValueError("cannot fit a featurizer on an empty corpus")
    df = Counter()
    for text in corpus:
        df.update(set(tokenize(text, config.bigrams)))
    kept = sorted(t for t, n in df.items() if n >= config.min_df)
    if not kept:
        raise EmptyVocabularyError(f"no token reaches min_df={config.min_df}")
    return Featurizer(
        vocabulary={t: i for i, t in enumerate(kept)},
        document_frequencies={t: df[t] for t in kept},
        corpus_size=len(corpus),
        config=config,
    )


def transform_many(f: Featurizer, texts):
    """CSR matrix of L2-normalised tf-idf rows, one per text."""
    idf = f.idf_vector
    indptr, indices, data = [0], [], []
    for text in texts:
        tf = Counter(t for t in tokenize(text, f.config.bigrams) if t in f.vocabulary)
        entries = sorted((f.vocabulary[t], n) for t, n in tf.items())
        cols = [c for c, _ in entries]
        vals = np.array([n * idf[c] for c, n in entries], dtype=np.float64)
        norm = math.sqrt(float(vals @ vals)) if len(vals) else 0.0
        if norm > 0:
            vals = vals / norm
        indices.extend(cols)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), indptr),
        shape=(len(indptr) - 1, f.n_features),
    )


def transform(f: Featurizer, text):
    """Dense tf-idf vector for one text; all-zero when nothing is in vocabulary."""
    return transform_many(f, [text]).toarray()[0]
