"""One-vs-rest logistic classifier over tf-idf features.

Each active goal has an independent logistic unit. Training minimises, per
unit, the mean binary cross-entropy over documents plus (l2/2)*||w||^2 on the
non-bias weights, by full-batch gradient descent from zero weights. The goal 4
row is frozen at zero, so its score is always exactly 0.5, and every decision
rule masks it out.
"""
from __future__ import annotations

import io
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import DivergenceError, ModelFormatError
from .evaluation import micro_metrics
from .features import Featurizer, FeaturizerConfig, fit_featurizer, transform_many
from .labelgen import EXCLUDED_GOAL, N_GOALS

FROZEN_ROW = EXCLUDED_GOAL - 1
MAGIC = b"SDGMODEL"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 300
    l2: float = 1e-4
    seed: int = 7

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


@dataclass(frozen=True)
class DecisionRule:
    mode: str = "top_k"
    k: int = 3
    t: float = 0.5

    def __post_init__(self):
        if self.mode == "top_k":
            if not 1 <= self.k <= N_GOALS - 1:
                raise ValueError(f"k must lie in 1..{N_GOALS - 1}")
        elif self.mode == "threshold":
            if not 0 < self.t < 1:
                raise ValueError("threshold must lie strictly between 0 and 1")
        else:
            raise ValueError(f"unknown decision mode {self.mode!r}")

    @classmethod
    def parse(cls, text):
        """Accepts ``top3``, ``top_k:3``, ``threshold:0.4`` or ``t0.4``."""
        text = text.strip().lower()
        m = re.fullmatch(r"top_?k?[:=]?(\d+)", text)
        if m:
            return cls("top_k", k=int(m.group(1)))
        m = re.fullmatch(r"(?:threshold[:=]|t)([0-9.]+)", text)
        if m:
            return cls("threshold", t=float(m.group(1)))
        raise ValueError(f"cannot parse decision rule {text!r}")

    def __str__(self):
        return f"top{self.k}" if self.mode == "top_k" else f"threshold:{self.t:g}"


@dataclass
class Model:
    weights: np.ndarray  # (17, V+1), last column is the bias
    metadata: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return self.weights.shape[1] - 1


def _with_bias(X):
    X = sp.csr_matrix(X, dtype=np.float64)
    ones = sp.csr_matrix(np.ones((X.shape[0], 1)))
    return sp.hstack([X, ones], format="csr")


def loss_and_grad(W, Xb, Y, l2):
    """Objective and gradient for weights ``W`` on bias-augmented ``Xb``."""
    n = Xb.shape[0]
    Z = np.asarray(Xb @ W.T)
    active = np.ones(W.shape[0], dtype=bool)
    active[FROZEN_ROW] = False
    # log(sigmoid(z)) = -logaddexp(0, -z), log(1 - sigmoid(z)) = -logaddexp(0, z)
    bce = Y * np.logaddexp(0.0, -Z) + (1.0 - Y) * np.logaddexp(0.0, Z)
    w = W[active, :-1]
    loss = bce[:, active].sum() / n + 0.5 * l2 * float((w * w).sum())

    R = expit(Z) - Y
    G = np.asarray((Xb.T @ R).T) / n
    G[:, :-1] += l2 * W[:, :-1]
    G[FROZEN_ROW] = 0.0
    return loss, G


def _label_matrix(items):
    return np.array([list(getattr(it, "labels", it)) for it in items], dtype=np.float64).reshape(-1, N_GOALS)


def fit_weights(X, Y, config: TrainConfig | None = None, X_val=None, Y_val=None, rule=None):
    """Gradient descent on a feature matrix; returns a Model."""
    config = config or TrainConfig()
    rule = rule or DecisionRule()
    Xb = _with_bias(X)
    Y = np.asarray(Y, dtype=np.float64)
    W = np.zeros((N_GOALS, Xb.shape[1]))
    Xvb = _with_bias(X_val) if X_val is not None else None

    val_f1 = []
    loss, G = loss_and_grad(W, Xb, Y, config.l2)
    history = [loss]
    for epoch in range(config.epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            W = W - config.learning_rate * G
            loss, G = loss_and_grad(W, Xb, Y, config.l2)
        if not (np.isfinite(loss) and np.isfinite(W).all()):
            raise DivergenceError(f"loss became non-finite at epoch {epoch + 1}")
        history.append(loss)
        if Xvb is not None and Xvb.shape[0]:
            pred = decide_many(expit(np.asarray(Xvb @ W.T)), rule)
            val_f1.append(micro_metrics(pred, Y_val)[2])

    return Model(W, {
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "l2": config.l2,
        "seed": config.seed,
        "final_loss": history[-1],
        "loss_history": history,
        "val_micro_f1": val_f1,
        "decision_rule": str(rule),
    })


def train(train_items, validation_items=(), config: TrainConfig | None = None,
          featurizer_config: FeaturizerConfig | None = None, rule=None):
    """Fit a featurizer on the training split, then the classifier weights.

    Items are LabeledCourse records. Returns ``(featurizer, model)``.
    """
    texts = [it.course.combined_text for it in train_items]
    featurizer = fit_featurizer(texts, featurizer_config)
    X = transform_many(featurizer, texts)
    Y = _label_matrix(train_items)
    X_val = Y_val = None
    if len(validation_items):
        X_val = transform_many(featurizer, [it.course.combined_text for it in validation_items])
        Y_val = _label_matrix(validation_items).astype(np.int64)
    return featurizer, fit_weights(X, Y, config, X_val, Y_val, rule)


def predict_scores_many(model, featurizer, texts):
    Xb = _with_bias(transform_many(featurizer, texts))
    return expit(np.asarray(Xb @ model.weights.T))


def predict_scores(model, featurizer, text):
    """17 sigmoid scores for one text; the goal 4 slot is always 0.5."""
    return predict_scores_many(model, featurizer, [text])[0]


def decide(scores, rule: DecisionRule | None = None):
    rule = rule or DecisionRule()
    scores = list(scores)
    vec = [0] * N_GOALS
    candidates = [i for i in range(N_GOALS) if i != FROZEN_ROW]
    if rule.mode == "top_k":
        # ties go to the lower goal number
        for i in sorted(candidates, key=lambda i: (-scores[i], i))[: rule.k]:
            vec[i] = 1
    else:
        for i in candidates:
            if scores[i] > rule.t:
                vec[i] = 1
    return tuple(vec)


def decide_many(S, rule=None):
    return [decide(row, rule) for row in np.asarray(S)]


# -- serialisation ----------------------------------------------------------
#
# layout (all integers little-endian):
#   magic "SDGMODEL" | u32 version | u32 len + JSON metadata
#   u32 V | V x (u32 len + utf-8 token) | V x u64 document frequency
#   u32 rows | u32 cols | rows*cols x f64 weights, row-major


def _pack_str(buf, s):
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


def dumps_model(featurizer: Featurizer, model: Model):
    vocab = sorted(featurizer.vocabulary, key=featurizer.vocabulary.__getitem__)
    if model.n_features != len(vocab):
        raise ValueError("model and featurizer disagree on feature count")
    meta = {
        "model": model.metadata,
        "featurizer": {
            "corpus_size": featurizer.corpus_size,
            "min_df": featurizer.config.min_df,
            "bigrams": featurizer.config.bigrams,
        },
    }
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    _pack_str(buf, json.dumps(meta, sort_keys=True))
    buf.write(struct.pack("<I", len(vocab)))
    for tok in vocab:
        _pack_str(buf, tok)
    buf.write(np.array([featurizer.document_frequencies[t] for t in vocab], dtype="<u8").tobytes())
    rows, cols = model.weights.shape
    buf.write(struct.pack("<II", rows, cols))
    buf.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
    return buf.getvalue()


def loads_model(data: bytes):
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ModelFormatError("model file is truncated")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    def take_str():
        (n,) = struct.unpack("<I", take(4))
        return bytes(take(n)).decode("utf-8")

    if bytes(take(len(MAGIC))) != MAGIC:
        raise ModelFormatError("not a course_sdg model file")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    meta = json.loads(take_str())
    (V,) = struct.unpack("<I", take(4))
    vocab = [take_str() for _ in range(V)]
    dfs = np.frombuffer(take(8 * V), dtype="<u8")
    rows, cols = struct.unpack("<II", take(8))
    W = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols).astype(np.float64)
    if pos != len(view):
        raise ModelFormatError("trailing bytes after weight block")

    fmeta = meta["featurizer"]
    featurizer = Featurizer(
        vocabulary={t: i for i, t in enumerate(vocab)},
        document_frequencies={t: int(d) for t, d in zip(vocab, dfs)},
        corpus_size=int(fmeta["corpus_size"]),
        config=FeaturizerConfig(min_df=int(fmeta["min_df"]), bigrams=bool(fmeta["bigrams"])),
    )
    return featurizer, Model(W, meta["model"])


def save_model(path, featurizer, model):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps_model(featurizer, model))


def load_model(path):
    return loads_model(Path(path).read_bytes())
