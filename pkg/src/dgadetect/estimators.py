"""Scikit-learn style estimators wrapping the transformer and the n-gram
baseline, so both compose with pipelines, ``clone``, and grid search.

Both accept an iterable of domain strings as X. ``CharTransformerClassifier``
carves a validation slice out of the training data unless ``fit`` receives
an explicit ``validation=(X_val, y_val)`` pair.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import neural, training
from .domains import Label, SuffixMode, strip_suffix
from .errors import DgaDetectError
from .ingest import DatasetRecord
from .lora import inject
from .ngram import build_profiles, featurize, train_logistic
from .rng import SplitMix64, derive_seed
from .tokenizer import Vocabulary, encode
from .validation import check_domains, check_targets


class NotTrainedError(NotFittedError, DgaDetectError):
    """predict/predict_proba called before fit."""


def _stratified_holdout(labels: np.ndarray, fraction: float, seed: int):
    """Per-class seeded index split into (train_idx, holdout_idx)."""
    rng = SplitMix64(derive_seed(seed, "holdout"))
    train_idx, hold_idx = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls).tolist()
        rng.derive(str(int(cls))).shuffle(idx)
        n_hold = max(1, int(round(fraction * len(idx)))) if len(idx) > 1 else 0
        hold_idx.extend(idx[:n_hold])
        train_idx.extend(idx[n_hold:])
    return sorted(train_idx), sorted(hold_idx)


class CharTransformerClassifier(BaseEstimator, ClassifierMixin):
    """Character-level transformer classifier over domain names.

    ``adapter`` selects full fine-tuning (None), low-rank adapters over a
    frozen base ("lora"), or adapters over an int4-quantized frozen base
    ("qlora").
    """

    def __init__(self, d_model=64, n_heads=4, n_layers=2, d_ff=256, dropout=0.1,
                 max_len=64, ntp_head="untied", epochs=10, batch_size=64,
                 learning_rate=3e-4, weight_decay=0.0, patience=3,
                 adapter=None, lora_rank=8, lora_alpha=16.0,
                 lora_targets=("attn.wq", "attn.wv"), quant_block_size=64,
                 validation_fraction=0.2, suffix_mode="full", seed=0):
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_ff = d_ff
        self.dropout = dropout
        self.max_len = max_len
        self.ntp_head = ntp_head
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.patience = patience
        self.adapter = adapter
        self.lora_rank = lora_rank
        self.lora_alpha = lora_alpha
        self.lora_targets = lora_targets
        self.quant_block_size = quant_block_size
        self.validation_fraction = validation_fraction
        self.suffix_mode = suffix_mode
        self.seed = seed

    # -- helpers --

    def _encode(self, X):
        mode = SuffixMode.parse(self.suffix_mode)
        vocab = self.vocab_
        return [encode(strip_suffix(d, mode), self.max_len, vocab)
                for d in check_domains(X)]

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotTrainedError("estimator is not fitted; call fit first")

    # -- sklearn API --

    def fit(self, X, y, validation=None):
        domains = check_domains(X)
        y_idx, classes = check_targets(y, len(domains))
        self.classes_ = classes
        self.vocab_ = Vocabulary.default()

        config = neural.ModelConfig(
            vocab_size=self.vocab_.size, max_len=self.max_len,
            d_model=self.d_model, n_heads=self.n_heads, n_layers=self.n_layers,
            d_ff=self.d_ff, n_classes=len(classes), dropout=self.dropout,
            ntp_head=self.ntp_head, seed=self.seed)
        model = neural.Model(config)
        if self.adapter is not None:
            if self.adapter not in ("lora", "qlora"):
                raise ValueError(f"adapter must be None, 'lora', or 'qlora', "
                                 f"got {self.adapter!r}")
            model = inject(model, targets=self.lora_targets, rank=self.lora_rank,
                           alpha=self.lora_alpha, seed=derive_seed(self.seed, "lora"),
                           quantize=self.adapter == "qlora",
                           block_size=self.quant_block_size)

        seqs = self._encode(domains)
        if validation is not None:
            val_seqs = self._encode(validation[0])
            val_y, val_classes = check_targets(validation[1], len(val_seqs))
            if list(val_classes) != list(classes):
                raise ValueError("validation labels do not match training classes")
            train_seqs, train_y = seqs, y_idx
        else:
            tr, ho = _stratified_holdout(y_idx, self.validation_fraction, self.seed)
            train_seqs = [seqs[i] for i in tr]
            train_y = y_idx[tr]
            val_seqs = [seqs[i] for i in ho]
            val_y = y_idx[ho]

        cfg = training.TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, weight_decay=self.weight_decay,
            seed=self.seed, patience=self.patience)
        self.train_result_ = training.train(model, (train_seqs, train_y),
                                            (val_seqs, val_y), cfg)
        self.model_ = model
        self.config_ = config
        return self

    def predict_proba(self, X):
        self._check_fitted()
        seqs = self._encode(X)
        out = np.empty((len(seqs), len(self.classes_)))
        for start in range(0, len(seqs), 256):
            chunk = seqs[start:start + 256]
            out[start:start + len(chunk)] = neural.forward(
                self.model_, chunk).class_probs
        return out

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]


class NGramClassifier(BaseEstimator, ClassifierMixin):
    """Jaccard/KL n-gram features plus seeded logistic regression.

    Binary only; the positive (malicious) class is ``classes_[1]``. A score
    strictly above ``threshold`` predicts malicious; ties go benign.
    """

    def __init__(self, epsilon=1e-6, learning_rate=0.5, iterations=400,
                 threshold=0.5, suffix_mode="full", seed=0):
        self.epsilon = epsilon
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.threshold = threshold
        self.suffix_mode = suffix_mode
        self.seed = seed

    def fit(self, X, y):
        domains = check_domains(X)
        y_idx, classes = check_targets(y, len(domains))
        if len(classes) != 2:
            raise ValueError("NGramClassifier is binary")
        self.classes_ = classes
        mode = SuffixMode.parse(self.suffix_mode)
        records = [
            DatasetRecord(d, Label.dga("positive") if yi == 1 else Label.benign())
            for d, yi in zip(domains, y_idx)
        ]
        self.profiles_ = build_profiles(records, suffix_mode=mode,
                                        epsilon=self.epsilon)
        feats = np.stack([featurize(d, self.profiles_, mode) for d in domains])
        self.linear_ = train_logistic(
            feats, y_idx, learning_rate=self.learning_rate,
            iterations=self.iterations, seed=self.seed)
        return self

    def _check_fitted(self):
        if not hasattr(self, "linear_"):
            raise NotTrainedError("estimator is not fitted; call fit first")

    def decision_scores(self, X) -> np.ndarray:
        """Malicious probability in [0, 1] per domain."""
        self._check_fitted()
        mode = SuffixMode.parse(self.suffix_mode)
        domains = check_domains(X)
        feats = np.stack([featurize(d, self.profiles_, mode) for d in domains])
        return self.linear_.scores(feats)

    def predict_proba(self, X):
        s = self.decision_scores(X)
        return np.column_stack([1.0 - s, s])

    def predict(self, X):
        s = self.decision_scores(X)
        return np.where(s > self.threshold, self.classes_[1], self.classes_[0])
