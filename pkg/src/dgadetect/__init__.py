"""dgadetect: character-level DGA / DNS-exfiltration domain classification.

High-level surface: :class:`~dgadetect.estimators.CharTransformerClassifier`
and :class:`~dgadetect.estimators.NGramClassifier` (scikit-learn API), the
experiment runner in :mod:`dgadetect.protocols`, and the ``dgadetect`` CLI.
"""

from .domains import DomainName, Label, SuffixMode, normalize_domain, strip_suffix
from .estimators import CharTransformerClassifier, NGramClassifier, NotTrainedError
from .ingest import (
    DatasetRecord,
    Splits,
    audit_leakage,
    balance,
    dedup,
    merge_shuffle,
    parse_feed,
    sanitize_exfil,
    stratified_split,
)
from .lora import AdaptedModel, LoraAdapter, ParamAccount, QuantizedMatrix, account, inject, merge, quantize_base
from .neural import Model, ModelConfig, backward, forward, grad_check, loss_class, loss_ntp
from .ngram import NGramProfile, build_profiles, extract_ngrams, jaccard, kl_divergence
from .protocols import ExperimentResult, ExperimentSpec, run_experiment
from .tokenizer import TokenSequence, Vocabulary, decode, encode
from .training import ConfusionMatrix, EvalReport, TrainConfig, benchmark, evaluate, metrics, train

__version__ = "0.1.0"

__all__ = [
    "AdaptedModel", "CharTransformerClassifier", "ConfusionMatrix",
    "DatasetRecord", "DomainName", "EvalReport", "ExperimentResult",
    "ExperimentSpec", "Label", "LoraAdapter", "Model", "ModelConfig",
    "NGramClassifier", "NGramProfile", "NotTrainedError", "ParamAccount",
    "QuantizedMatrix", "Splits", "SuffixMode", "TokenSequence", "TrainConfig",
    "Vocabulary", "account", "audit_leakage", "backward", "balance",
    "benchmark", "build_profiles", "decode", "dedup", "encode", "evaluate",
    "extract_ngrams", "forward", "grad_check", "inject", "jaccard",
    "kl_divergence", "loss_class", "loss_ntp", "merge", "merge_shuffle",
    "metrics", "normalize_domain", "parse_feed", "quantize_base",
    "run_experiment", "sanitize_exfil", "stratified_split", "strip_suffix",
    "train",
]
