"""Gendered pronoun resolution with coreference evidence pooling.

A pronoun-token baseline classifier and an evidence-pooling classifier over
pluggable coreference providers, with the corpus pipeline, training and
ensembling harness, gender-bias scorer, and a label-review HTTP service.
"""

from .autodiff import Tensor, grad_check, no_grad, rng_stream
from .data import GapSample, Label, Mention, apply_corrections, derive_label, insert_mention_tags, parse_tsv, write_tsv
from .encoder import EncoderConfig, TokenEmbeddings, encode
from .evidence import (
    AlignedEvidence,
    CorruptProvider,
    EvidenceCluster,
    HeuristicParallelismProvider,
    OracleProvider,
    align_cluster_tokens,
    load_evidence,
    write_evidence,
)
from .metrics import ScoreReport, confusion_compare, ensemble_mean, gap_f1, logloss, prob_histograms
from .optim import AdamConfig, AdamState, adam_step
from .pooling import GrepConfig, GrepModel, attn_pool, cascade, classify_grep, forward_grep, pool_hierarchy
from .probert import ProbertConfig, ProbertModel, classify_probert, pool_pronoun
from .synthetic import SynthConfig, generate_neither, generate_neither_corpus, generate_synthetic
from .tokenizer import TokenizedExample, Vocab, build_vocab, tokenize
from .training import Dataset, TrainConfig, build_model, kfold_ensemble, prepare_dataset, train

__version__ = "0.1.0"

__all__ = [
    "Tensor", "grad_check", "no_grad", "rng_stream",
    "GapSample", "Label", "Mention", "apply_corrections", "derive_label", "insert_mention_tags", "parse_tsv", "write_tsv",
    "EncoderConfig", "TokenEmbeddings", "encode",
    "AlignedEvidence", "CorruptProvider", "EvidenceCluster", "HeuristicParallelismProvider", "OracleProvider",
    "align_cluster_tokens", "load_evidence", "write_evidence",
    "ScoreReport", "confusion_compare", "ensemble_mean", "gap_f1", "logloss", "prob_histograms",
    "AdamConfig", "AdamState", "adam_step",
    "GrepConfig", "GrepModel", "attn_pool", "cascade", "classify_grep", "forward_grep", "pool_hierarchy",
    "ProbertConfig", "ProbertModel", "classify_probert", "pool_pronoun",
    "SynthConfig", "generate_neither", "generate_neither_corpus", "generate_synthetic",
    "TokenizedExample", "Vocab", "build_vocab", "tokenize",
    "Dataset", "TrainConfig", "build_model", "kfold_ensemble", "prepare_dataset", "train",
    "__version__",
]
