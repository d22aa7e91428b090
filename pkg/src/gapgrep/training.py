"""Training loop with early stopping, plus k-fold multi-seed ensembling.

The loop shuffles mini-batches, evaluates validation log loss every
`eval_every` gradient steps, keeps the best parameter snapshot, and stops
after `patience` non-improving evaluations or `max_steps`. Cross-validation
assigns folds by seeded-hash round robin (sizes within one of each other)
and trains one model per (fold, seed), predicting both the held-out fold
and the test set.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import GapSample, insert_mention_tags, tag_corpus
from .encoder import EncoderConfig
from .evidence import AlignedEvidence, EvidenceCluster, align_evidence
from .metrics import gap_f1, logloss
from .optim import AdamConfig, AdamState, adam_step
from .pooling import GrepConfig, GrepModel
from .probert import ProbertConfig, ProbertModel
from .tokenizer import TokenizedExample, Vocab, fit_window, tokenize

STREAM_SHUFFLE = 5
STREAM_DROPOUT = 6


@dataclass
class TrainConfig:
    model: str = "grep"  # "probert" | "grep"
    encoder: EncoderConfig | None = None
    batch_size: int = 16
    lr: float = 3e-4  # toy-encoder rate; 4e-6 suits precomputed-LM runs
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-6
    weight_decay: float = 0.01
    dropout: float = 0.1
    eval_every: int = 80
    patience: int = 5
    max_steps: int = 2000
    seed: int = 42
    folds: int = 5
    bias_correction: bool = True
    ep_heads: int = 4
    re_attend: bool = False
    raw_token_keys: bool = False
    separate_pab_pool: bool = False
    drop_pronoun_mention: bool = False

    def __post_init__(self):
        if self.model not in ("probert", "grep"):
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")

    def validate_cv(self):
        if self.folds < 2:
            raise ValueError("cross-validation needs at least 2 folds")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "model", "batch_size", "lr", "beta1", "beta2", "epsilon", "weight_decay", "dropout",
            "eval_every", "patience", "max_steps", "seed", "folds", "bias_correction",
            "ep_heads", "re_attend", "raw_token_keys", "separate_pab_pool", "drop_pronoun_mention",
        )}
        out["encoder"] = self.encoder.to_dict() if self.encoder else None
        return out


def build_model(config: TrainConfig, seed: int | None = None):
    if config.encoder is None:
        raise ValueError("TrainConfig.encoder must be set to build a model")
    enc = replace(config.encoder, dropout=config.dropout)
    seed = config.seed if seed is None else seed
    if config.model == "probert":
        return ProbertModel(ProbertConfig(encoder=enc), seed=seed)
    grep_config = GrepConfig(
        encoder=enc,
        ep_heads=config.ep_heads,
        dropout=config.dropout,
        re_attend=config.re_attend,
        raw_token_keys=config.raw_token_keys,
        separate_pab_pool=config.separate_pab_pool,
        drop_pronoun_mention=config.drop_pronoun_mention,
    )
    return GrepModel(grep_config, seed=seed)


@dataclass
class Dataset:
    """Tokenized samples paired with aligned evidence, index-parallel."""

    samples: list[GapSample]
    toks: list[TokenizedExample]
    evidence: list[AlignedEvidence]

    def __len__(self) -> int:
        return len(self.toks)

    def subset(self, indices) -> "Dataset":
        return Dataset(
            samples=[self.samples[i] for i in indices],
            toks=[self.toks[i] for i in indices],
            evidence=[self.evidence[i] for i in indices],
        )

    def by_ids(self, ids: set[str]) -> "Dataset":
        return self.subset([i for i, s in enumerate(self.samples) if s.id in ids])

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def gold(self) -> np.ndarray:
        return np.array([int(t.label) for t in self.toks])


def prepare_dataset(
    samples: list[GapSample],
    vocab: Vocab,
    evidence_by_id: dict[str, list[EvidenceCluster]] | None = None,
    max_len: int = 256,
    drop_pronoun: bool = False,
) -> Dataset:
    """Tag, tokenize, window-fit, and align evidence for a corpus slice.

    Samples with overlapping spans are quarantined (dropped) as in
    tag_corpus; evidence defaults to the zero-provider path.
    """
    tagged, _skipped = tag_corpus(samples)
    kept_ids = {t.id for t in tagged}
    kept_samples = [s for s in samples if s.id in kept_ids]
    toks = [fit_window(tokenize(t, vocab), max_len) for t in tagged]
    aligned = []
    for tok in toks:
        clusters = (evidence_by_id or {}).get(tok.id, [])
        aligned.append(align_evidence(clusters, tok, drop_pronoun=drop_pronoun))
    return Dataset(samples=kept_samples, toks=toks, evidence=aligned)


@dataclass
class HistoryRow:
    step: int
    train_loss: float
    val_loss: float
    val_f1: float


@dataclass
class TrainResult:
    best_params: dict[str, np.ndarray]
    best_val_loss: float
    history: list[HistoryRow] = field(default_factory=list)
    steps: int = 0
    stopped_early: bool = False

    def history_rows(self) -> list[tuple]:
        return [(h.step, h.train_loss, h.val_loss, h.val_f1) for h in self.history]


class TrainingDiverged(RuntimeError):
    pass


def _validate(model, val: Dataset) -> tuple[float, float]:
    probs = model.predict_probs(val.toks, val.evidence)
    by_id = {s.id: probs[i] for i, s in enumerate(val.samples)}
    report = gap_f1(by_id, val.samples)
    return logloss(by_id, val.samples), report.f1_overall


def train(model, train_set: Dataset, val_set: Dataset, config: TrainConfig) -> TrainResult:
    """Optimize `model` in place; restores and returns the best snapshot."""
    overlap = set(train_set.ids) & set(val_set.ids)
    if overlap:
        raise ValueError(f"train/validation ids overlap: {sorted(overlap)[:5]}...")

    params = model.trainable_params()
    adam = AdamConfig(
        lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.epsilon,
        weight_decay=config.weight_decay, bias_correction=config.bias_correction,
    )
    state = AdamState()
    shuffle_rng = ad.rng_stream(config.seed, STREAM_SHUFFLE)
    dropout_rng = ad.rng_stream(config.seed, STREAM_DROPOUT)

    best: dict[str, np.ndarray] | None = None
    best_loss = float("inf")
    history: list[HistoryRow] = []
    bad_evals = 0
    step = 0
    running: list[float] = []
    done = False

    while not done:
        order = shuffle_rng.permutation(len(train_set))
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            toks = [train_set.toks[i] for i in idx]
            evidence = [train_set.evidence[i] for i in idx]
            gold = np.array([int(t.label) for t in toks])

            probs, _ = model.forward(toks, evidence, training=True, rng=dropout_rng)
            if not np.isfinite(probs.data).all():
                norms = {k: float(np.abs(p.grad).max()) for k, p in params.items() if p.grad is not None}
                raise TrainingDiverged(
                    f"non-finite output at step {step + 1}; batch ids {[t.id for t in toks]}; last grad norms {norms}"
                )
            loss = ad.cross_entropy(probs, gold)
            loss_val = float(loss.data)
            # Zero-fill rather than clear: parameters that a batch never
            # touches (e.g. pooling weights under single-token pronouns)
            # still reach the optimizer with a well-defined gradient.
            for p in params.values():
                p.grad = np.zeros_like(p.data)
            loss.backward()
            adam_step(params, state, adam)
            step += 1
            running.append(loss_val)

            if step % config.eval_every == 0:
                val_loss, val_f1 = _validate(model, val_set)
                history.append(HistoryRow(step=step, train_loss=float(np.mean(running)), val_loss=val_loss, val_f1=val_f1))
                running = []
                if val_loss < best_loss:
                    best_loss = val_loss
                    best = {k: p.data.copy() for k, p in model.named_params().items()}
                    bad_evals = 0
                else:
                    bad_evals += 1
                    if bad_evals >= config.patience:
                        done = True
                        break
            if step >= config.max_steps:
                done = True
                break

    if best is None:
        val_loss, val_f1 = _validate(model, val_set)
        history.append(HistoryRow(step=step, train_loss=float(np.mean(running)) if running else float("nan"), val_loss=val_loss, val_f1=val_f1))
        best_loss = val_loss
        best = {k: p.data.copy() for k, p in model.named_params().items()}

    for name, p in model.named_params().items():
        p.data[...] = best[name]
    return TrainResult(
        best_params=best,
        best_val_loss=best_loss,
        history=history,
        steps=step,
        stopped_early=bad_evals >= config.patience,
    )


# ---------------------------------------------------------------------------
# Cross-validation and ensembling


def fold_assignment(ids: list[str], folds: int, fold_seed: int) -> dict[str, int]:
    """Deterministic fold per id: seeded-hash sort, round-robin dealing.

    Fold sizes differ by at most one.
    """
    def key(sid: str) -> str:
        return hashlib.sha256(f"{fold_seed}:{sid}".encode("utf-8")).hexdigest()

    ordered = sorted(ids, key=key)
    return {sid: i % folds for i, sid in enumerate(ordered)}


@dataclass
class FoldRun:
    fold: int
    seed: int
    val_loss: float
    oof: dict[str, np.ndarray]
    test: dict[str, np.ndarray]


@dataclass
class KfoldResult:
    runs: list[FoldRun]

    def oof_by_seed(self) -> dict[int, dict[str, np.ndarray]]:
        out: dict[int, dict[str, np.ndarray]] = {}
        for run in self.runs:
            out.setdefault(run.seed, {}).update(run.oof)
        return out

    def test_sets(self) -> list[dict[str, np.ndarray]]:
        return [run.test for run in self.runs]


def save_model(outdir, model, vocab: Vocab, config: TrainConfig, steps: int = 0, extra: dict | None = None) -> None:
    """Persist a trained model as a directory: checkpoint + vocabulary."""
    from pathlib import Path

    from .checkpoint import config_hash, save_checkpoint

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    vocab.save(outdir / "vocab.json")
    meta = {
        "kind": model.kind,
        "model_config": model.config.to_dict(),
        "train_config": config.to_dict(),
        "config_hash": config_hash(config.to_dict()),
        "seed": config.seed,
        "steps": steps,
    }
    meta.update(extra or {})
    save_checkpoint(outdir / "model.ckpt", model.named_params(), meta)


def load_model(outdir):
    """Rebuild a model (and its vocabulary) from a saved directory."""
    from pathlib import Path

    from .checkpoint import load_checkpoint, restore_into

    outdir = Path(outdir)
    values, meta = load_checkpoint(outdir / "model.ckpt")
    vocab = Vocab.load(outdir / "vocab.json")
    enc_dict = dict(meta["model_config"]["encoder"])
    encoder = EncoderConfig(**enc_dict)
    if meta["kind"] == "probert":
        from .probert import ProbertConfig, ProbertModel

        model = ProbertModel(ProbertConfig(encoder=encoder, include_bias=meta["model_config"]["include_bias"]))
    else:
        mc = meta["model_config"]
        model = GrepModel(
            GrepConfig(
                encoder=encoder,
                ep_heads=mc["ep_heads"],
                dropout=mc["dropout"],
                re_attend=mc["re_attend"],
                raw_token_keys=mc["raw_token_keys"],
                separate_pab_pool=mc["separate_pab_pool"],
                drop_pronoun_mention=mc["drop_pronoun_mention"],
                include_bias=mc["include_bias"],
            )
        )
    restore_into(model.named_params(), values)
    return model, vocab, meta


def kfold_ensemble(
    dataset: Dataset,
    test_set: Dataset,
    config: TrainConfig,
    seeds: list[int],
    fold_seed: int = 0,
) -> KfoldResult:
    """Train one model per (fold, seed); collect OOF and test predictions."""
    config.validate_cv()
    assignment = fold_assignment(dataset.ids, config.folds, fold_seed)
    runs = []
    for seed in seeds:
        for fold in range(config.folds):
            held_ids = {sid for sid, f in assignment.items() if f == fold}
            train_part = dataset.by_ids(set(dataset.ids) - held_ids)
            held_part = dataset.by_ids(held_ids)
            run_config = replace(config, seed=seed)
            model = build_model(run_config, seed=seed * 1000 + fold)
            train(model, train_part, held_part, run_config)
            oof_probs = model.predict_probs(held_part.toks, held_part.evidence)
            test_probs = model.predict_probs(test_set.toks, test_set.evidence)
            runs.append(
                FoldRun(
                    fold=fold,
                    seed=seed,
                    val_loss=logloss({s.id: oof_probs[i] for i, s in enumerate(held_part.samples)}, held_part.samples),
                    oof={s.id: oof_probs[i] for i, s in enumerate(held_part.samples)},
                    test={s.id: test_probs[i] for i, s in enumerate(test_set.samples)},
                )
            )
    return KfoldResult(runs=runs)
