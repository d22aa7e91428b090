"""Coreference evidence: interchange format, stand-in providers, alignment.

Evidence travels as a JSON-lines file, one cluster per line:
``{"sample_id": ..., "provider": ..., "mentions": [{"offset": o, "length": l}, ...]}``.
Providers are opaque callables; the heuristic/oracle/corrupted ones here are
desk-scale stand-ins for off-the-shelf coreference systems, which are never
executed by this package (an import path for their outputs is the file
format itself).
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import GapSample
from .tokenizer import TokenizedExample


class EvidenceFormatError(ValueError):
    pass


class OracleError(ValueError):
    """The oracle was asked about a sample without recorded gold clusters."""


@dataclass(frozen=True)
class EvidenceCluster:
    """Mentions one provider predicts coreferent with the labeled pronoun."""

    provider: str
    sample_id: str
    mentions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        cleaned = tuple(sorted(set((int(o), int(l)) for o, l in self.mentions)))
        object.__setattr__(self, "mentions", cleaned)

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "provider": self.provider,
                "mentions": [{"offset": o, "length": l} for o, l in self.mentions],
            },
            sort_keys=True,
            separators=(",", ":"),
        )


def load_evidence(
    path: str | Path,
    samples: dict[str, GapSample] | None = None,
    provider_order: list[str] | None = None,
) -> dict[str, list[EvidenceCluster]]:
    """Group evidence lines by sample with a deterministic provider order.

    Out-of-bounds clusters are dropped with a warning (when sample texts are
    available to check against); a repeated (sample, provider) line wins
    last, also with a warning.
    """
    by_key: dict[tuple[str, str], EvidenceCluster] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            cluster = EvidenceCluster(
                provider=raw["provider"],
                sample_id=raw["sample_id"],
                mentions=tuple((m["offset"], m["length"]) for m in raw["mentions"]),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise EvidenceFormatError(f"{path}:{lineno}: bad evidence line ({e})") from None
        if samples is not None and cluster.sample_id in samples:
            text_len = len(samples[cluster.sample_id].text)
            if any(o < 0 or o + l > text_len for o, l in cluster.mentions):
                warnings.warn(f"{path}:{lineno}: mention out of bounds for {cluster.sample_id}, line dropped")
                continue
        key = (cluster.sample_id, cluster.provider)
        if key in by_key:
            warnings.warn(f"{path}:{lineno}: duplicate evidence for {key}, keeping the last line")
        by_key[key] = cluster

    providers_seen = sorted({p for _, p in by_key})
    order = list(provider_order or [])
    order += [p for p in providers_seen if p not in order]
    rank = {p: i for i, p in enumerate(order)}

    grouped: dict[str, list[EvidenceCluster]] = {}
    for (sid, _), cluster in by_key.items():
        grouped.setdefault(sid, []).append(cluster)
    for sid in grouped:
        grouped[sid].sort(key=lambda c: rank[c.provider])
    return grouped


def write_evidence(path: str | Path, clusters: list[EvidenceCluster]) -> None:
    """Serialize canonically: sorted by (sample_id, provider)."""
    ordered = sorted(clusters, key=lambda c: (c.sample_id, c.provider))
    Path(path).write_text("".join(c.to_json() + "\n" for c in ordered), encoding="utf-8")


# ---------------------------------------------------------------------------
# Stand-in providers


def _sample_rng(seed: int, sample_id: str) -> np.random.Generator:
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))


class HeuristicParallelismProvider:
    """Syntactic stand-in: the candidate nearest-preceding the pronoun wins,
    falling back to nearest-following; equal distance breaks to the lower
    offset."""

    name = "heuristic"

    def __call__(self, sample: GapSample) -> EvidenceCluster:
        p = sample.pronoun.offset
        cands = [(sample.a.offset, len(sample.a.text)), (sample.b.offset, len(sample.b.text))]
        preceding = [c for c in cands if c[0] < p]
        if preceding:
            best = max(preceding, key=lambda c: c[0])
        else:
            best = min(cands, key=lambda c: (abs(c[0] - p), c[0]))
        return EvidenceCluster(provider=self.name, sample_id=sample.id, mentions=(best,))


class OracleProvider:
    """Replays recorded gold clusters (only defined for synthetic corpora)."""

    name = "oracle"

    def __init__(self, gold: dict[str, tuple[tuple[int, int], ...]]):
        self.gold = gold

    def __call__(self, sample: GapSample) -> EvidenceCluster:
        if sample.id not in self.gold:
            raise OracleError(f"no gold evidence recorded for sample {sample.id!r}")
        return EvidenceCluster(provider=self.name, sample_id=sample.id, mentions=tuple(self.gold[sample.id]))


class CorruptProvider:
    """Wraps a provider, replacing its cluster with a misleading one at the
    flip rate: the pronoun confidently clustered with the wrong candidate,
    the way an overcommitted coreference system fails."""

    def __init__(self, base, flip_rate: float, seed: int, name: str | None = None):
        if not 0.0 <= flip_rate <= 1.0:
            raise ValueError(f"flip rate must be in [0, 1], got {flip_rate}")
        self.base = base
        self.flip_rate = flip_rate
        self.seed = seed
        self.name = name or ("adversarial" if flip_rate >= 1.0 else "noisy")

    def __call__(self, sample: GapSample) -> EvidenceCluster:
        rng = _sample_rng(self.seed, sample.id)
        base_cluster = self.base(sample)
        if rng.random() >= self.flip_rate:
            return EvidenceCluster(provider=self.name, sample_id=sample.id, mentions=base_cluster.mentions)
        if sample.a_coref:
            wrong = sample.b
        elif sample.b_coref:
            wrong = sample.a
        else:
            wrong = sample.a if rng.random() < 0.5 else sample.b
        return EvidenceCluster(
            provider=self.name,
            sample_id=sample.id,
            mentions=((sample.pronoun.offset, len(sample.pronoun.text)), (wrong.offset, len(wrong.text))),
        )


def run_providers(samples: list[GapSample], providers: list) -> list[EvidenceCluster]:
    return [provider(s) for s in samples for provider in providers]


# ---------------------------------------------------------------------------
# Token alignment


@dataclass
class AlignedCluster:
    """One provider's cluster mapped to token ranges of a tokenized sample."""

    provider: str
    token_ranges: list[tuple[int, int]]
    mask: list[bool]
    dropped: int = 0
    # Original-text (offset, length) of the mentions that aligned, parallel
    # to token_ranges; kept for trace export.
    mentions_kept: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class AlignedEvidence:
    sample_id: str
    clusters: list[AlignedCluster] = field(default_factory=list)

    @property
    def provider_names(self) -> list[str]:
        return [c.provider for c in self.clusters]


def align_cluster_tokens(cluster: EvidenceCluster, tok: TokenizedExample, drop_pronoun: bool = False) -> AlignedCluster:
    """Map cluster mentions (untagged-text offsets) to minimal covering token
    ranges in the tagged tokenization; unalignable mentions are dropped and
    counted."""
    pron_span = tok.tagged.original.pronoun.span
    ranges: list[tuple[int, int]] = []
    mask: list[bool] = []
    kept: list[tuple[int, int]] = []
    dropped = 0
    for offset, length in cluster.mentions:
        if drop_pronoun and (offset, offset + length) == pron_span:
            continue
        s, ln = tok.tagged.map_span(offset, length)
        rng = tok.char_span_to_token_range(s, s + ln)
        if rng is None:
            mask.append(False)
            dropped += 1
        else:
            mask.append(True)
            ranges.append(rng)
            kept.append((offset, length))
    return AlignedCluster(provider=cluster.provider, token_ranges=ranges, mask=mask, dropped=dropped, mentions_kept=kept)


def align_evidence(
    clusters: list[EvidenceCluster],
    tok: TokenizedExample,
    drop_pronoun: bool = False,
) -> AlignedEvidence:
    return AlignedEvidence(
        sample_id=tok.id,
        clusters=[align_cluster_tokens(c, tok, drop_pronoun=drop_pronoun) for c in clusters],
    )
