"""Synthetic desk-scale corpora with known-good evidence clusters.

Two sample families share the same scene templates: "easy" samples carry a
class-specific cue adverb next to the pronoun, so the label is recoverable
from the surface; "hard" samples drop the cue, making the surface
distribution identical across classes — the label is then recoverable only
through the emitted gold evidence cluster. Every scene mentions a third
person-like role so NEITHER clusters have something to point at without
leaking through the text.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import GENDER_BY_PRONOUN, FEMININE, MASCULINE, GapSample, Label, Mention
from .evidence import EvidenceCluster

Span = tuple[int, int]

SCENES = [
    "{a} met {b} at the office while the {role} waited. After the meeting {pron} {cue}signed the papers.",
    "{a} and {b} toured the facility with the {role}. Before lunch {pron} {cue}approved the budget.",
    "{a} visited {b} at the studio where the {role} worked. Later that day {pron} {cue}reviewed the notes.",
    "{a} interviewed {b} while the {role} listened. That evening {pron} {cue}drafted the report.",
]

CUES = {Label.A: "certainly ", Label.B: "reportedly ", Label.NEITHER: "allegedly "}

NAMES_M = [
    "Adam", "Brian", "Carl", "David", "Edward", "Frank", "George", "Henry", "Ivan", "James",
    "Kevin", "Louis", "Martin", "Nathan", "Oscar", "Peter", "Robert", "Samuel", "Thomas", "Victor",
]
NAMES_F = [
    "Alice", "Bella", "Clara", "Diana", "Ellen", "Fiona", "Grace", "Helen", "Irene", "Julia",
    "Karen", "Laura", "Maria", "Nina", "Olivia", "Paula", "Rachel", "Sarah", "Teresa", "Vera",
]
SURNAMES = ["Park", "Reed", "Cole", "Hayes", "Monroe", "Ford", "Lane", "Brooks"]
ROLES = ["manager", "director", "supervisor", "curator", "editor", "producer"]


class SynthesisError(ValueError):
    pass


@dataclass
class SynthConfig:
    scenes: list[str] = field(default_factory=lambda: list(SCENES))
    cues: dict[Label, str] = field(default_factory=lambda: dict(CUES))
    names_m: list[str] = field(default_factory=lambda: list(NAMES_M))
    names_f: list[str] = field(default_factory=lambda: list(NAMES_F))
    surnames: list[str] = field(default_factory=lambda: list(SURNAMES))
    roles: list[str] = field(default_factory=lambda: list(ROLES))
    hard_fraction: float = 0.5
    class_mix: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    surname_rate: float = 0.3

    def validate(self) -> None:
        if len(self.scenes) < 2:
            raise SynthesisError("need at least 2 templates per class")
        for label in Label:
            if label not in self.cues:
                raise SynthesisError(f"no cue configured for class {label.name}")


@dataclass
class SyntheticCorpus:
    samples: list[GapSample]
    gold_evidence: dict[str, tuple[Span, ...]]
    meta: dict[str, dict]

    def gold_clusters(self) -> list[EvidenceCluster]:
        return [
            EvidenceCluster(provider="oracle", sample_id=sid, mentions=mentions)
            for sid, mentions in self.gold_evidence.items()
        ]

    def hard_ids(self) -> set[str]:
        return {sid for sid, m in self.meta.items() if m["difficulty"] == "hard"}


def _fill(template: str, values: dict[str, str]) -> tuple[str, dict[str, Span]]:
    """Fill {slot} markers, tracking each slot's (offset, length)."""
    out = []
    spans: dict[str, Span] = {}
    pos = 0
    cursor = 0
    while True:
        start = template.find("{", cursor)
        if start == -1:
            out.append(template[cursor:])
            break
        end = template.index("}", start)
        literal = template[cursor:start]
        out.append(literal)
        pos += len(literal)
        slot = template[start + 1:end]
        value = values[slot]
        out.append(value)
        spans[slot] = (pos, len(value))
        pos += len(value)
        cursor = end + 1
    return "".join(out), spans


def _largest_remainder(total: int, weights: list[float]) -> list[int]:
    raw = [total * w for w in weights]
    counts = [int(x) for x in raw]
    rem = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (raw[i] - counts[i]), reverse=True)
    for i in order[:rem]:
        counts[i] += 1
    return counts


def _pick_name(pool: list[str], config: SynthConfig, rng: np.random.Generator) -> str:
    name = pool[int(rng.integers(len(pool)))]
    if rng.random() < config.surname_rate:
        name += " " + config.surnames[int(rng.integers(len(config.surnames)))]
    return name


def _make_sample(
    sid: str,
    label: Label,
    gender: str,
    hard: bool,
    config: SynthConfig,
    rng: np.random.Generator,
) -> tuple[GapSample, dict[str, Span]]:
    scene = config.scenes[int(rng.integers(len(config.scenes)))]
    pool = config.names_m if gender == MASCULINE else config.names_f
    a_name = _pick_name(pool, config, rng)
    b_name = _pick_name(pool, config, rng)
    while b_name.split()[0] == a_name.split()[0]:
        b_name = _pick_name(pool, config, rng)
    role = config.roles[int(rng.integers(len(config.roles)))]
    pron = "he" if gender == MASCULINE else "she"
    cue = "" if hard else config.cues[label]
    text, spans = _fill(scene, {"a": a_name, "b": b_name, "role": role, "pron": pron, "cue": cue})

    sample = GapSample(
        id=sid,
        text=text,
        pronoun=Mention(pron, spans["pron"][0]),
        a=Mention(a_name, spans["a"][0]),
        b=Mention(b_name, spans["b"][0]),
        a_coref=label == Label.A,
        b_coref=label == Label.B,
        url="synthetic://" + sid,
    )
    return sample, spans


def _gold_cluster(label: Label, spans: dict[str, Span]) -> tuple[Span, ...]:
    # The oracle emits the clean antecedent set and leaves the queried
    # pronoun out; providers are allowed to differ on pronoun inclusion and
    # the corrupting wrapper exercises the other convention.
    antecedent = {Label.A: spans["a"], Label.B: spans["b"], Label.NEITHER: spans["role"]}[label]
    return (antecedent,)


def generate_synthetic(size: int, config: SynthConfig | None = None, seed: int = 0, id_prefix: str = "synth") -> SyntheticCorpus:
    """Template-filled corpus; labels, names, and templates drawn independently."""
    config = config or SynthConfig()
    config.validate()
    if size < 6:
        raise SynthesisError(f"size must be at least 6 to cover classes x genders, got {size}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(11,)))

    class_counts = _largest_remainder(size, list(config.class_mix))
    cells: list[tuple[Label, str, bool]] = []
    odd_toggle = 0
    for label, count in zip(Label, class_counts):
        m_count = count // 2
        if count % 2:
            m_count += odd_toggle
            odd_toggle = 1 - odd_toggle
        for gender, g_count in ((MASCULINE, m_count), (FEMININE, count - m_count)):
            hard_count = int(round(g_count * config.hard_fraction))
            cells += [(label, gender, True)] * hard_count
            cells += [(label, gender, False)] * (g_count - hard_count)
    order = rng.permutation(len(cells))

    samples: list[GapSample] = []
    gold: dict[str, tuple[Span, ...]] = {}
    meta: dict[str, dict] = {}
    counters = {"easy": 0, "hard": 0}
    for idx in order:
        label, gender, hard = cells[idx]
        difficulty = "hard" if hard else "easy"
        counters[difficulty] += 1
        sid = f"{id_prefix}-{difficulty[0]}-{counters[difficulty]:05d}"
        sample, spans = _make_sample(sid, label, gender, hard, config, rng)
        samples.append(sample)
        gold[sid] = _gold_cluster(label, spans)
        meta[sid] = {"difficulty": difficulty, "label": label.name, "gender": gender}
    return SyntheticCorpus(samples=samples, gold_evidence=gold, meta=meta)


def label_from_evidence(sample: GapSample, mentions: tuple[Span, ...]) -> Label:
    """Decode the label an evidence cluster implies (resolvability oracle)."""
    spans = {m for m in mentions}
    if (sample.a.offset, len(sample.a.text)) in spans:
        return Label.A
    if (sample.b.offset, len(sample.b.text)) in spans:
        return Label.B
    return Label.NEITHER


# ---------------------------------------------------------------------------
# NEITHER-row generation from document clusters


@dataclass
class Document:
    """A text with provider-style clusters of (offset, length) mentions."""

    text: str
    clusters: list[tuple[Span, ...]]

    def surface(self, span: Span) -> str:
        return self.text[span[0]:span[0] + span[1]]


def make_documents(count: int, config: SynthConfig | None = None, seed: int = 0) -> list[Document]:
    """Multi-snippet documents used to drive NEITHER-row generation."""
    config = config or SynthConfig()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(12,)))
    docs = []
    for _ in range(count):
        parts: list[str] = []
        clusters: list[tuple[Span, ...]] = []
        offset = 0
        for _snippet in range(int(rng.integers(2, 4))):
            label = Label(int(rng.integers(3)))
            gender = MASCULINE if rng.random() < 0.5 else FEMININE
            sample, spans = _make_sample("doc", label, gender, hard=bool(rng.random() < 0.5), config=config, rng=rng)
            shift = lambda sp: (sp[0] + offset, sp[1])
            # The pronoun clusters with its antecedent; everything else is a
            # singleton.
            antecedent = {Label.A: spans["a"], Label.B: spans["b"], Label.NEITHER: spans["role"]}[label]
            pron_cluster = tuple(sorted([spans["pron"], antecedent]))
            clusters.append(tuple(shift(sp) for sp in pron_cluster))
            in_cluster = set(pron_cluster)
            for m in (sample.a, sample.b):
                span = (m.offset, len(m.text))
                if span not in in_cluster:
                    clusters.append((shift(span),))
            parts.append(sample.text)
            offset += len(sample.text) + 1
        docs.append(Document(text=" ".join(parts), clusters=clusters))
    return docs


def _sentence_bounds(text: str, lo: int, hi: int) -> tuple[int, int]:
    """Smallest window covering [lo, hi), padded by one sentence each side."""
    stops = [i for i, ch in enumerate(text) if ch == "."]
    starts = [0] + [i + 2 for i in stops if i + 2 < len(text)]
    left_candidates = [s for s in starts if s <= lo]
    start = left_candidates[-2] if len(left_candidates) >= 2 else 0
    right_candidates = [i + 1 for i in stops if i + 1 >= hi]
    end = right_candidates[1] if len(right_candidates) >= 2 else len(text)
    return start, end


def generate_neither(doc: Document, rng: np.random.Generator, sid: str = "neither-0") -> GapSample | None:
    """Build a NEITHER row by drawing the pronoun and both candidates from
    pairwise-disjoint clusters; returns None when no valid triple exists."""
    pronouns = [
        (ci, span)
        for ci, cluster in enumerate(doc.clusters)
        for span in cluster
        if doc.surface(span).lower() in GENDER_BY_PRONOUN
    ]
    if not pronouns:
        return None
    order = rng.permutation(len(pronouns))
    for k in order:
        pci, pron_span = pronouns[int(k)]
        pron_cluster = set(doc.clusters[pci])

        def eligible(ci: int) -> list[Span]:
            cluster = doc.clusters[ci]
            if set(cluster) & pron_cluster:
                return []
            return [
                s
                for s in cluster
                if doc.surface(s)[:1].isupper() and doc.surface(s).lower() not in GENDER_BY_PRONOUN
            ]

        options = [(ci, spans) for ci in range(len(doc.clusters)) if ci != pci for spans in [eligible(ci)] if spans]
        if len(options) < 2:
            continue
        pick = rng.permutation(len(options))[:2]
        (ci_x, spans_x), (ci_y, spans_y) = options[int(pick[0])], options[int(pick[1])]
        if set(doc.clusters[ci_x]) & set(doc.clusters[ci_y]):
            continue
        x = spans_x[int(rng.integers(len(spans_x)))]
        y = spans_y[int(rng.integers(len(spans_y)))]

        lo = min(pron_span[0], x[0], y[0])
        hi = max(sp[0] + sp[1] for sp in (pron_span, x, y))
        start, end = _sentence_bounds(doc.text, lo, hi)
        window = doc.text[start:end]
        first, second = sorted([x, y])
        sample = GapSample(
            id=sid,
            text=window,
            pronoun=Mention(doc.surface(pron_span), pron_span[0] - start),
            a=Mention(doc.surface(first), first[0] - start),
            b=Mention(doc.surface(second), second[0] - start),
            a_coref=False,
            b_coref=False,
            url="synthetic://" + sid,
        )
        sample.validate()
        return sample
    return None


def generate_neither_corpus(
    masculine: int = 129,
    feminine: int = 124,
    config: SynthConfig | None = None,
    seed: int = 0,
) -> list[GapSample]:
    """NEITHER rows with per-gender target counts met by construction."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(13,)))
    need = {MASCULINE: masculine, FEMININE: feminine}
    rows: list[GapSample] = []
    batch = 0
    while any(v > 0 for v in need.values()):
        batch += 1
        if batch > 200:
            raise SynthesisError("could not reach the requested gender counts")
        for doc in make_documents(64, config=config, seed=seed + batch):
            if all(v <= 0 for v in need.values()):
                break
            sample = generate_neither(doc, rng, sid=f"neither-{len(rows) + 1:05d}")
            if sample is None or need[sample.gender] <= 0:
                continue
            need[sample.gender] -= 1
            rows.append(sample)
    return rows
