"""GAP-format corpus handling: parsing, labels, mention tags, corrections.

The corpus format is the tab-separated GAP layout (ID, Text, Pronoun,
Pronoun-offset, A, A-offset, A-coref, B, B-offset, B-coref, URL) with
TRUE/FALSE booleans. Mention tags wrap the three labeled spans in-text with
the same sentinel on both sides: `<A> Bob Suter <A>`.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path


class ParseError(ValueError):
    """A corpus row could not be read."""


class IntegrityError(ParseError):
    """A surface string does not match the text at its offset."""


class GenderError(ParseError):
    """The pronoun is outside the gender lexicon."""


class ContradictoryGoldError(ValueError):
    """Both coreference flags are set."""


class TaggingError(ValueError):
    """Mention spans overlap; the sample cannot be tagged."""


class CorrectionError(ValueError):
    """A correction record does not apply to the corpus."""


class Label(IntEnum):
    A = 0
    B = 1
    NEITHER = 2


MASCULINE = "M"
FEMININE = "F"

# Gender is defined by the pronoun's surface form.
GENDER_BY_PRONOUN = {
    "he": MASCULINE,
    "him": MASCULINE,
    "his": MASCULINE,
    "she": FEMININE,
    "her": FEMININE,
    "hers": FEMININE,
}

GAP_COLUMNS = ["ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset", "A-coref", "B", "B-offset", "B-coref", "URL"]

PRONOUN_TAG = "<P>"
A_TAG = "<A>"
B_TAG = "<B>"


@dataclass(frozen=True)
class Mention:
    text: str
    offset: int

    @property
    def span(self) -> tuple[int, int]:
        return self.offset, self.offset + len(self.text)


@dataclass(frozen=True)
class GapSample:
    id: str
    text: str
    pronoun: Mention
    a: Mention
    b: Mention
    a_coref: bool
    b_coref: bool
    url: str = ""

    @property
    def gender(self) -> str:
        return GENDER_BY_PRONOUN[self.pronoun.text.lower()]

    @property
    def label(self) -> Label:
        return derive_label(self.a_coref, self.b_coref)

    def validate(self) -> None:
        for name, m in (("Pronoun", self.pronoun), ("A", self.a), ("B", self.b)):
            lo, hi = m.span
            if lo < 0 or hi > len(self.text) or self.text[lo:hi] != m.text:
                raise IntegrityError(f"sample {self.id}: {name} surface {m.text!r} does not match text at offset {m.offset}")
        if self.pronoun.text.lower() not in GENDER_BY_PRONOUN:
            raise GenderError(f"sample {self.id}: pronoun {self.pronoun.text!r} not in gender lexicon")
        derive_label(self.a_coref, self.b_coref)

    def with_label(self, label: Label) -> "GapSample":
        return replace(self, a_coref=label == Label.A, b_coref=label == Label.B)


def derive_label(a_coref: bool, b_coref: bool) -> Label:
    if a_coref and b_coref:
        raise ContradictoryGoldError("a sample cannot corefer with both candidates")
    if a_coref:
        return Label.A
    if b_coref:
        return Label.B
    return Label.NEITHER


def _parse_bool(raw: str, row: int, column: str) -> bool:
    v = raw.strip().upper()
    if v == "TRUE":
        return True
    if v == "FALSE":
        return False
    raise ParseError(f"row {row}: column {column} must be TRUE/FALSE, got {raw!r}")


def _parse_int(raw: str, row: int, column: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"row {row}: column {column} must be an integer, got {raw!r}") from None


def parse_tsv(path: str | Path) -> list[GapSample]:
    """Read a GAP TSV file, validating offsets, flags, and pronoun gender."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split("\t")
    if header != GAP_COLUMNS:
        raise ParseError(f"{path}: header {header} does not match the GAP column set")
    samples = []
    for row, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != len(GAP_COLUMNS):
            raise ParseError(f"row {row}: expected {len(GAP_COLUMNS)} columns, got {len(cols)}")
        sid, text, pron, pron_off, a, a_off, a_coref, b, b_off, b_coref, url = cols
        sample = GapSample(
            id=sid,
            text=text,
            pronoun=Mention(pron, _parse_int(pron_off, row, "Pronoun-offset")),
            a=Mention(a, _parse_int(a_off, row, "A-offset")),
            b=Mention(b, _parse_int(b_off, row, "B-offset")),
            a_coref=_parse_bool(a_coref, row, "A-coref"),
            b_coref=_parse_bool(b_coref, row, "B-coref"),
            url=url,
        )
        try:
            sample.validate()
        except (IntegrityError, GenderError, ContradictoryGoldError) as e:
            raise type(e)(f"row {row}: {e}") from None
        samples.append(sample)
    return samples


def write_tsv(path: str | Path, samples: list[GapSample]) -> None:
    out = ["\t".join(GAP_COLUMNS)]
    for s in samples:
        out.append(
            "\t".join(
                [
                    s.id,
                    s.text,
                    s.pronoun.text,
                    str(s.pronoun.offset),
                    s.a.text,
                    str(s.a.offset),
                    "TRUE" if s.a_coref else "FALSE",
                    s.b.text,
                    str(s.b.offset),
                    "TRUE" if s.b_coref else "FALSE",
                    s.url,
                ]
            )
        )
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Mention tags


@dataclass
class TaggedSample:
    """A sample's text with sentinel tags around P/A/B plus the offset maps."""

    original: GapSample
    text: str
    pronoun_span: tuple[int, int]
    a_span: tuple[int, int]
    b_span: tuple[int, int]
    # (original position, length, is_end) per insertion, sorted
    _insertions: list[tuple[int, int, bool]] = field(default_factory=list)
    # (tagged position, length) per insertion, for stripping
    _tagged_insertions: list[tuple[int, int]] = field(default_factory=list)

    @property
    def id(self) -> str:
        return self.original.id

    def map_offset(self, offset: int) -> int:
        """Original char offset -> tagged char offset (start-of-span rule)."""
        shift = sum(ln for pos, ln, _ in self._insertions if pos <= offset)
        return offset + shift

    def map_span(self, offset: int, length: int) -> tuple[int, int]:
        """Original (offset, length) -> tagged (offset, length).

        A span that straddles an insertion point grows to include the
        inserted tag text; the three labeled spans never do.
        """
        start = self.map_offset(offset)
        end = offset + length + sum(ln for pos, ln, _ in self._insertions if pos < offset + length)
        return start, end - start

    def strip(self) -> str:
        """Remove the inserted tags; returns the original text."""
        out = []
        cursor = 0
        for pos, ln in self._tagged_insertions:
            out.append(self.text[cursor:pos])
            cursor = pos + ln
        out.append(self.text[cursor:])
        return "".join(out)


def insert_mention_tags(sample: GapSample) -> TaggedSample:
    """Wrap the three labeled spans with their sentinel tags.

    The same tag token is used on both sides of a span. Tags are inserted
    with a separating space toward the span (`<A> Bob Suter <A>`); text
    directly abutting a span keeps abutting the tag, as in `Dehner <B>'s`.
    """
    spans = {
        PRONOUN_TAG: sample.pronoun.span,
        A_TAG: sample.a.span,
        B_TAG: sample.b.span,
    }
    ordered = sorted(spans.items(), key=lambda kv: kv[1])
    for (t1, s1), (t2, s2) in zip(ordered, ordered[1:]):
        if s1[1] > s2[0]:
            raise TaggingError(f"sample {sample.id}: spans {t1}{s1} and {t2}{s2} overlap")

    # End insertions sort before start insertions at the same position so
    # adjacent spans close before the next one opens.
    insertions = []
    for tag, (start, end) in spans.items():
        insertions.append((start, tag + " ", False))
        insertions.append((end, " " + tag, True))
    insertions.sort(key=lambda item: (item[0], item[2] is False))

    pieces = []
    cursor = 0
    tagged_insertions = []
    new_len = 0
    for pos, text, _ in insertions:
        pieces.append(sample.text[cursor:pos])
        new_len += pos - cursor
        tagged_insertions.append((new_len, len(text)))
        pieces.append(text)
        new_len += len(text)
        cursor = pos
    pieces.append(sample.text[cursor:])
    tagged_text = "".join(pieces)

    record = [(pos, len(text), is_end) for pos, text, is_end in insertions]
    tagged = TaggedSample(
        original=sample,
        text=tagged_text,
        pronoun_span=(0, 0),
        a_span=(0, 0),
        b_span=(0, 0),
        _insertions=record,
        _tagged_insertions=tagged_insertions,
    )
    tagged.pronoun_span = tagged.map_span(sample.pronoun.offset, len(sample.pronoun.text))
    tagged.a_span = tagged.map_span(sample.a.offset, len(sample.a.text))
    tagged.b_span = tagged.map_span(sample.b.offset, len(sample.b.text))
    # Normalize to (start, end) form.
    tagged.pronoun_span = (tagged.pronoun_span[0], tagged.pronoun_span[0] + tagged.pronoun_span[1])
    tagged.a_span = (tagged.a_span[0], tagged.a_span[0] + tagged.a_span[1])
    tagged.b_span = (tagged.b_span[0], tagged.b_span[0] + tagged.b_span[1])
    return tagged


def tag_corpus(samples: list[GapSample]) -> tuple[list[TaggedSample], int]:
    """Tag every sample; overlapping-span samples are quarantined, not fatal."""
    tagged, skipped = [], 0
    for s in samples:
        try:
            tagged.append(insert_mention_tags(s))
        except TaggingError:
            skipped += 1
    return tagged, skipped


# ---------------------------------------------------------------------------
# Label corrections


@dataclass(frozen=True)
class CorrectionRecord:
    sample_id: str
    old_label: Label
    new_label: Label
    note: str = ""
    timestamp: str = ""

    def __post_init__(self):
        if self.old_label == self.new_label:
            raise CorrectionError(f"correction for {self.sample_id}: old and new label are both {self.old_label.name}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "old_label": self.old_label.name,
                "new_label": self.new_label.name,
                "note": self.note,
                "timestamp": self.timestamp,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "CorrectionRecord":
        raw = json.loads(line)
        return cls(
            sample_id=raw["sample_id"],
            old_label=Label[raw["old_label"]],
            new_label=Label[raw["new_label"]],
            note=raw.get("note", ""),
            timestamp=raw.get("timestamp", ""),
        )


def now_timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def load_corrections(path: str | Path) -> list[CorrectionRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(CorrectionRecord.from_json(line))
    return records


def append_correction(path: str | Path, record: CorrectionRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")
        fh.flush()


@dataclass
class DeltaReport:
    """Per-class label movements in before/after form."""

    before: dict[Label, int]
    after: dict[Label, int]
    moved_out: dict[Label, int]
    moved_in: dict[Label, int]

    def cell(self, label: Label) -> str:
        return f"{self.after[label]}(-{self.moved_out[label]})(+{self.moved_in[label]})"

    def format_table(self, name: str = "corpus") -> str:
        labels = [Label.A, Label.B, Label.NEITHER]
        total = sum(self.before.values())
        head = f"{'':16}" + "".join(f"{l.name:>16}" for l in labels) + f"{'Total':>10}"
        before = f"{name + ' before':16}" + "".join(f"{self.before[l]:>16}" for l in labels) + f"{total:>10}"
        after = f"{name + ' after':16}" + "".join(f"{self.cell(l):>16}" for l in labels) + f"{sum(self.after.values()):>10}"
        return "\n".join([head, before, after])


def apply_corrections(samples: list[GapSample], corrections: list[CorrectionRecord]) -> tuple[list[GapSample], DeltaReport]:
    """Rewrite labels per the corrections ledger and report the movements.

    Each record must reference an existing sample and match its current
    label at application time (records are applied in order).
    """
    by_id = {s.id: s for s in samples}
    initial = {s.id: s.label for s in samples}
    for rec in corrections:
        if rec.sample_id not in by_id:
            raise CorrectionError(f"correction targets unknown sample {rec.sample_id!r}")
        current = by_id[rec.sample_id]
        if current.label != rec.old_label:
            raise CorrectionError(
                f"stale correction for {rec.sample_id}: expected current label {rec.old_label.name}, found {current.label.name}"
            )
        by_id[rec.sample_id] = current.with_label(rec.new_label)

    corrected = [by_id[s.id] for s in samples]
    before = {l: 0 for l in Label}
    after = {l: 0 for l in Label}
    moved_out = {l: 0 for l in Label}
    moved_in = {l: 0 for l in Label}
    for s in samples:
        before[initial[s.id]] += 1
    for s in corrected:
        after[s.label] += 1
        if s.label != initial[s.id]:
            moved_out[initial[s.id]] += 1
            moved_in[s.label] += 1
    return corrected, DeltaReport(before=before, after=after, moved_out=moved_out, moved_in=moved_in)
