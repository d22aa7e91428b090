/** Snippet decoration: split text into styled runs from server-provided
 * char ranges. Offsets are used exactly as sent — the client never
 * re-tokenizes or re-measures the text. */

export interface Decoration {
  start: number;
  end: number;
  cls: string;
}

export interface Segment {
  start: number;
  end: number;
  classes: string[];
}

/** Partition [0, length) into maximal runs with a constant decoration set.
 * Segments tile the text: concatenating them reproduces it exactly. */
export function buildSegments(length: number, decorations: Decoration[]): Segment[] {
  const cuts = new Set<number>([0, length]);
  for (const d of decorations) {
    if (d.start < 0 || d.end > length || d.start >= d.end) {
      throw new Error(`decoration ${d.cls} [${d.start}, ${d.end}) out of bounds for length ${length}`);
    }
    cuts.add(d.start);
    cuts.add(d.end);
  }
  const points = [...cuts].sort((a, b) => a - b);
  const segments: Segment[] = [];
  for (let i = 0; i + 1 < points.length; i++) {
    const start = points[i];
    const end = points[i + 1];
    const classes = decorations.filter((d) => d.start <= start && d.end >= end).map((d) => d.cls);
    segments.push({ start, end, classes });
  }
  return segments;
}

export interface DetailSpans {
  pronoun: { offset: number; text: string };
  a: { offset: number; text: string };
  b: { offset: number; text: string };
}

/** Decorations for the three labeled spans plus each visible provider's
 * cluster mentions (one css class per provider color index). */
export function sampleDecorations(
  spans: DetailSpans,
  providers: { color: number; provider: string; mentions: { offset: number; length: number }[] }[],
  visible: Set<string>,
): Decoration[] {
  const out: Decoration[] = [
    { start: spans.pronoun.offset, end: spans.pronoun.offset + spans.pronoun.text.length, cls: "mention-p" },
    { start: spans.a.offset, end: spans.a.offset + spans.a.text.length, cls: "mention-a" },
    { start: spans.b.offset, end: spans.b.offset + spans.b.text.length, cls: "mention-b" },
  ];
  for (const p of providers) {
    if (!visible.has(p.provider)) continue;
    for (const m of p.mentions) {
      out.push({ start: m.offset, end: m.offset + m.length, cls: `cluster-${p.color}` });
    }
  }
  return out;
}
