/** Attention heatmap preparation: turn trace weights into renderable rows.
 * Two levels mirror the exported trace: weight per evidence source, then
 * weight per mention within each source's cluster. */

import type { Trace } from "./types.js";

export interface HeatCell {
  label: string;
  value: number;
  /** value / max(values) in its row, for color intensity in [0, 1]. */
  intensity: number;
}

export interface HeatmapData {
  providerRow: HeatCell[];
  mentionRows: { provider: string; cells: HeatCell[] }[];
  empty: boolean;
}

function cells(labels: string[], values: number[]): HeatCell[] {
  const top = Math.max(...values, 1e-12);
  return values.map((v, i) => ({ label: labels[i], value: v, intensity: v / top }));
}

export function buildHeatmap(trace: Trace | null, snippetText?: string): HeatmapData {
  if (!trace || trace.providers.length === 0) {
    return { providerRow: [], mentionRows: [], empty: true };
  }
  const providerRow = cells(
    trace.providers.map((p) => p.provider),
    trace.providers.map((p) => p.weight),
  );
  const mentionRows = trace.providers.map((p) => {
    const labels = p.mention_weights.map((_, i) => {
      const m = p.mentions[i];
      if (m && snippetText) return snippetText.slice(m.offset, m.offset + m.length);
      return m ? `@${m.offset}` : `mention ${i + 1}`;
    });
    return { provider: p.provider, cells: cells(labels, p.mention_weights) };
  });
  return { providerRow, mentionRows, empty: false };
}

export function formatProb(p: number): string {
  return p.toFixed(3);
}

/** Probability comparison rows (one per model that produced predictions). */
export function probabilityRows(probs: {
  probert: number[] | null;
  grep: number[] | null;
}): { model: string; values: string[] }[] {
  const rows: { model: string; values: string[] }[] = [];
  for (const [model, values] of [
    ["ProBERT", probs.probert],
    ["GREP", probs.grep],
  ] as const) {
    if (values) rows.push({ model, values: values.map(formatProb) });
  }
  return rows;
}
