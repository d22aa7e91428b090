/** DOM rendering for the review page. All state changes flow through the
 * ApiClient; rendering is a pure function of the fetched payloads plus the
 * local layer-visibility toggles. */

import { buildHeatmap, probabilityRows } from "./heatmap.js";
import { buildSegments, sampleDecorations } from "./segments.js";
import type { LabelName, SampleDetail, SampleSummary } from "./types.js";

const LABELS: LabelName[] = ["A", "B", "NEITHER"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderSampleList(
  container: HTMLElement,
  samples: SampleSummary[],
  activeId: string | null,
  onPick: (id: string) => void,
): void {
  container.replaceChildren();
  for (const s of samples) {
    const row = el("button", "sample-row" + (s.id === activeId ? " active" : ""));
    row.append(
      el("span", "sample-id", s.id),
      el("span", `badge label-${s.label.toLowerCase()}`, s.label),
      el("span", s.corrected ? "badge corrected" : "badge", s.corrected ? "corrected" : s.gender),
    );
    row.addEventListener("click", () => onPick(s.id));
    container.append(row);
  }
}

export function renderSnippet(container: HTMLElement, detail: SampleDetail, visible: Set<string>): void {
  container.replaceChildren();
  const decorations = sampleDecorations(detail.spans, detail.providers, visible);
  for (const seg of buildSegments(detail.text.length, decorations)) {
    const span = el("span", seg.classes.join(" ") || undefined);
    span.textContent = detail.text.slice(seg.start, seg.end);
    container.append(span);
  }
}

export function renderLayerToggles(
  container: HTMLElement,
  detail: SampleDetail,
  visible: Set<string>,
  onChange: () => void,
): void {
  container.replaceChildren();
  if (detail.providers.length === 0) {
    container.append(el("span", "placeholder", "no evidence for this sample"));
    return;
  }
  for (const p of detail.providers) {
    const label = el("label", `layer-toggle cluster-chip-${p.color}`);
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = visible.has(p.provider);
    box.addEventListener("change", () => {
      if (box.checked) visible.add(p.provider);
      else visible.delete(p.provider);
      onChange();
    });
    label.append(box, document.createTextNode(` ${p.provider} (${p.mentions.length})`));
    container.append(label);
  }
}

export function renderProbabilities(container: HTMLElement, detail: SampleDetail): void {
  container.replaceChildren();
  const rows = probabilityRows(detail.probs);
  if (rows.length === 0) {
    container.append(el("div", "placeholder", "no model predictions loaded"));
    return;
  }
  const table = el("table", "prob-table");
  const head = el("tr");
  head.append(el("th"), el("th", undefined, "P(A)"), el("th", undefined, "P(B)"), el("th", undefined, "P(NEITHER)"));
  table.append(head);
  for (const row of rows) {
    const tr = el("tr");
    tr.append(el("td", "model-name", row.model));
    for (const v of row.values) tr.append(el("td", "prob", v));
    table.append(tr);
  }
  container.append(table);
}

export function renderHeatmaps(container: HTMLElement, detail: SampleDetail): void {
  container.replaceChildren();
  const data = buildHeatmap(detail.trace, detail.text);
  if (data.empty) {
    container.append(el("div", "placeholder", "no evidence"));
    return;
  }
  const providerBlock = el("div", "heatmap-block");
  providerBlock.append(el("h4", undefined, "weight per evidence source"));
  const row = el("div", "heat-row");
  for (const cell of data.providerRow) {
    const c = el("div", "heat-cell", `${cell.label} ${cell.value.toFixed(2)}`);
    c.style.setProperty("--heat", cell.intensity.toFixed(3));
    row.append(c);
  }
  providerBlock.append(row);
  container.append(providerBlock);

  const mentionBlock = el("div", "heatmap-block");
  mentionBlock.append(el("h4", undefined, "weight per mention within each cluster"));
  for (const mr of data.mentionRows) {
    const line = el("div", "heat-row");
    line.append(el("span", "heat-provider", mr.provider));
    for (const cell of mr.cells) {
      const c = el("div", "heat-cell", `${cell.label} ${cell.value.toFixed(2)}`);
      c.style.setProperty("--heat", cell.intensity.toFixed(3));
      line.append(c);
    }
    mentionBlock.append(line);
  }
  container.append(mentionBlock);
}

export interface CorrectionFormHooks {
  onSubmit: (newLabel: LabelName, note: string) => void;
}

export function renderCorrectionForm(container: HTMLElement, detail: SampleDetail, hooks: CorrectionFormHooks): void {
  container.replaceChildren();
  const status = el(
    "div",
    detail.corrected ? "status corrected" : "status",
    `gold: ${detail.gold_label} / current: ${detail.current_label}` + (detail.corrected ? " (corrected)" : ""),
  );
  container.append(status);
  const form = el("form", "correction-form");
  const select = document.createElement("select");
  for (const label of LABELS) {
    const opt = document.createElement("option");
    opt.value = label;
    opt.textContent = label;
    opt.disabled = label === detail.current_label;
    select.append(opt);
  }
  const firstEnabled = LABELS.find((l) => l !== detail.current_label);
  if (firstEnabled) select.value = firstEnabled;
  const note = document.createElement("input");
  note.type = "text";
  note.placeholder = "annotator note";
  const submit = el("button", "submit", "correct label");
  submit.type = "submit";
  form.append(select, note, submit);
  form.addEventListener("submit", (e) => {
    e.preventDefault();
    hooks.onSubmit(select.value as LabelName, note.value);
  });
  container.append(form);
}

export function renderBanner(container: HTMLElement, message: string | null, onRetry?: () => void): void {
  container.replaceChildren();
  if (!message) return;
  const banner = el("div", "banner", message);
  if (onRetry) {
    const retry = el("button", "retry", "retry");
    retry.addEventListener("click", onRetry);
    banner.append(retry);
  }
  container.append(banner);
}
