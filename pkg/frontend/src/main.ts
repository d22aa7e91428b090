/** Page bootstrap: load the corpus listing, drive the review queue, and
 * wire the correction form. Optimistic status updates are rolled back when
 * the service rejects a submission. */

import { ApiClient, ApiError } from "./api.js";
import { ReviewQueue } from "./queue.js";
import {
  renderBanner,
  renderCorrectionForm,
  renderHeatmaps,
  renderLayerToggles,
  renderProbabilities,
  renderSampleList,
  renderSnippet,
} from "./render.js";
import type { LabelName, SampleDetail, SampleSummary } from "./types.js";

const api = new ApiClient("");

interface AppState {
  samples: SampleSummary[];
  queue: ReviewQueue;
  current: SampleDetail | null;
  visibleLayers: Set<string>;
}

const state: AppState = {
  samples: [],
  queue: new ReviewQueue([]),
  current: null,
  visibleLayers: new Set(),
};

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function redrawDetail(): void {
  const detail = state.current;
  if (!detail) return;
  renderSnippet(byId("snippet"), detail, state.visibleLayers);
  renderLayerToggles(byId("layers"), detail, state.visibleLayers, redrawDetail);
  renderProbabilities(byId("probs"), detail);
  renderHeatmaps(byId("heatmaps"), detail);
  renderCorrectionForm(byId("correction"), detail, {
    onSubmit: (newLabel, note) => void submitCorrection(detail, newLabel, note),
  });
  byId("sample-title").textContent = `${detail.id} (${detail.gender})`;
}

async function openSample(id: string): Promise<void> {
  try {
    const detail = await api.getSample(id);
    state.current = detail;
    state.visibleLayers = new Set(detail.providers.map((p) => p.provider));
    renderBanner(byId("banner"), null);
    renderSampleList(byId("sample-list"), state.samples, id, pickSample);
    redrawDetail();
  } catch (e) {
    renderBanner(byId("banner"), `failed to load ${id}: ${(e as Error).message}`, () => void openSample(id));
  }
}

function pickSample(id: string): void {
  state.queue.jumpTo(id);
  void openSample(id);
}

async function submitCorrection(detail: SampleDetail, newLabel: LabelName, note: string): Promise<void> {
  const summary = state.samples.find((s) => s.id === detail.id);
  const previous = summary ? { label: summary.label, corrected: summary.corrected } : null;
  // Optimistic update, rolled back on rejection.
  if (summary) {
    summary.label = newLabel;
    summary.corrected = true;
    renderSampleList(byId("sample-list"), state.samples, detail.id, pickSample);
  }
  try {
    await api.submitCorrection(detail.id, detail.current_label, newLabel, note);
    state.queue.markCorrected(detail.id);
    const next = state.queue.next();
    if (next) {
      await openSample(next);
    } else {
      renderBanner(byId("banner"), "review pass complete — every unreviewed sample was visited once");
      await openSample(detail.id);
    }
  } catch (e) {
    if (summary && previous) {
      summary.label = previous.label;
      summary.corrected = previous.corrected;
      renderSampleList(byId("sample-list"), state.samples, detail.id, pickSample);
    }
    const message =
      e instanceof ApiError && e.status === 409
        ? "the service already has that label (no-op change rejected)"
        : `correction failed: ${(e as Error).message}`;
    renderBanner(byId("banner"), message, () => void submitCorrection(detail, newLabel, note));
  }
}

async function loadMetricsFooter(): Promise<void> {
  const footer = byId("metrics");
  try {
    const m = await api.metrics();
    footer.textContent =
      `F1 M ${(100 * m.f1_m).toFixed(1)} | F ${(100 * m.f1_f).toFixed(1)} | bias ${m.bias.toFixed(2)} | ` +
      `overall ${(100 * m.f1_overall).toFixed(1)}` +
      (m.logloss !== null ? ` | logloss ${m.logloss.toFixed(3)}` : "");
  } catch {
    footer.textContent = "no predictions loaded";
  }
}

async function boot(): Promise<void> {
  try {
    const listing = await api.listSamples(1, 500);
    state.samples = listing.samples;
    state.queue = new ReviewQueue(
      listing.samples.map((s) => s.id),
      listing.samples.filter((s) => s.corrected).map((s) => s.id),
    );
    renderSampleList(byId("sample-list"), state.samples, null, pickSample);
    const first = state.queue.next();
    if (first) await openSample(first);
    await loadMetricsFooter();
  } catch (e) {
    renderBanner(byId("banner"), `failed to reach the review service: ${(e as Error).message}`, () => void boot());
  }
}

void boot();
