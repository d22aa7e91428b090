/** Payload shapes of the review service JSON API. */

export type LabelName = "A" | "B" | "NEITHER";

export interface SampleSummary {
  id: string;
  label: LabelName;
  gold_label: LabelName;
  gender: string;
  corrected: boolean;
}

export interface SampleListing {
  total: number;
  page: number;
  page_size: number;
  samples: SampleSummary[];
}

export interface SpanInfo {
  text: string;
  offset: number;
}

export interface MentionSpan {
  offset: number;
  length: number;
  text?: string;
}

export interface ProviderClusters {
  provider: string;
  color: number;
  mentions: MentionSpan[];
}

export interface TraceProvider {
  provider: string;
  weight: number;
  cluster_weights: number[];
  mention_weights: number[];
  mentions: MentionSpan[];
}

export interface Trace {
  providers: TraceProvider[];
  evidence_vector: number[];
}

export interface SampleDetail {
  id: string;
  text: string;
  url: string;
  gender: string;
  spans: { pronoun: SpanInfo; a: SpanInfo; b: SpanInfo };
  gold_label: LabelName;
  current_label: LabelName;
  corrected: boolean;
  providers: ProviderClusters[];
  trace: Trace | null;
  probs: { probert: number[] | null; grep: number[] | null };
}

export interface CorrectionResponse {
  ok: boolean;
  record: {
    sample_id: string;
    old_label: LabelName;
    new_label: LabelName;
    note: string;
    timestamp: string;
  };
}

export interface Metrics {
  f1_m: number;
  f1_f: number;
  bias: number;
  f1_overall: number;
  logloss: number | null;
  per_class: Record<string, number>;
}
