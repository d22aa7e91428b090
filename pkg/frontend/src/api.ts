/** Typed client for the review service. The only mutating call is
 * submitCorrection; a same-label submission is rejected client-side before
 * any network traffic. */

import type { CorrectionResponse, LabelName, Metrics, SampleDetail, SampleListing } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(resp.status, (body as { error?: string }).error ?? `HTTP ${resp.status}`);
    }
    return body as T;
  }

  listSamples(page = 1, pageSize = 200): Promise<SampleListing> {
    return this.request(`/samples?page=${page}&page_size=${pageSize}`);
  }

  getSample(id: string): Promise<SampleDetail> {
    return this.request(`/samples/${encodeURIComponent(id)}`);
  }

  async submitCorrection(
    id: string,
    currentLabel: LabelName,
    newLabel: LabelName,
    note: string,
  ): Promise<CorrectionResponse> {
    if (newLabel === currentLabel) {
      throw new ApiError(0, "the sample already has that label");
    }
    return this.request(`/samples/${encodeURIComponent(id)}/label`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ new_label: newLabel, note }),
    });
  }

  metrics(): Promise<Metrics> {
    return this.request("/metrics");
  }

  health(): Promise<{ status: string; samples: number }> {
    return this.request("/health");
  }
}
