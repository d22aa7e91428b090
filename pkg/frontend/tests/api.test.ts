import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("blocks same-label submissions before any network call", async () => {
    const fetchSpy = vi.fn();
    const api = new ApiClient("http://x", fetchSpy);
    await expect(api.submitCorrection("s1", "A", "A", "")).rejects.toThrow(/already has/);
    expect(fetchSpy).not.toHaveBeenCalled();
  });

  it("posts the correction body the service expects", async () => {
    const fetchSpy = vi.fn(async () => jsonResponse(200, { ok: true, record: {} }));
    const api = new ApiClient("http://x", fetchSpy);
    await api.submitCorrection("s1", "A", "NEITHER", "obvious from snippet");
    expect(fetchSpy).toHaveBeenCalledWith(
      "http://x/samples/s1/label",
      expect.objectContaining({ method: "POST" }),
    );
    const init = fetchSpy.mock.calls[0][1] as RequestInit;
    expect(JSON.parse(init.body as string)).toEqual({
      new_label: "NEITHER",
      note: "obvious from snippet",
    });
  });

  it("surfaces 409 conflicts as ApiError with the server message", async () => {
    const fetchSpy = vi.fn(async () => jsonResponse(409, { error: "label is already NEITHER" }));
    const api = new ApiClient("", fetchSpy);
    const failure = api.submitCorrection("s1", "A", "NEITHER", "");
    await expect(failure).rejects.toBeInstanceOf(ApiError);
    await expect(api.submitCorrection("s1", "A", "NEITHER", "")).rejects.toThrow(/already NEITHER/);
  });

  it("parses sample listings", async () => {
    const listing = { total: 1, page: 1, page_size: 50, samples: [{ id: "s1", label: "A", gold_label: "A", gender: "F", corrected: false }] };
    const api = new ApiClient("", vi.fn(async () => jsonResponse(200, listing)));
    const got = await api.listSamples();
    expect(got.samples[0].id).toBe("s1");
  });

  it("encodes sample ids in paths", async () => {
    const fetchSpy = vi.fn(async () => jsonResponse(200, {}));
    const api = new ApiClient("", fetchSpy);
    await api.getSample("odd id/with#chars");
    expect(fetchSpy.mock.calls[0][0]).toBe("/samples/odd%20id%2Fwith%23chars");
  });
});
