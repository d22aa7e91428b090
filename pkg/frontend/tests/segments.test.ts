import { describe, expect, it } from "vitest";

import { buildSegments, sampleDecorations } from "../src/segments.js";

const TEXT = "Elena met Dana while the curator waited. Later she signed.";

describe("buildSegments", () => {
  it("tiles the text exactly", () => {
    const segments = buildSegments(TEXT.length, [
      { start: 0, end: 5, cls: "mention-a" },
      { start: 10, end: 14, cls: "mention-b" },
    ]);
    const rebuilt = segments.map((s) => TEXT.slice(s.start, s.end)).join("");
    expect(rebuilt).toBe(TEXT);
    for (let i = 1; i < segments.length; i++) {
      expect(segments[i].start).toBe(segments[i - 1].end);
    }
  });

  it("stacks overlapping decorations on the shared run", () => {
    const segments = buildSegments(20, [
      { start: 2, end: 10, cls: "cluster-0" },
      { start: 6, end: 14, cls: "cluster-1" },
    ]);
    const shared = segments.find((s) => s.start === 6 && s.end === 10);
    expect(shared?.classes).toEqual(["cluster-0", "cluster-1"]);
    const only0 = segments.find((s) => s.start === 2 && s.end === 6);
    expect(only0?.classes).toEqual(["cluster-0"]);
  });

  it("uses server offsets verbatim and rejects out-of-bounds ranges", () => {
    expect(() => buildSegments(10, [{ start: 4, end: 12, cls: "x" }])).toThrow(/out of bounds/);
    expect(() => buildSegments(10, [{ start: 5, end: 5, cls: "x" }])).toThrow();
  });

  it("handles zero decorations", () => {
    expect(buildSegments(8, [])).toEqual([{ start: 0, end: 8, classes: [] }]);
  });
});

describe("sampleDecorations", () => {
  const spans = {
    pronoun: { offset: 47, text: "she" },
    a: { offset: 0, text: "Elena" },
    b: { offset: 10, text: "Dana" },
  };
  const providers = [
    { provider: "oracle", color: 0, mentions: [{ offset: 0, length: 5 }] },
    { provider: "noisy", color: 1, mentions: [{ offset: 10, length: 4 }] },
  ];

  it("always includes the three labeled spans", () => {
    const decorations = sampleDecorations(spans, providers, new Set());
    expect(decorations.map((d) => d.cls)).toEqual(["mention-p", "mention-a", "mention-b"]);
  });

  it("adds only visible provider layers with their color class", () => {
    const decorations = sampleDecorations(spans, providers, new Set(["noisy"]));
    const clusterClasses = decorations.filter((d) => d.cls.startsWith("cluster-"));
    expect(clusterClasses).toEqual([{ start: 10, end: 14, cls: "cluster-1" }]);
  });

  it("respects the provider color index for toggled layers", () => {
    const decorations = sampleDecorations(spans, providers, new Set(["oracle", "noisy"]));
    const classes = decorations.filter((d) => d.cls.startsWith("cluster-")).map((d) => d.cls);
    expect(classes).toEqual(["cluster-0", "cluster-1"]);
  });
});
