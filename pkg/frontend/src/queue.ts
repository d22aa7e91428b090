/** Review queue: walk the corpus visiting each unreviewed sample exactly
 * once per pass, skipping corrected ones. */

export class ReviewQueue {
  private ids: string[];
  private corrected: Set<string>;
  private visited: Set<string>;
  private cursor: number;

  constructor(ids: string[], corrected: Iterable<string> = []) {
    this.ids = [...ids];
    this.corrected = new Set(corrected);
    this.visited = new Set();
    this.cursor = -1;
  }

  get size(): number {
    return this.ids.length;
  }

  get remaining(): number {
    return this.ids.filter((id) => !this.corrected.has(id) && !this.visited.has(id)).length;
  }

  markCorrected(id: string): void {
    this.corrected.add(id);
  }

  /** Next unreviewed, unvisited sample after the cursor (wrapping once);
   * null ends the pass. */
  next(): string | null {
    const n = this.ids.length;
    for (let step = 1; step <= n; step++) {
      const idx = (this.cursor + step) % n;
      const id = this.ids[idx];
      if (!this.corrected.has(id) && !this.visited.has(id)) {
        this.cursor = idx;
        this.visited.add(id);
        return id;
      }
    }
    return null;
  }

  /** Start a fresh pass over everything still uncorrected. */
  resetPass(): void {
    this.visited = new Set();
    this.cursor = -1;
  }

  /** Jump the cursor to a specific id (e.g. picked from the sidebar). */
  jumpTo(id: string): void {
    const idx = this.ids.indexOf(id);
    if (idx >= 0) {
      this.cursor = idx;
      this.visited.add(id);
    }
  }
}
