import type { SearchHit, SelectionRef } from "./api";

/** Stable identity of a hit: content plus segment bounds. */
export function refKey(contentHash: string, segment: { start_seconds: number; end_seconds: number } | null): string {
  if (!segment) return contentHash;
  return `${contentHash}@${segment.start_seconds}-${segment.end_seconds}`;
}

/**
 * Per-tab session state: where we are pointed, what we searched, and which
 * hits are picked for the next dataset. Selection is always a subset of the
 * hits currently on screen; swapping in new results prunes anything that is
 * no longer displayed.
 */
export class UiSession {
  endpoint: string;
  token: string;
  activeScope = "";
  currentQuery = "";
  displayed: SearchHit[] = [];
  private selection = new Map<string, SearchHit>();

  constructor(endpoint: string, token: string) {
    this.endpoint = endpoint;
    this.token = token;
  }

  setResults(scope: string, query: string, hits: SearchHit[]): void {
    this.activeScope = scope;
    this.currentQuery = query;
    this.displayed = hits.slice();
    const visible = new Set(hits.map((hit) => refKey(hit.content_hash, hit.segment)));
    for (const key of [...this.selection.keys()]) {
      if (!visible.has(key)) this.selection.delete(key);
    }
  }

  /** Toggle a displayed hit in or out of the selection. Unknown hits are ignored. */
  toggle(key: string): void {
    if (this.selection.has(key)) {
      this.selection.delete(key);
      return;
    }
    const hit = this.displayed.find((candidate) => refKey(candidate.content_hash, candidate.segment) === key);
    if (hit) this.selection.set(key, hit);
  }

  isSelected(key: string): boolean {
    return this.selection.has(key);
  }

  selectionSize(): number {
    return this.selection.size;
  }

  clearSelection(): void {
    this.selection.clear();
  }

  /** Selection in the order the hits are displayed, shaped for the create call. */
  selectedRefs(): SelectionRef[] {
    const refs: SelectionRef[] = [];
    for (const hit of this.displayed) {
      if (this.selection.has(refKey(hit.content_hash, hit.segment))) {
        refs.push({ content_hash: hit.content_hash, segment: hit.segment });
      }
    }
    return refs;
  }
}
