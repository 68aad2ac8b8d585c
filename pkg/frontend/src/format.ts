import type { Segment } from "./api";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function escapeAttr(text: string): string {
  return escapeHtml(text).replace(/'/g, "&#39;");
}

/** Seconds to mm:ss, minutes unpadded past 99. */
export function mmss(seconds: number): string {
  const whole = Math.max(0, Math.floor(seconds));
  const minutes = Math.floor(whole / 60);
  const rest = whole % 60;
  return `${String(minutes).padStart(2, "0")}:${String(rest).padStart(2, "0")}`;
}

/** Segment bounds as the card label, e.g. "00:05-00:10". */
export function segmentLabel(segment: Segment): string {
  return `${mmss(segment.start_seconds)}-${mmss(segment.end_seconds)}`;
}

export function basename(uri: string): string {
  const trimmed = uri.replace(/\/+$/, "");
  const slash = trimmed.lastIndexOf("/");
  return slash >= 0 ? trimmed.slice(slash + 1) : trimmed;
}

export function formatWhen(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().replace("T", " ").slice(0, 19);
}

/** The human detail of a provenance record: whichever origin field it carries. */
export function provenanceDetail(provenance: Record<string, unknown>): string {
  for (const field of ["query_used", "query_text", "source_name"]) {
    const value = provenance[field];
    if (typeof value === "string" && value) return value;
  }
  return "";
}
