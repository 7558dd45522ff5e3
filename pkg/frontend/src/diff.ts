/** Segmentation of a value by the server-provided diff spans.
 *
 * The server computes the spans (character-level LCS); the client's only
 * job is to render exactly those ranges highlighted, nothing more.
 */

export interface Segment {
  text: string;
  highlighted: boolean;
}

/** Split a value into ordered segments, highlighting exactly the spans.
 * Spans are half-open [start, end); out-of-range parts are clamped and
 * overlapping or unsorted spans are merged defensively. */
export function segmentsFor(value: string, spans: [number, number][]): Segment[] {
  if (value.length === 0) return [];
  const mask = new Array<boolean>(value.length).fill(false);
  for (const [start, end] of spans) {
    const from = Math.max(0, start);
    const to = Math.min(value.length, end);
    for (let i = from; i < to; i++) mask[i] = true;
  }
  const segments: Segment[] = [];
  let runStart = 0;
  for (let i = 1; i <= value.length; i++) {
    if (i === value.length || mask[i] !== mask[runStart]) {
      segments.push({ text: value.slice(runStart, i), highlighted: mask[runStart] === true });
      runStart = i;
    }
  }
  return segments;
}

/** Concatenation of the highlighted parts (diagnostics and tests). */
export function highlightedText(segments: Segment[]): string {
  return segments.filter((s) => s.highlighted).map((s) => s.text).join("");
}
