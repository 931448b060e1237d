/** Split a prompt around the span a parse error points at, so the UI can
 * wrap the offending words in <mark> without using innerHTML. */

export interface HighlightParts {
  before: string;
  span: string;
  after: string;
}

export function splitAtSpan(prompt: string, span?: string): HighlightParts {
  if (span) {
    const idx = prompt.indexOf(span);
    if (idx >= 0) {
      return {
        before: prompt.slice(0, idx),
        span,
        after: prompt.slice(idx + span.length),
      };
    }
    // case-insensitive fallback; the server lowercases some spans
    const lower = prompt.toLowerCase().indexOf(span.toLowerCase());
    if (lower >= 0) {
      return {
        before: prompt.slice(0, lower),
        span: prompt.slice(lower, lower + span.length),
        after: prompt.slice(lower + span.length),
      };
    }
  }
  return { before: prompt, span: "", after: "" };
}
