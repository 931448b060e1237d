/** Touched-region overlay, derived by differencing before/after pixels.
 *
 * The service does not expose the mask bitmap it used, so the overlay marks
 * every pixel the edit actually changed. Pure array-in, array-out so it can
 * be tested without a canvas.
 */

export interface Rgba {
  /** Interleaved RGBA bytes, length = width * height * 4. */
  data: Uint8ClampedArray;
  width: number;
  height: number;
}

/** Per-pixel boolean: did any channel move by more than `tol` levels? */
export function changedMask(before: Rgba, after: Rgba, tol = 0): Uint8Array {
  if (before.width !== after.width || before.height !== after.height) {
    throw new Error("size mismatch between before and after images");
  }
  const n = before.width * before.height;
  const mask = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    const o = i * 4;
    const moved =
      Math.abs(before.data[o]! - after.data[o]!) > tol ||
      Math.abs(before.data[o + 1]! - after.data[o + 1]!) > tol ||
      Math.abs(before.data[o + 2]! - after.data[o + 2]!) > tol;
    mask[i] = moved ? 1 : 0;
  }
  return mask;
}

/** Render a changed-pixel mask as translucent highlight pixels. */
export function overlayPixels(
  mask: Uint8Array,
  width: number,
  height: number,
  color: [number, number, number] = [64, 156, 255],
  alpha = 96,
): Rgba {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < mask.length; i++) {
    if (!mask[i]) continue;
    const o = i * 4;
    data[o] = color[0];
    data[o + 1] = color[1];
    data[o + 2] = color[2];
    data[o + 3] = alpha;
  }
  return { data, width, height };
}

/** Fraction of pixels flagged by the mask; handy for a status line. */
export function coverage(mask: Uint8Array): number {
  if (mask.length === 0) return 0;
  let count = 0;
  for (let i = 0; i < mask.length; i++) count += mask[i]!;
  return count / mask.length;
}
