/** Mapping between a displayed <img> element and the underlying pixel grid.
 * Seed points must land on real pixels no matter how the image is scaled. */

export interface DisplayBox {
  /** Rendered size of the element on screen, CSS pixels. */
  width: number;
  height: number;
}

export interface ImageSize {
  width: number;
  height: number;
}

/**
 * Convert a click position (offsetX/offsetY within the element) to integer
 * image coordinates. Results are clamped to the image bounds so clicks on
 * the last half-pixel row still resolve.
 */
export function clickToPixel(
  offsetX: number,
  offsetY: number,
  box: DisplayBox,
  image: ImageSize,
): [number, number] {
  if (box.width <= 0 || box.height <= 0) return [0, 0];
  const x = Math.floor((offsetX / box.width) * image.width);
  const y = Math.floor((offsetY / box.height) * image.height);
  return [
    Math.min(Math.max(x, 0), image.width - 1),
    Math.min(Math.max(y, 0), image.height - 1),
  ];
}

/** Clamp a compare-slider position to [0, 1]. */
export function clampSlider(value: number): number {
  if (Number.isNaN(value)) return 0.5;
  return Math.min(Math.max(value, 0), 1);
}

/** Snap a ratio-slider value to two decimal places within [0, 1]. */
export function snapRatio(value: number): number {
  const clamped = Math.min(Math.max(value, 0), 1);
  return Math.round(clamped * 100) / 100;
}
