/** Exact display <-> image pixel mapping for integer scale factors. */

export const SCALE_CHOICES = [1, 4, 10] as const;

/** Display coordinate (CSS pixels within the canvas) to image pixel. */
export function displayToImage(
  displayX: number,
  displayY: number,
  scale: number,
): [number, number] {
  return [Math.floor(displayX / scale), Math.floor(displayY / scale)];
}

/** Top-left display corner of an image pixel at the given scale. */
export function imageToDisplay(
  pixelX: number,
  pixelY: number,
  scale: number,
): [number, number] {
  return [pixelX * scale, pixelY * scale];
}

/** Center of an image pixel in display coordinates (for overlay markers). */
export function imagePixelCenter(
  pixelX: number,
  pixelY: number,
  scale: number,
): [number, number] {
  return [pixelX * scale + scale / 2, pixelY * scale + scale / 2];
}

export function inBounds(x: number, y: number, w: number, h: number): boolean {
  return x >= 0 && y >= 0 && x < w && y < h;
}
