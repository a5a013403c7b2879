/** Canvas drawing: crisp pixel scaling and mask overlay markers. */

import { imagePixelCenter } from "./coords.js";
import type { MaskPixel } from "./types.js";

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  image: CanvasImageSource,
  scale: number,
  width: number,
  height: number,
): void {
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, width * scale, height * scale);
  ctx.drawImage(image, 0, 0, width * scale, height * scale);
}

/** Filled marker for the 1.0 pixel, hollow for the 0.5 pixel. */
export function drawMaskOverlay(
  ctx: CanvasRenderingContext2D,
  mask: MaskPixel[],
  scale: number,
): void {
  for (const px of mask) {
    const [cx, cy] = imagePixelCenter(px.x, px.y, scale);
    const radius = Math.max(3, scale * 0.8);
    ctx.beginPath();
    ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
    ctx.lineWidth = 2;
    ctx.strokeStyle = px.v >= 1.0 ? "#ff2d2d" : "#ffd02d";
    if (px.v >= 1.0) {
      ctx.fillStyle = "rgba(255, 45, 45, 0.55)";
      ctx.fill();
    }
    ctx.stroke();
  }
}

/** Pending clicks (not yet echoed by the service) draw as crosses. */
export function drawPendingClicks(
  ctx: CanvasRenderingContext2D,
  clicks: [number, number][],
  scale: number,
): void {
  ctx.strokeStyle = "#2dc0ff";
  ctx.lineWidth = 2;
  const arm = Math.max(4, scale);
  for (const [x, y] of clicks) {
    const [cx, cy] = imagePixelCenter(x, y, scale);
    ctx.beginPath();
    ctx.moveTo(cx - arm, cy);
    ctx.lineTo(cx + arm, cy);
    ctx.moveTo(cx, cy - arm);
    ctx.lineTo(cx, cy + arm);
    ctx.stroke();
  }
}

export function pngDataUrl(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

export function loadImage(b64: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error("bad frame image"));
    img.src = pngDataUrl(b64);
  });
}
