/** Prediction overlay compositing: the label map (palette indices) is
 * blended over the raw frame at an adjustable opacity. Pure RGBA-buffer
 * math so it is testable without a real canvas. */

import { categoryColor } from "./palette.js";

/** Blend label colors into frame pixels, in place on a copy.
 *
 * frame: RGBA byte buffer of the raw frame (length w*h*4)
 * labels: per-pixel category ids (length w*h); 0 = background is drawn
 * transparent so the raw frame shows through.
 */
export function compositeOverlay(
  frame: Uint8ClampedArray,
  labels: Uint8Array | Uint8ClampedArray,
  opacity: number,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(frame);
  if (opacity <= 0) return out;
  const a = Math.min(opacity, 1);
  for (let i = 0; i < labels.length; i++) {
    const cat = labels[i];
    if (cat === 0) continue;
    const [r, g, b] = categoryColor(cat);
    const j = i * 4;
    out[j] = Math.round((1 - a) * frame[j] + a * r);
    out[j + 1] = Math.round((1 - a) * frame[j + 1] + a * g);
    out[j + 2] = Math.round((1 - a) * frame[j + 2] + a * b);
  }
  return out;
}
