/** Canvas-to-image coordinate mapping. The canvas shows the frame scaled by
 * an integer-friendly factor; submission rounds to integer image pixels and
 * the server re-validates bounds. */

export interface CanvasGeometry {
  scale: number; // canvas pixels per image pixel
  offsetX: number; // canvas-space offset of the image origin
  offsetY: number;
}

export function canvasToImage(
  geom: CanvasGeometry,
  cx: number,
  cy: number,
): { x: number; y: number } {
  return {
    x: (cx - geom.offsetX) / geom.scale,
    y: (cy - geom.offsetY) / geom.scale,
  };
}

export function imageToCanvas(
  geom: CanvasGeometry,
  ix: number,
  iy: number,
): { x: number; y: number } {
  return {
    x: ix * geom.scale + geom.offsetX,
    y: iy * geom.scale + geom.offsetY,
  };
}

/** Round an image-space point to the integer pixel grid for submission. */
export function snapToPixel(p: { x: number; y: number }): { x: number; y: number } {
  return { x: Math.round(p.x), y: Math.round(p.y) };
}

export function inBounds(
  p: { x: number; y: number },
  width: number,
  height: number,
): boolean {
  return p.x >= 0 && p.x <= width - 1 && p.y >= 0 && p.y <= height - 1;
}
