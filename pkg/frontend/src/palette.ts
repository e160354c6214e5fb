/** Per-category colors; must match the engine's debug palette exactly so
 * overlays and mask PNGs agree pixel for pixel. */
export const LABEL_PALETTE: ReadonlyArray<readonly [number, number, number]> = [
  [0, 0, 0],
  [230, 25, 75],
  [60, 180, 75],
  [255, 225, 25],
  [0, 130, 200],
  [245, 130, 48],
  [145, 30, 180],
  [70, 240, 240],
  [240, 50, 230],
  [210, 245, 60],
  [250, 190, 190],
];

export function categoryColor(category: number): readonly [number, number, number] {
  return LABEL_PALETTE[category % LABEL_PALETTE.length];
}

export function categoryCss(category: number): string {
  const [r, g, b] = categoryColor(category);
  return `rgb(${r}, ${g}, ${b})`;
}
