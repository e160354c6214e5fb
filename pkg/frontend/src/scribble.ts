/** Scribble capture: a raw pointer stream becomes a decimated polyline with
 * a minimum spacing between stored points. Single-point strokes are
 * discarded (a click is not an annotation). */

export interface Point {
  x: number;
  y: number;
}

export const MIN_POINT_SPACING = 2; // canvas px between stored points

export class ScribbleCapture {
  private points: Point[] = [];
  private active = false;

  begin(p: Point): void {
    this.active = true;
    this.points = [p];
  }

  extend(p: Point): void {
    if (!this.active) return;
    const last = this.points[this.points.length - 1];
    if (Math.hypot(p.x - last.x, p.y - last.y) >= MIN_POINT_SPACING) {
      this.points.push(p);
    }
  }

  /** Finish the stroke; returns the polyline or null for a discarded
   * single-point stroke. */
  end(p?: Point): Point[] | null {
    if (!this.active) return null;
    if (p) this.extend(p);
    this.active = false;
    const result = this.points;
    this.points = [];
    return result.length >= 2 ? result : null;
  }

  get isActive(): boolean {
    return this.active;
  }

  get preview(): readonly Point[] {
    return this.points;
  }
}

/** Decimate an already-captured raw stream (same contract as live capture). */
export function decimateStream(raw: Point[]): Point[] | null {
  const cap = new ScribbleCapture();
  if (raw.length === 0) return null;
  cap.begin(raw[0]);
  for (let i = 1; i < raw.length; i++) cap.extend(raw[i]);
  return cap.end();
}
