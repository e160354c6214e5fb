/** Browser entry point: frame scrubbing, per-category scribble drawing,
 * server round submission, prediction overlay with adjustable opacity and
 * the live metric curve. */

import { ServiceClient } from "./api.js";
import { CanvasGeometry, canvasToImage, inBounds } from "./coords.js";
import { compositeOverlay } from "./overlay.js";
import { categoryCss } from "./palette.js";
import { Point, ScribbleCapture } from "./scribble.js";
import { openSession, UiSession } from "./session.js";

const SCALE = 8; // canvas pixels per image pixel

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class App {
  private canvas = el<HTMLCanvasElement>("view");
  private ctx = this.canvas.getContext("2d")!;
  private status = el<HTMLDivElement>("status");
  private frameLabel = el<HTMLSpanElement>("frame-label");
  private curveCanvas = el<HTMLCanvasElement>("curve");
  private capture = new ScribbleCapture();
  private geom: CanvasGeometry = { scale: SCALE, offsetX: 0, offsetY: 0 };
  private frameImage: HTMLImageElement | null = null;
  private overlayLabels: Uint8ClampedArray | null = null;
  private imageW = 0;
  private imageH = 0;

  constructor(
    private client: ServiceClient,
    private session: UiSession,
  ) {}

  async start() {
    this.canvas.addEventListener("pointerdown", (e) => this.onDown(e));
    this.canvas.addEventListener("pointermove", (e) => this.onMove(e));
    this.canvas.addEventListener("pointerup", (e) => this.onUp(e));
    el<HTMLButtonElement>("submit").addEventListener("click", () =>
      this.submit(),
    );
    el<HTMLButtonElement>("clear").addEventListener("click", () => {
      this.session.clearBuffer();
      this.redraw();
    });
    el<HTMLInputElement>("opacity").addEventListener("input", (e) => {
      this.session.overlayOpacity = Number(
        (e.target as HTMLInputElement).value,
      );
      this.redraw();
    });
    const scrubber = el<HTMLInputElement>("scrubber");
    scrubber.max = String(this.session.frameCount - 1);
    scrubber.addEventListener("input", async (e) => {
      this.session.setFrame(Number((e.target as HTMLInputElement).value));
      await this.loadFrame();
    });
    const catSelect = el<HTMLSelectElement>("category");
    for (const c of [0, ...this.session.categories]) {
      const opt = document.createElement("option");
      opt.value = String(c);
      opt.textContent = c === 0 ? "background" : `object ${c}`;
      opt.style.color = categoryCss(c);
      catSelect.appendChild(opt);
    }
    catSelect.value = "1";
    catSelect.addEventListener("change", () => {
      this.session.selectedCategory = Number(catSelect.value);
    });
    await this.loadFrame();
    this.say("ready; draw a scribble and submit");
  }

  private say(message: string) {
    this.status.textContent = message;
  }

  private pointerToImage(e: PointerEvent): Point {
    const rect = this.canvas.getBoundingClientRect();
    return canvasToImage(
      this.geom,
      ((e.clientX - rect.left) * this.canvas.width) / rect.width,
      ((e.clientY - rect.top) * this.canvas.height) / rect.height,
    );
  }

  private onDown(e: PointerEvent) {
    if (this.session.busy) return;
    const p = this.pointerToImage(e);
    if (!inBounds(p, this.imageW, this.imageH)) return;
    this.canvas.setPointerCapture(e.pointerId);
    this.capture.begin(p);
  }

  private onMove(e: PointerEvent) {
    if (!this.capture.isActive) return;
    const p = this.pointerToImage(e);
    if (inBounds(p, this.imageW, this.imageH)) {
      this.capture.extend(p);
      this.redraw();
    }
  }

  private onUp(e: PointerEvent) {
    if (!this.capture.isActive) return;
    const polyline = this.capture.end(this.pointerToImage(e));
    if (polyline) {
      this.session.addScribble(polyline);
    }
    this.redraw();
  }

  private async submit() {
    if (this.session.bufferFrameConflict()) {
      this.say("scribbles span multiple frames; clear or finish this frame");
      return;
    }
    this.say("running round...");
    const outcome = await this.session.submitRound();
    if (outcome.kind === "ok") {
      this.say(
        `round ${outcome.round} done in ${outcome.inferenceMs.toFixed(0)} ms`,
      );
      await this.loadOverlay();
      this.drawCurve();
    } else {
      this.say(outcome.message);
    }
    this.redraw();
  }

  private async loadFrame() {
    this.frameLabel.textContent = `frame ${this.session.currentFrame}`;
    const img = new Image();
    img.src = this.client.frameUrl(
      this.session.sessionId,
      this.session.currentFrame,
    );
    await img.decode();
    this.frameImage = img;
    this.imageW = img.naturalWidth;
    this.imageH = img.naturalHeight;
    this.canvas.width = this.imageW * SCALE;
    this.canvas.height = this.imageH * SCALE;
    if (this.session.latestVersion > 0) {
      await this.loadOverlay();
    } else {
      this.overlayLabels = null;
      this.redraw();
    }
  }

  private async loadOverlay() {
    const resp = await this.session.fetchOverlay(this.session.currentFrame);
    if (!resp.body) return;
    const bitmap = await createImageBitmap(resp.body);
    const off = document.createElement("canvas");
    off.width = bitmap.width;
    off.height = bitmap.height;
    const octx = off.getContext("2d")!;
    octx.drawImage(bitmap, 0, 0);
    const data = octx.getImageData(0, 0, off.width, off.height).data;
    // recover palette indices by matching exact palette colors
    const labels = new Uint8ClampedArray(off.width * off.height);
    for (let i = 0; i < labels.length; i++) {
      const r = data[i * 4];
      const g = data[i * 4 + 1];
      const b = data[i * 4 + 2];
      labels[i] = r === 0 && g === 0 && b === 0 ? 0 : this.matchColor(r, g, b);
    }
    this.overlayLabels = labels;
    this.redraw();
  }

  private matchColor(r: number, g: number, b: number): number {
    let best = 0;
    let bestDist = Infinity;
    for (let c = 1; c <= this.session.categories.length; c++) {
      const css = categoryCss(c).match(/\d+/g)!.map(Number);
      const d = (css[0] - r) ** 2 + (css[1] - g) ** 2 + (css[2] - b) ** 2;
      if (d < bestDist) {
        bestDist = d;
        best = c;
      }
    }
    return best;
  }

  private redraw() {
    if (!this.frameImage) return;
    const ctx = this.ctx;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.drawImage(this.frameImage, 0, 0, this.canvas.width, this.canvas.height);
    if (this.overlayLabels && this.session.overlayOpacity > 0) {
      const off = document.createElement("canvas");
      off.width = this.imageW;
      off.height = this.imageH;
      const octx = off.getContext("2d")!;
      octx.drawImage(this.frameImage, 0, 0, this.imageW, this.imageH);
      const frameData = octx.getImageData(0, 0, this.imageW, this.imageH);
      const blended = compositeOverlay(
        frameData.data,
        this.overlayLabels,
        this.session.overlayOpacity,
      );
      octx.putImageData(new ImageData(blended, this.imageW, this.imageH), 0, 0);
      ctx.drawImage(off, 0, 0, this.canvas.width, this.canvas.height);
    }
    // live scribbles
    const drawPolyline = (pts: readonly Point[], category: number) => {
      if (pts.length < 1) return;
      ctx.strokeStyle = categoryCss(category);
      ctx.lineWidth = Math.max(2, SCALE / 2);
      ctx.lineCap = "round";
      ctx.beginPath();
      ctx.moveTo(pts[0].x * SCALE, pts[0].y * SCALE);
      for (const p of pts.slice(1)) ctx.lineTo(p.x * SCALE, p.y * SCALE);
      ctx.stroke();
    };
    for (const s of this.session.bufferedScribbles) {
      if (s.frame === this.session.currentFrame) {
        drawPolyline(s.points, s.category);
      }
    }
    if (this.capture.isActive) {
      drawPolyline(this.capture.preview, this.session.selectedCategory);
    }
  }

  private drawCurve() {
    const ctx = this.curveCanvas.getContext("2d")!;
    const w = this.curveCanvas.width;
    const h = this.curveCanvas.height;
    ctx.clearRect(0, 0, w, h);
    const curve = this.session.metricsCurve;
    if (curve.length === 0) return;
    ctx.strokeStyle = "#2b8a3e";
    ctx.beginPath();
    curve.forEach((pt, i) => {
      const x = (i / Math.max(curve.length - 1, 1)) * (w - 20) + 10;
      const y = h - 10 - pt.mean_j * (h - 20);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = "#333";
    const last = curve[curve.length - 1];
    ctx.fillText(`J=${last.mean_j.toFixed(3)} @ round ${last.round}`, 10, 12);
  }
}

async function boot() {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("server") ?? "";
  const dataset = params.get("dataset") ?? "demo";
  const client = new ServiceClient(base);
  const session = await openSession(client, dataset);
  await new App(client, session).start();
}

boot().catch((err) => {
  document.getElementById("status")!.textContent = String(err);
});
