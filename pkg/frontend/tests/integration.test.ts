/** Scripted end-to-end session against the real Python service on a
 * synthetic dataset: draw a scribble, submit, get an overlay whose version
 * increments, fetch the metric curve. Skipped when the engine or its
 * dependencies are unavailable. */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { decimateStream } from "../src/scribble.js";
import { openSession } from "../src/session.js";

const PORT = 8977;
const BASE = `http://127.0.0.1:${PORT}`;

function pythonAvailable(): boolean {
  const probe = spawnSync("python3", ["-c", "import graphvos, uvicorn"]);
  return probe.status === 0;
}

const available = pythonAvailable();
const maybe = available ? describe : describe.skip;

maybe("live service round-trip", () => {
  let server: ChildProcess;

  beforeAll(async () => {
    const dataRoot = mkdtempSync(join(tmpdir(), "graphvos-ui-"));
    const gen = spawnSync("python3", [
      "-m", "graphvos.cli", "synth",
      "--out", join(dataRoot, "demo"),
      "--frames", "6", "--seed", "5",
    ]);
    expect(gen.status).toBe(0);
    server = spawn("python3", [
      "-m", "graphvos.cli", "serve",
      "--data-root", dataRoot,
      "--port", String(PORT),
      "--segments-per-frame", "12",
    ], { stdio: "ignore" });
    const client = new ServiceClient(BASE);
    for (let i = 0; i < 120; i++) {
      try {
        const status = await client.datasetStatus("demo");
        if (status.state === "ready") return;
      } catch {
        /* server still starting */
      }
      await new Promise((r) => setTimeout(r, 500));
    }
    throw new Error("service did not become ready");
  }, 90_000);

  afterAll(() => {
    server?.kill();
  });

  it("submits a drawn scribble and the overlay version increments", async () => {
    const client = new ServiceClient(BASE);
    const session = await openSession(client, "demo", "mrf");
    expect(session.frameCount).toBe(6);
    expect(session.categories).toEqual([1, 2]);

    // simulate a pointer drag and decimate it like the canvas would
    const raw = Array.from({ length: 60 }, (_, i) => ({
      x: 8 + i * 0.4,
      y: 12 + Math.sin(i / 8) * 3,
    }));
    const polyline = decimateStream(raw);
    expect(polyline).not.toBeNull();
    session.selectedCategory = 1;
    session.addScribble(polyline!);

    const outcome = await session.submitRound();
    expect(outcome.kind).toBe("ok");
    if (outcome.kind !== "ok") return;
    expect(outcome.version).toBe(1);
    expect(session.latestVersion).toBe(1);

    const overlay = await session.fetchOverlay(0);
    expect(overlay.status).toBe(200);
    expect(overlay.body!.size).toBeGreaterThan(0);
    const again = await session.fetchOverlay(0, overlay.etag!);
    expect(again.status).toBe(304);

    session.addScribble([
      { x: 30, y: 30 },
      { x: 34, y: 32 },
      { x: 38, y: 35 },
    ]);
    const second = await session.submitRound();
    expect(second.kind).toBe("ok");
    if (second.kind === "ok") expect(second.version).toBe(2);

    expect(session.metricsCurve.length).toBe(2);
    expect(session.metricsCurve[1].cum_time_ms).toBeGreaterThan(
      session.metricsCurve[0].cum_time_ms,
    );

    // out-of-bounds points are rejected by the server with 422
    session.addScribble([
      { x: -3, y: 2 },
      { x: 4, y: 4 },
    ]);
    const bad = await session.submitRound();
    expect(bad.kind).toBe("error");
    if (bad.kind === "error") expect(bad.status).toBe(422);
  }, 120_000);
});
