/**
 * End-to-end against the real annotation service: spawns `voqual serve`
 * on a loopback port, drives the rating view through a scripted session,
 * and checks the service's exported log. Skipped when the Python package
 * is not installed.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, PQ_NAMES, type Values } from "../src/api.js";
import { RatingView } from "../src/ui.js";
import { setSlider, submitButton } from "./helpers.js";

const probe = spawnSync("python3", ["-c", "import voqual, uvicorn"]);
const available = probe.status === 0;

const PORT = 8731 + (process.pid % 400);
const BASE = `http://127.0.0.1:${PORT}`;

describe.skipIf(!available)("against the real service", () => {
  let workDir: string;
  let server: ChildProcess | null = null;

  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "voqual-ui-"));
    const corpus = spawnSync("python3", [
      "-m",
      "voqual.cli",
      "minicorpus",
      "--out",
      join(workDir, "corpus"),
    ]);
    expect(corpus.status).toBe(0);

    server = spawn("python3", [
      "-m",
      "voqual.cli",
      "serve",
      "--clips",
      join(workDir, "corpus", "clips.csv"),
      "--log",
      join(workDir, "ratings.log"),
      "--host",
      "127.0.0.1",
      "--port",
      String(PORT),
    ]);

    const deadline = Date.now() + 20000;
    for (;;) {
      try {
        const ping = await fetch(`${BASE}/api/session/progress?rater=probe`);
        if (ping.ok) break;
      } catch {
        // not up yet
      }
      if (Date.now() > deadline) throw new Error("service did not start");
      await new Promise((resolve) => setTimeout(resolve, 200));
    }
  }, 30000);

  afterAll(async () => {
    if (server) {
      server.kill("SIGTERM");
      await new Promise((resolve) => {
        server!.once("exit", resolve);
        setTimeout(resolve, 3000);
      });
    }
    rmSync(workDir, { recursive: true, force: true });
  });

  it("a scripted five-rating session lands five records in the log", async () => {
    const plan = new Map<string, Values>();
    const root = document.createElement("main");
    document.body.append(root);
    const view = new RatingView(root, new ApiClient(BASE), "ui-e2e");
    await view.start();

    for (let i = 0; i < 5; i++) {
      const clipId = root.querySelector(".clip-label")!.textContent!;
      expect(clipId).toMatch(/^mini_/);
      const values = {} as Values;
      PQ_NAMES.forEach((name, j) => {
        values[name] = Math.round((3 + i * 11.3 + j * 7.77) * 100) / 100;
      });
      plan.set(clipId, values);
      for (const name of PQ_NAMES) setSlider(root, name, values[name]);
      submitButton(root).click();
      await view.settle();
      expect(root.querySelector(".status")!.textContent).toContain("saved");
    }

    const exported = await (await fetch(`${BASE}/api/export/ratings.csv`)).text();
    const lines = exported.trim().split(/\r?\n/);
    const header = lines[0]!.split(",");
    const rows = lines.slice(1).map((line) => line.split(","));
    expect(rows.length).toBe(5);
    for (const row of rows) {
      const record = Object.fromEntries(header.map((h, i) => [h, row[i]]));
      expect(record.rater_id).toBe("ui-e2e");
      const want = plan.get(record.clip_id!)!;
      expect(want).toBeDefined();
      for (const name of PQ_NAMES) {
        expect(Number(record[name])).toBe(want[name]);
      }
    }

    const stats = (await (
      await fetch(`${BASE}/api/stats/agreement`)
    ).json()) as { total_ratings: number };
    expect(stats.total_ratings).toBe(5);
  }, 30000);
});
