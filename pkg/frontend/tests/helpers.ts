/** In-memory stand-in for the annotation service, faithful to its API. */

import { PQ_NAMES, type FetchLike, type Values } from "../src/api.js";

export interface LogRecord {
  clip_id: string;
  rater_id: string;
  values: Values;
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export class MockService {
  readonly log: LogRecord[] = [];
  rejectNext: { status: number; code: string; message: string } | null = null;

  private queue: string[];
  private submissionCount = 0;

  constructor(clipIds: string[]) {
    this.queue = [...clipIds];
  }

  readonly fetch: FetchLike = async (input, init) => {
    const url = new URL(input, "http://mock.test");
    const path = url.pathname;

    if (path === "/api/session/next") {
      const clipId = this.queue.shift();
      if (clipId === undefined) return json({ status: "done" });
      return json({
        status: "assigned",
        clip_id: clipId,
        rater_id: url.searchParams.get("rater") ?? "",
        audio_url: `/api/clips/${clipId}/audio`,
        expires_at: Date.now() / 1000 + 1800,
      });
    }

    if (path === "/api/session/progress") {
      const rater = url.searchParams.get("rater") ?? "";
      const completed = this.log.filter((r) => r.rater_id === rater).length;
      return json({ rater_id: rater, completed, remaining: this.queue.length });
    }

    if (path === "/api/ratings" && init?.method === "POST") {
      if (this.rejectNext) {
        const problem = this.rejectNext;
        this.rejectNext = null;
        return json(
          { code: problem.code, message: problem.message },
          problem.status,
        );
      }
      const body = JSON.parse(String(init.body)) as LogRecord;
      for (const name of PQ_NAMES) {
        if (typeof body.values[name] !== "number") {
          return json(
            { code: "incomplete-rating", message: `missing ${name}` },
            400,
          );
        }
      }
      this.log.push({
        clip_id: body.clip_id,
        rater_id: body.rater_id,
        values: body.values,
      });
      this.submissionCount += 1;
      return json({
        status: "ok",
        submission_id: `sub-${this.submissionCount}`,
        clip_id: body.clip_id,
      });
    }

    return json({ code: "not-found", message: `no route ${path}` }, 404);
  };
}

export function setSlider(root: ParentNode, name: string, value: number): void {
  const input = root.querySelector<HTMLInputElement>(`#slider-${name}`);
  if (!input) throw new Error(`no slider for ${name}`);
  input.value = String(value);
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

export function submitButton(root: ParentNode): HTMLButtonElement {
  const button = root.querySelector<HTMLButtonElement>("button.submit");
  if (!button) throw new Error("no submit button");
  return button;
}
