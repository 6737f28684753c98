/**
 * Typed client for the annotation service HTTP API. This module is the
 * only place the UI talks to the network; everything else takes data in
 * and hands DOM out.
 */

export const PQ_NAMES = [
  "resonance",
  "weight",
  "strain",
  "loudness",
  "roughness",
  "breathiness",
  "pitch",
] as const;

export type PQName = (typeof PQ_NAMES)[number];
export type Values = Record<PQName, number>;

export interface Assignment {
  status: "assigned";
  clip_id: string;
  rater_id: string;
  audio_url: string;
  expires_at: number;
}

export interface SessionDone {
  status: "done";
}

export interface Ack {
  status: "ok";
  submission_id: string;
  clip_id: string;
}

export interface Progress {
  rater_id: string;
  completed: number;
  remaining: number;
}

export interface ScatterPoint {
  clip_id: string;
  expert_mean: number;
  nonexpert_mean: number;
}

export interface PQStats {
  count: number;
  points: ScatterPoint[];
  r: number | null;
  rmse: number | null;
}

export interface AgreementStats {
  per_pq: Record<string, PQStats>;
  total_ratings: number;
  clips_rated: number;
}

export interface AnchorInfo {
  pq: string;
  pole: "low" | "high";
  clip_id: string;
  caption: string;
}

export interface RatingSubmission {
  clip_id: string;
  rater_id: string;
  values: Values;
  client_duration_ms?: number;
}

/** Error body the service returns: {"code", "message"} plus HTTP status. */
export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

async function problemFrom(response: Response): Promise<ApiError> {
  let code = "unknown";
  let message = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep the generic message
  }
  return new ApiError(code, message, response.status);
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  url(path: string): string {
    return this.base + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.url(path));
    if (!response.ok) throw await problemFrom(response);
    return (await response.json()) as T;
  }

  nextClip(raterId: string): Promise<Assignment | SessionDone> {
    const query = encodeURIComponent(raterId);
    return this.getJson(`/api/session/next?rater=${query}`);
  }

  progress(raterId: string): Promise<Progress> {
    const query = encodeURIComponent(raterId);
    return this.getJson(`/api/session/progress?rater=${query}`);
  }

  agreement(): Promise<AgreementStats> {
    return this.getJson("/api/stats/agreement");
  }

  anchors(): Promise<AnchorInfo[]> {
    return this.getJson("/api/anchors");
  }

  async submitRating(submission: RatingSubmission): Promise<Ack> {
    const response = await this.fetchImpl(this.url("/api/ratings"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(submission),
    });
    if (!response.ok) throw await problemFrom(response);
    return (await response.json()) as Ack;
  }
}
