/**
 * The rating view: audio player, seven sliders, submit.
 *
 * Submission flow is optimistic: the progress counter advances as soon
 * as the rater hits submit, and rolls back (with the form state intact)
 * if the service rejects the rating.
 */

import {
  ApiClient,
  ApiError,
  PQ_NAMES,
  type Assignment,
  type PQName,
} from "./api.js";
import { DEFAULT_POSITION, RatingForm, formatValue } from "./form.js";

export const POLE_WORDS: Record<PQName, [string, string]> = {
  resonance: ["dark", "bright"],
  weight: ["light", "heavy"],
  strain: ["none", "severe"],
  loudness: ["typical", "deviant"],
  roughness: ["none", "severe"],
  breathiness: ["none", "severe"],
  pitch: ["typical", "deviant"],
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class RatingView {
  readonly form = new RatingForm();

  private assignment: Assignment | null = null;
  private completed = 0;
  private startedAt = 0;
  private pending: Promise<void> = Promise.resolve();

  private clipLabel!: HTMLElement;
  private progressLabel!: HTMLElement;
  private statusLine!: HTMLElement;
  private audio!: HTMLAudioElement;
  private sliders = new Map<PQName, HTMLInputElement>();
  private readouts = new Map<PQName, HTMLElement>();
  private rows = new Map<PQName, HTMLElement>();
  private submitButton!: HTMLButtonElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly raterId: string,
  ) {}

  /** Resolves when all in-flight submit/advance work has finished. */
  settle(): Promise<void> {
    return this.pending;
  }

  async start(): Promise<void> {
    this.render();
    try {
      const progress = await this.api.progress(this.raterId);
      this.completed = progress.completed;
    } catch {
      this.completed = 0;
    }
    this.updateProgress();
    await this.advance();
  }

  private render(): void {
    this.root.textContent = "";
    const card = el("section", "rating-card");

    const header = el("header", "rating-header");
    this.clipLabel = el("h2", "clip-label", "loading…");
    this.progressLabel = el("span", "progress-label");
    header.append(this.clipLabel, this.progressLabel);
    card.append(header);

    this.audio = el("audio");
    this.audio.controls = true;
    this.audio.preload = "auto";
    card.append(this.audio);

    const list = el("div", "sliders");
    for (const name of PQ_NAMES) {
      list.append(this.sliderRow(name));
    }
    card.append(list);

    this.submitButton = el("button", "submit") as HTMLButtonElement;
    this.submitButton.type = "button";
    this.submitButton.textContent = "submit rating";
    this.submitButton.disabled = true;
    this.submitButton.addEventListener("click", () => {
      this.pending = this.pending.then(() => this.submit());
    });
    card.append(this.submitButton);

    this.statusLine = el("p", "status");
    card.append(this.statusLine);

    this.root.append(card);
  }

  private sliderRow(name: PQName): HTMLElement {
    const [low, high] = POLE_WORDS[name];
    const row = el("div", "slider-row untouched");
    row.dataset.pq = name;

    const label = el("label", "pq-name", name);
    label.htmlFor = `slider-${name}`;

    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.id = `slider-${name}`;
    slider.min = "0";
    slider.max = "100";
    slider.step = "any";
    slider.value = String(DEFAULT_POSITION);

    const readout = el("output", "value-readout", "–");
    slider.addEventListener("input", () => {
      this.form.set(name, Number(slider.value));
      this.syncRow(name);
      this.syncSubmit();
    });

    row.append(
      label,
      el("span", "pole pole-low", low),
      slider,
      el("span", "pole pole-high", high),
      readout,
    );
    this.sliders.set(name, slider);
    this.readouts.set(name, readout);
    this.rows.set(name, row);
    return row;
  }

  private syncRow(name: PQName): void {
    const row = this.rows.get(name)!;
    const readout = this.readouts.get(name)!;
    if (this.form.isTouched(name)) {
      row.classList.remove("untouched");
      readout.textContent = formatValue(this.form.get(name));
    } else {
      row.classList.add("untouched");
      readout.textContent = "–";
    }
  }

  private syncSubmit(): void {
    this.submitButton.disabled =
      this.assignment === null || !this.form.canSubmit();
  }

  private updateProgress(): void {
    this.progressLabel.textContent = `${this.completed} rated`;
  }

  private async advance(): Promise<void> {
    this.assignment = null;
    this.syncSubmit();
    let next;
    try {
      next = await this.api.nextClip(this.raterId);
    } catch (err) {
      this.statusLine.textContent =
        err instanceof ApiError ? err.message : "service unreachable";
      return;
    }
    if (next.status === "done") {
      this.clipLabel.textContent = "all done";
      this.statusLine.textContent =
        "no clips left for you, thank you for rating";
      this.audio.removeAttribute("src");
      return;
    }
    this.assignment = next;
    this.startedAt = Date.now();
    this.clipLabel.textContent = next.clip_id;
    this.audio.src = this.api.url(next.audio_url);
    this.form.reset();
    for (const name of PQ_NAMES) {
      this.sliders.get(name)!.value = String(DEFAULT_POSITION);
      this.syncRow(name);
    }
    this.syncSubmit();
  }

  private async submit(): Promise<void> {
    const assignment = this.assignment;
    if (assignment === null || !this.form.canSubmit()) return;

    // The body is built synchronously from the live form so what is
    // POSTed is exactly what the rater sees.
    const body = {
      clip_id: assignment.clip_id,
      rater_id: this.raterId,
      values: this.form.values(),
      client_duration_ms: Date.now() - this.startedAt,
    };
    const snapshot = this.form.snapshot();

    this.completed += 1;
    this.updateProgress();
    this.submitButton.disabled = true;
    this.statusLine.textContent = "saving…";

    try {
      await this.api.submitRating(body);
    } catch (err) {
      this.completed -= 1;
      this.updateProgress();
      this.form.restore(snapshot);
      this.syncSubmit();
      this.statusLine.textContent =
        err instanceof ApiError
          ? `rejected: ${err.message}`
          : "network error, rating not saved";
      return;
    }

    this.statusLine.textContent = `saved ${assignment.clip_id}`;
    await this.advance();
  }
}
