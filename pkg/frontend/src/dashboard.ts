/**
 * Live agreement dashboard: one tab per quality, each showing a scatter
 * of expert vs crowd clip means with the identity line, plus r and RMSE
 * readouts. Stats are polled from the service.
 */

import {
  ApiClient,
  PQ_NAMES,
  type AgreementStats,
  type PQName,
  type PQStats,
} from "./api.js";
import { formatValue } from "./form.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const SIZE = 360;
const MARGIN = 30;

function chartCoord(value: number): number {
  // rating 0..100 onto the plot area, y handled by the caller
  return MARGIN + (value / 100) * (SIZE - 2 * MARGIN);
}

export class Dashboard {
  private selected: PQName = PQ_NAMES[0];
  private stats: AgreementStats | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  private tabs = new Map<PQName, HTMLButtonElement>();
  private plot!: SVGSVGElement;
  private readout!: HTMLElement;
  private summary!: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly pollMs = 5000,
  ) {}

  async start(): Promise<void> {
    this.renderSkeleton();
    await this.refresh();
    this.timer = setInterval(() => {
      void this.refresh();
    }, this.pollMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async refresh(): Promise<void> {
    try {
      this.render(await this.api.agreement());
    } catch {
      this.summary.textContent = "stats unavailable";
    }
  }

  private renderSkeleton(): void {
    this.root.textContent = "";
    const card = document.createElement("section");
    card.className = "dashboard-card";

    const tabBar = document.createElement("nav");
    tabBar.className = "pq-tabs";
    for (const name of PQ_NAMES) {
      const tab = document.createElement("button");
      tab.type = "button";
      tab.className = "pq-tab";
      tab.textContent = name;
      tab.addEventListener("click", () => {
        this.selected = name;
        if (this.stats) this.render(this.stats);
      });
      this.tabs.set(name, tab);
      tabBar.append(tab);
    }
    card.append(tabBar);

    this.plot = document.createElementNS(SVG_NS, "svg");
    this.plot.setAttribute("viewBox", `0 0 ${SIZE} ${SIZE}`);
    this.plot.setAttribute("class", "scatter");
    card.append(this.plot);

    this.readout = document.createElement("p");
    this.readout.className = "readout";
    card.append(this.readout);

    this.summary = document.createElement("p");
    this.summary.className = "summary";
    card.append(this.summary);

    this.root.append(card);
  }

  /** Render a stats payload; exposed so tests can inject one directly. */
  render(stats: AgreementStats): void {
    this.stats = stats;
    for (const [name, tab] of this.tabs) {
      tab.classList.toggle("selected", name === this.selected);
    }
    const entry = stats.per_pq[this.selected];
    this.renderPlot(entry);
    this.renderReadout(entry);
    this.summary.textContent =
      `${stats.total_ratings} ratings over ${stats.clips_rated} clips`;
  }

  private renderPlot(entry: PQStats | undefined): void {
    this.plot.textContent = "";

    const frame = document.createElementNS(SVG_NS, "rect");
    frame.setAttribute("x", String(MARGIN));
    frame.setAttribute("y", String(MARGIN));
    frame.setAttribute("width", String(SIZE - 2 * MARGIN));
    frame.setAttribute("height", String(SIZE - 2 * MARGIN));
    frame.setAttribute("class", "frame");
    this.plot.append(frame);

    const identity = document.createElementNS(SVG_NS, "line");
    identity.setAttribute("x1", String(chartCoord(0)));
    identity.setAttribute("y1", String(SIZE - chartCoord(0)));
    identity.setAttribute("x2", String(chartCoord(100)));
    identity.setAttribute("y2", String(SIZE - chartCoord(100)));
    identity.setAttribute("class", "identity");
    this.plot.append(identity);

    if (!entry || entry.points.length === 0) {
      const placeholder = document.createElementNS(SVG_NS, "text");
      placeholder.setAttribute("x", String(SIZE / 2));
      placeholder.setAttribute("y", String(SIZE / 2));
      placeholder.setAttribute("text-anchor", "middle");
      placeholder.setAttribute("class", "placeholder");
      placeholder.textContent = "no overlap yet";
      this.plot.append(placeholder);
      return;
    }

    for (const point of entry.points) {
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(chartCoord(point.expert_mean)));
      dot.setAttribute("cy", String(SIZE - chartCoord(point.nonexpert_mean)));
      dot.setAttribute("r", "4");
      dot.setAttribute("class", "dot");
      const title = document.createElementNS(SVG_NS, "title");
      title.textContent =
        `${point.clip_id}: expert ${formatValue(point.expert_mean)}, ` +
        `crowd ${formatValue(point.nonexpert_mean)}`;
      dot.append(title);
      this.plot.append(dot);
    }
  }

  private renderReadout(entry: PQStats | undefined): void {
    if (!entry || entry.count === 0) {
      this.readout.textContent = "no overlap yet";
      return;
    }
    const r = entry.r === null ? "n/a" : formatValue(entry.r);
    const rmse = entry.rmse === null ? "n/a" : formatValue(entry.rmse);
    this.readout.textContent =
      `r = ${r} · RMSE = ${rmse} · n = ${entry.count}`;
  }
}
