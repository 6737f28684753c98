/**
 * Slider state for rating one clip.
 *
 * Every slider starts at the midpoint, but a midpoint default is not a
 * judgment: a rating can only be submitted once all seven sliders have
 * been deliberately moved (or re-affirmed) by the rater.
 */

import { PQ_NAMES, type PQName, type Values } from "./api.js";

export const DEFAULT_POSITION = 50;

export interface FormSnapshot {
  positions: Values;
  touched: PQName[];
}

export class RatingForm {
  private positions = new Map<PQName, number>();
  private touched = new Set<PQName>();

  constructor() {
    this.reset();
  }

  reset(): void {
    for (const name of PQ_NAMES) this.positions.set(name, DEFAULT_POSITION);
    this.touched.clear();
  }

  set(name: PQName, position: number): void {
    if (!Number.isFinite(position) || position < 0 || position > 100) {
      throw new RangeError(`${name} must be in [0, 100], got ${position}`);
    }
    this.positions.set(name, position);
    this.touched.add(name);
  }

  get(name: PQName): number {
    const position = this.positions.get(name);
    if (position === undefined) throw new Error(`unknown quality ${name}`);
    return position;
  }

  isTouched(name: PQName): boolean {
    return this.touched.has(name);
  }

  touchedCount(): number {
    return this.touched.size;
  }

  canSubmit(): boolean {
    return this.touched.size === PQ_NAMES.length;
  }

  /** Full-precision values for the POST body. Throws until complete. */
  values(): Values {
    if (!this.canSubmit()) {
      throw new Error(
        `all ${PQ_NAMES.length} sliders must be touched, ` +
          `got ${this.touched.size}`,
      );
    }
    const out = {} as Values;
    for (const name of PQ_NAMES) out[name] = this.get(name);
    return out;
  }

  snapshot(): FormSnapshot {
    const positions = {} as Values;
    for (const name of PQ_NAMES) positions[name] = this.get(name);
    return { positions, touched: [...this.touched] };
  }

  restore(snapshot: FormSnapshot): void {
    this.reset();
    for (const name of PQ_NAMES) this.positions.set(name, snapshot.positions[name]);
    for (const name of snapshot.touched) this.touched.add(name);
  }
}

/** Display rounding only; POST bodies keep full precision. */
export function formatValue(value: number): string {
  return value.toFixed(2);
}
