import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, PQ_NAMES } from "../src/api.js";
import { RatingView } from "../src/ui.js";
import { MockService, setSlider, submitButton } from "./helpers.js";

function makeView(service: MockService, rater = "r-test") {
  const root = document.createElement("main");
  document.body.append(root);
  const api = new ApiClient("", service.fetch);
  return { root, view: new RatingView(root, api, rater) };
}

beforeEach(() => {
  document.body.textContent = "";
});

describe("rating view", () => {
  it("renders seven sliders with pole words", async () => {
    const { root, view } = makeView(new MockService(["c00"]));
    await view.start();

    const rows = root.querySelectorAll(".slider-row");
    expect(rows.length).toBe(7);
    const byPq = (name: string) =>
      root.querySelector(`.slider-row[data-pq="${name}"]`)!;
    expect(byPq("resonance").textContent).toContain("dark");
    expect(byPq("resonance").textContent).toContain("bright");
    expect(byPq("weight").textContent).toContain("light");
    expect(byPq("weight").textContent).toContain("heavy");
    for (const name of PQ_NAMES) {
      const slider = root.querySelector<HTMLInputElement>(`#slider-${name}`)!;
      expect(slider.value).toBe("50");
    }
  });

  it("keeps submit disabled until all seven sliders are touched", async () => {
    const { root, view } = makeView(new MockService(["c00"]));
    await view.start();

    const button = submitButton(root);
    expect(button.disabled).toBe(true);
    for (const name of PQ_NAMES.slice(0, 6)) {
      setSlider(root, name, 60);
      expect(button.disabled).toBe(true);
    }
    setSlider(root, PQ_NAMES[6], 60);
    expect(button.disabled).toBe(false);
  });

  it("shows two-decimal readouts once touched", async () => {
    const { root, view } = makeView(new MockService(["c00"]));
    await view.start();

    const row = root.querySelector('.slider-row[data-pq="strain"]')!;
    const readout = row.querySelector(".value-readout")!;
    expect(readout.textContent).toBe("–");
    expect(row.classList.contains("untouched")).toBe(true);
    setSlider(root, "strain", 33.337);
    expect(readout.textContent).toBe("33.34");
    expect(row.classList.contains("untouched")).toBe(false);
  });

  it("audio replay leaves the form untouched", async () => {
    const { root, view } = makeView(new MockService(["c00"]));
    await view.start();

    setSlider(root, "roughness", 71.5);
    const audio = root.querySelector("audio")!;
    for (const kind of ["play", "pause", "seeked", "ended", "play"]) {
      audio.dispatchEvent(new Event(kind));
    }
    expect(view.form.get("roughness")).toBe(71.5);
    expect(view.form.touchedCount()).toBe(1);
    expect(submitButton(root).disabled).toBe(true);
  });

  it("rolls back the optimistic counter and keeps state on rejection", async () => {
    const service = new MockService(["c00", "c01"]);
    const { root, view } = makeView(service);
    await view.start();

    for (const name of PQ_NAMES) setSlider(root, name, 42.5);
    service.rejectNext = {
      status: 409,
      code: "duplicate-submission",
      message: "already rated",
    };
    submitButton(root).click();
    await view.settle();

    expect(service.log.length).toBe(0);
    expect(root.querySelector(".progress-label")!.textContent).toBe("0 rated");
    expect(root.querySelector(".status")!.textContent).toContain("rejected");
    expect(root.querySelector(".status")!.textContent).toContain(
      "already rated",
    );
    // still on the same clip with the same values, ready to retry
    expect(root.querySelector(".clip-label")!.textContent).toBe("c00");
    expect(view.form.get("strain")).toBe(42.5);
    expect(submitButton(root).disabled).toBe(false);

    submitButton(root).click();
    await view.settle();
    expect(service.log.length).toBe(1);
    expect(root.querySelector(".progress-label")!.textContent).toBe("1 rated");
    expect(root.querySelector(".clip-label")!.textContent).toBe("c01");
  });

  it("shows the done state when no clips remain", async () => {
    const { root, view } = makeView(new MockService([]));
    await view.start();
    expect(root.querySelector(".clip-label")!.textContent).toBe("all done");
    expect(submitButton(root).disabled).toBe(true);
  });
});
