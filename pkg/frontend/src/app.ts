/** Entry point: hash routing between the rating view and the dashboard. */

import { ApiClient } from "./api.js";
import { Dashboard } from "./dashboard.js";
import { RatingView } from "./ui.js";

const RATER_KEY = "voqual_rater_id";

function raterId(): string {
  let id = localStorage.getItem(RATER_KEY);
  if (!id) {
    id = "r-" + Math.random().toString(36).slice(2, 10);
    localStorage.setItem(RATER_KEY, id);
  }
  return id;
}

function route(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const api = new ApiClient();
  if (location.hash === "#dashboard") {
    void new Dashboard(root, api).start();
  } else {
    void new RatingView(root, api, raterId()).start();
  }
}

window.addEventListener("hashchange", route);
window.addEventListener("load", route);
