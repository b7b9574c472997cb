// Entry point: connect to the service named by ?api=... (default same
// origin), open one session against its checkpoint, and mount the UI.

import { ApiClient } from "./api.js";
import { mount } from "./dom.js";
import { StudioStore } from "./store.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("api") ?? window.location.origin;
  const seed = Number(params.get("seed") ?? "0");

  const api = new ApiClient(baseUrl);
  const store = new StudioStore(api);
  const root = document.getElementById("app");
  if (root === null) {
    throw new Error("missing #app container");
  }
  mount(store, root);

  const health = await api.health();
  await store.createSession(health.checkpoint, seed);
}

boot().catch((err) => {
  const root = document.getElementById("app");
  if (root !== null) {
    root.textContent = `failed to start: ${err}`;
  }
});
