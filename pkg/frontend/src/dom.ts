// DOM bindings: renders the store into the page and wires user input.
// All story data flows store -> view -> elements; nothing reads back
// from the DOM except the composer input.

import type { StudioStore } from "./store.js";
import { buildBranchTree, ImageUrlCache, renderTimeline, type TimelineView } from "./view.js";

function cardElement(view: TimelineView, doc: Document): HTMLElement {
  const panel = doc.createElement("section");
  panel.className = view.active ? "timeline active" : "timeline";
  if (view.empty) {
    const prompt = doc.createElement("p");
    prompt.className = "empty-state";
    prompt.textContent = "No frames yet. Type the first sentence of your story below.";
    panel.appendChild(prompt);
    return panel;
  }
  for (const card of view.cards) {
    const el = doc.createElement("figure");
    el.className = "frame-card";
    if (card.image.kind === "image") {
      const img = doc.createElement("img");
      img.src = card.image.url;
      img.alt = card.sentence;
      el.appendChild(img);
    } else {
      const broken = doc.createElement("div");
      broken.className = "placeholder";
      broken.textContent = card.image.reason;
      el.appendChild(broken);
    }
    const caption = doc.createElement("figcaption");
    caption.textContent = `${card.index}. ${card.sentence}`;
    el.appendChild(caption);
    panel.appendChild(el);
  }
  return panel;
}

export function mount(store: StudioStore, root: HTMLElement): void {
  const doc = root.ownerDocument;
  const urls = new ImageUrlCache((bytes) =>
    URL.createObjectURL(new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" })),
  );

  const tabs = doc.createElement("nav");
  const timelines = doc.createElement("main");
  const form = doc.createElement("form");
  const input = doc.createElement("input");
  input.placeholder = "Next sentence...";
  const submit = doc.createElement("button");
  submit.textContent = "Generate";
  const errorLine = doc.createElement("p");
  errorLine.className = "error";
  form.append(input, submit, errorLine);
  root.append(tabs, timelines, form);

  input.addEventListener("input", () => store.setDraft(input.value));
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    store.submitSentence().catch(() => {
      // failure is already recorded in composer state for rendering
    });
  });

  const redraw = (): void => {
    const sessions = store.allSessions();
    const edges = buildBranchTree(sessions);

    tabs.replaceChildren(
      ...sessions.map((s) => {
        const tab = doc.createElement("button");
        tab.type = "button";
        tab.textContent = s.parent === null ? s.id : `${s.id} (from ${s.parent.id}@${s.parent.at})`;
        tab.className = s.id === store.activeId ? "tab active" : "tab";
        tab.addEventListener("click", () => store.setActive(s.id));
        return tab;
      }),
    );

    timelines.replaceChildren(
      ...sessions.map((s) => {
        const view = renderTimeline(s, edges, s.id === store.activeId, urls);
        const panel = cardElement(view, doc);
        if (view.active && !view.empty) {
          const forkBar = doc.createElement("div");
          forkBar.className = "fork-bar";
          view.cards.forEach((card) => {
            const fork = doc.createElement("button");
            fork.type = "button";
            fork.textContent = `fork @${card.index + 1}`;
            fork.addEventListener("click", () => {
              store.forkBranch(view.sessionId, card.index + 1).catch(() => {});
            });
            forkBar.appendChild(fork);
          });
          panel.appendChild(forkBar);
        }
        return panel;
      }),
    );

    input.value = store.composer.draft;
    input.disabled = store.composer.pending;
    submit.disabled = !store.canSubmit();
    errorLine.textContent = store.composer.error ?? "";
  };

  store.subscribe(redraw);
  redraw();
}
