// Integration against a running service, enabled by STUDIO_LIVE_URL
// (e.g. STUDIO_LIVE_URL=http://127.0.0.1:8765 npm test). Verifies the
// branch contract end to end: byte-identical prefixes, divergent
// suffixes.

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { StudioStore } from "../src/store.js";

const baseUrl = process.env.STUDIO_LIVE_URL;
const liveDescribe = baseUrl ? describe : describe.skip;

liveDescribe("live service", () => {
  it("forked timelines share prefixes byte for byte and then diverge", async () => {
    const api = new ApiClient(baseUrl!);
    const health = await api.health();
    expect(health.status).toBe("ok");

    const store = new StudioStore(api);
    const rootId = await store.createSession(health.checkpoint, 5);

    store.setDraft("tony walks on the grass .");
    await store.submitSentence();
    store.setDraft("he falls on the grass .");
    await store.submitSentence();

    const childId = await store.forkBranch(rootId, 1);
    store.setDraft("lisa jumps on the grass .");
    await store.submitSentence();

    await store.refreshAll();
    const root = store.session(rootId)!;
    const child = store.session(childId)!;

    expect(root.frames).toHaveLength(2);
    expect(child.frames).toHaveLength(2);
    expect(child.frames[0]!.image_base64).toBe(root.frames[0]!.image_base64);
    expect(child.frames[1]!.sentence).not.toBe(root.frames[1]!.sentence);
    expect(child.frames[1]!.image_base64).not.toBe(root.frames[1]!.image_base64);
  }, 120_000);
});
