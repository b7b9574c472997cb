// Pure view layer: server session state in, render-ready structures out.
// Nothing here talks to the network or mutates its inputs.

import type { ApiFrame, SessionSummary } from "./api.js";

export interface FrameCard {
  index: number;
  sentence: string;
  image: { kind: "image"; url: string } | { kind: "placeholder"; reason: string };
}

export interface BranchEdge {
  parentId: string;
  childId: string;
  at: number;
}

export interface TimelineView {
  sessionId: string;
  active: boolean;
  empty: boolean;
  cards: FrameCard[];
  branchPoints: BranchEdge[];
}

const B64_RE = /^[A-Za-z0-9+/]*={0,2}$/;
const B64_VALUES = new Map<string, number>();
for (let i = 0; i < 64; i++) {
  B64_VALUES.set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"[i]!, i);
}
const PNG_SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

/** Strict base64 decode; returns null instead of throwing on bad input. */
export function decodeBase64(payload: string): Uint8Array | null {
  if (payload.length % 4 !== 0 || !B64_RE.test(payload)) {
    return null;
  }
  const padding = payload.endsWith("==") ? 2 : payload.endsWith("=") ? 1 : 0;
  const out = new Uint8Array((payload.length / 4) * 3 - padding);
  let o = 0;
  for (let i = 0; i < payload.length; i += 4) {
    let bits = 0;
    let valid = 4;
    for (let j = 0; j < 4; j++) {
      const ch = payload[i + j]!;
      if (ch === "=") {
        valid = Math.min(valid, j);
        bits <<= 6;
      } else {
        bits = (bits << 6) | B64_VALUES.get(ch)!;
      }
    }
    for (let j = 0; j < valid - 1 && o < out.length; j++) {
      out[o++] = (bits >> (16 - 8 * j)) & 0xff;
    }
  }
  return out;
}

/** Decoded PNG bytes, or null when the payload is not a PNG image. */
export function decodePng(payload: string): Uint8Array | null {
  const bytes = decodeBase64(payload);
  if (bytes === null || bytes.length < PNG_SIGNATURE.length) {
    return null;
  }
  for (let i = 0; i < PNG_SIGNATURE.length; i++) {
    if (bytes[i] !== PNG_SIGNATURE[i]) {
      return null;
    }
  }
  return bytes;
}

/**
 * Object-URL cache keyed by the exact payload string, so byte-identical
 * frames (shared branch prefixes) render from one URL.
 */
export class ImageUrlCache {
  private readonly urls = new Map<string, string>();

  constructor(private readonly create: (bytes: Uint8Array) => string) {}

  urlFor(payload: string): string | null {
    const cached = this.urls.get(payload);
    if (cached !== undefined) {
      return cached;
    }
    const bytes = decodePng(payload);
    if (bytes === null) {
      return null;
    }
    const url = this.create(bytes);
    this.urls.set(payload, url);
    return url;
  }
}

export function renderCard(frame: ApiFrame, urls: ImageUrlCache): FrameCard {
  const url = urls.urlFor(frame.image_base64);
  return {
    index: frame.index,
    sentence: frame.sentence,
    image:
      url === null
        ? { kind: "placeholder", reason: "image payload failed to decode" }
        : { kind: "image", url },
  };
}

/** Lineage edges recoverable from the sessions themselves. */
export function buildBranchTree(sessions: Iterable<SessionSummary>): BranchEdge[] {
  const edges: BranchEdge[] = [];
  for (const s of sessions) {
    if (s.parent !== null) {
      edges.push({ parentId: s.parent.id, childId: s.id, at: s.parent.at });
    }
  }
  return edges;
}

/** Frame cards in server order; no client-side sorting or filtering. */
export function renderTimeline(
  session: SessionSummary,
  edges: BranchEdge[],
  active: boolean,
  urls: ImageUrlCache,
): TimelineView {
  return {
    sessionId: session.id,
    active,
    empty: session.frames.length === 0,
    cards: session.frames.map((f) => renderCard(f, urls)),
    branchPoints: edges.filter((e) => e.parentId === session.id),
  };
}
