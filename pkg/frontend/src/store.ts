// Session and composer state for the studio. Every frame held here is a
// verbatim server response; the store never fabricates or edits story
// content, it only chooses which server-produced state to display.

import { ApiError, type ApiFrame, type SessionSummary, type StoryApi } from "./api.js";

export interface ComposerState {
  draft: string;
  pending: boolean;
  error: string | null;
}

export type Listener = () => void;

export class StudioStore {
  private readonly sessions = new Map<string, SessionSummary>();
  private readonly tabs: string[] = [];
  private readonly listeners = new Set<Listener>();
  activeId: string | null = null;
  composer: ComposerState = { draft: "", pending: false, error: null };

  constructor(private readonly api: StoryApi) {}

  subscribe(fn: Listener): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) {
      fn();
    }
  }

  tabOrder(): readonly string[] {
    return this.tabs;
  }

  session(id: string): SessionSummary | undefined {
    return this.sessions.get(id);
  }

  allSessions(): SessionSummary[] {
    return this.tabs.map((id) => this.sessions.get(id)!);
  }

  setDraft(draft: string): void {
    this.composer.draft = draft;
    this.notify();
  }

  canSubmit(): boolean {
    return (
      this.activeId !== null && this.composer.draft.trim() !== "" && !this.composer.pending
    );
  }

  /** Replaces the stored session with what the server reports right now. */
  private async pull(id: string): Promise<SessionSummary> {
    const summary = await this.api.getSession(id);
    this.sessions.set(id, summary);
    if (!this.tabs.includes(id)) {
      this.tabs.push(id);
    }
    this.notify();
    return summary;
  }

  async createSession(checkpoint: string, seed: number): Promise<string> {
    const { id } = await this.api.createSession(checkpoint, seed);
    await this.pull(id);
    this.activeId = id;
    this.notify();
    return id;
  }

  /**
   * Sends the draft to the server and appends the frame it returns.
   * Busy and validation failures surface in the composer and keep the
   * draft so the user can retry.
   */
  async submitSentence(): Promise<ApiFrame | null> {
    if (!this.canSubmit()) {
      return null;
    }
    const id = this.activeId!;
    const sentence = this.composer.draft;
    this.composer = { ...this.composer, pending: true, error: null };
    this.notify();
    try {
      const frame = await this.api.extendSession(id, sentence);
      const session = this.sessions.get(id)!;
      this.sessions.set(id, {
        ...session,
        length: session.length + 1,
        frames: [...session.frames, frame],
      });
      this.composer = { draft: "", pending: false, error: null };
      this.notify();
      return frame;
    } catch (err) {
      const message = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      this.composer = { ...this.composer, pending: false, error: message };
      this.notify();
      throw err;
    }
  }

  /** Forks the given session and focuses the new branch tab. */
  async forkBranch(id: string, at: number): Promise<string> {
    const child = await this.api.branchSession(id, at);
    await this.pull(child.id);
    this.activeId = child.id;
    this.notify();
    return child.id;
  }

  setActive(id: string): void {
    if (this.sessions.has(id)) {
      this.activeId = id;
      this.notify();
    }
  }

  /** Re-fetches every open session; display state is whatever came back. */
  async refreshAll(): Promise<void> {
    for (const id of this.tabs) {
      await this.pull(id);
    }
  }
}
