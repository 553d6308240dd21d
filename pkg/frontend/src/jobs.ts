// Client-side job views.
//
// The server is the only authority. A view is whatever the last summary or
// event said, plus at most one locally invented state: "submitting", the
// placeholder between clicking Generate and the 202 coming back. Reload
// therefore loses nothing; rebuild() from GET /jobs reproduces every view.

import type { JobSummary } from "./api.js";

export const TERMINAL = new Set(["completed", "failed", "canceled"]);

export interface UiJobView {
  id: string;
  captureId: string;
  state: string;
  progress: number;
  resultUrls: string[];
  resultCount: number;
  error: string | null;
  parentJob: string | null;
  created: number;
  updated: number;
  revision: number;
}

export interface StateEvent extends JobSummary {
  revision: number;
}

export interface ProgressEvent {
  job_id: string;
  progress: number;
  revision: number;
}

function viewFromSummary(s: JobSummary, revision: number): UiJobView {
  return {
    id: s.job_id,
    captureId: s.capture_id,
    state: s.state,
    progress: s.progress,
    resultUrls: s.results ?? [],
    resultCount: s.result_count,
    error: s.error,
    parentJob: s.parent_job,
    created: s.created,
    updated: s.updated,
    revision,
  };
}

export class JobsStore {
  private views = new Map<string, UiJobView>();
  private listeners = new Set<() => void>();

  subscribe(fn: () => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private notify() {
    for (const fn of this.listeners) fn();
  }

  get(id: string): UiJobView | undefined {
    return this.views.get(id);
  }

  /** Newest first, the order the job panel shows. */
  list(): UiJobView[] {
    return [...this.views.values()].sort((a, b) => b.created - a.created || (a.id < b.id ? 1 : -1));
  }

  /** id -> parent -> ... back to the root job, for the breadcrumb. */
  lineage(id: string): string[] {
    const chain: string[] = [];
    let cur: string | null = id;
    while (cur && !chain.includes(cur)) {
      chain.push(cur);
      cur = this.views.get(cur)?.parentJob ?? null;
    }
    return chain;
  }

  /** Reload path: replace everything with what the server lists. */
  rebuild(summaries: JobSummary[]) {
    this.views.clear();
    for (const s of summaries) this.views.set(s.job_id, viewFromSummary(s, 0));
    this.notify();
  }

  /** Optimistic placeholder while POST /jobs is in flight. */
  markSubmitting(tempId: string, captureId: string) {
    this.views.set(tempId, {
      id: tempId,
      captureId,
      state: "submitting",
      progress: 0,
      resultUrls: [],
      resultCount: 0,
      error: null,
      parentJob: null,
      created: Date.now() / 1000,
      updated: Date.now() / 1000,
      revision: 0,
    });
    this.notify();
  }

  resolveSubmitting(tempId: string, summary: JobSummary) {
    this.views.delete(tempId);
    this.applySummary(summary);
  }

  dropSubmitting(tempId: string) {
    this.views.delete(tempId);
    this.notify();
  }

  /** A plain GET snapshot; has no revision, so never beats an SSE event. */
  applySummary(s: JobSummary) {
    const have = this.views.get(s.job_id);
    if (have && have.revision > 0) return;
    this.views.set(s.job_id, viewFromSummary(s, 0));
    this.notify();
  }

  applyState(ev: StateEvent) {
    const have = this.views.get(ev.job_id);
    if (have && ev.revision <= have.revision) return;
    // a terminal view may refresh (post-reload snapshot) but never change state
    if (have && TERMINAL.has(have.state) && ev.state !== have.state) return;
    this.views.set(ev.job_id, viewFromSummary(ev, ev.revision));
    this.notify();
  }

  applyProgress(ev: ProgressEvent) {
    const have = this.views.get(ev.job_id);
    if (!have) return; // progress alone can't create a job view
    if (ev.revision <= have.revision || TERMINAL.has(have.state)) return;
    this.views.set(ev.job_id, {
      ...have,
      progress: Math.max(have.progress, ev.progress),
      revision: ev.revision,
    });
    this.notify();
  }
}
