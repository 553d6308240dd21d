// One EventSource per watched job, feeding the store until the job goes
// terminal (the server closes the stream then) or the caller unsubscribes.

import type { JobsStore, ProgressEvent, StateEvent } from "./jobs.js";
import { TERMINAL } from "./jobs.js";

export function followJob(url: string, store: JobsStore): () => void {
  let es: EventSource | null = null;
  let closed = false;

  const open = () => {
    es = new EventSource(url);
    es.addEventListener("state", (ev) => {
      const payload = JSON.parse((ev as MessageEvent).data) as StateEvent;
      store.applyState(payload);
      if (TERMINAL.has(payload.state)) stop();
    });
    es.addEventListener("progress", (ev) => {
      store.applyProgress(JSON.parse((ev as MessageEvent).data) as ProgressEvent);
    });
    es.onerror = () => {
      es?.close();
      // transient drop: retry; the first event after reconnect is a full
      // state snapshot, so nothing is missed
      if (!closed) setTimeout(open, 1500);
    };
  };

  const stop = () => {
    closed = true;
    es?.close();
  };

  open();
  return stop;
}
