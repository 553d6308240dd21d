// Studio bootstrap. Everything on screen is rebuilt from the API on load;
// the page keeps no state of its own, so reloading mid-job just resumes.

import { StudioApi } from "./api.js";
import { el } from "./dom.js";
import { JobsStore, TERMINAL } from "./jobs.js";
import { CapturePanel } from "./panels/capture.js";
import { EditPanel } from "./panels/edit.js";
import { GeneratePanel } from "./panels/generate.js";

async function boot() {
  const api = new StudioApi("");
  const store = new JobsStore();

  const captures = new CapturePanel(api);
  const generate = new GeneratePanel(api, store);
  const edit = new EditPanel(api, store);

  captures.onSelect = (id) => {
    generate.captureId = id;
  };
  generate.onEdit = (jobId, index) => void edit.open(jobId, index);
  edit.onSubmitted = (childId) => generate.follow(childId);

  const health = el("span", { class: "health", text: "..." });
  const app = document.getElementById("app")!;
  app.append(
    el("header", {}, [el("h1", { text: "atelier studio" }), health]),
    el("main", {}, [captures.root, generate.root, edit.root]),
  );

  api.healthz()
    .then((h) => {
      health.textContent = `${h.backend}: ${h.status}`;
      health.classList.toggle("bad", h.status !== "ok");
    })
    .catch(() => {
      health.textContent = "service unreachable";
      health.classList.add("bad");
    });

  // reload path: server state is the only state
  await captures.refresh().catch(() => {});
  const jobs = await api.listJobs().catch(() => []);
  store.rebuild(jobs);
  for (const j of jobs) {
    if (!TERMINAL.has(j.state)) generate.follow(j.job_id);
  }
  await generate.loadStyles().catch(() => {});
}

void boot();
