// Generation panel: parameters, style picker, submit, and the job list with
// live progress bars that swap to result galleries on completion.

import { ApiError, StudioApi } from "../api.js";
import type { StyleInfo } from "../api.js";
import { clear, el, labeled } from "../dom.js";
import { JobsStore, TERMINAL, UiJobView } from "../jobs.js";
import { followJob } from "../sse.js";

const SAMPLERS = ["euler_a", "ddim", "dpmpp_2m"];
const SIZES = ["512", "640", "768", "1024"];

let tempCounter = 0;

export class GeneratePanel {
  readonly root: HTMLElement;
  onEdit: (jobId: string, resultIndex: number) => void = () => {};
  captureId: string | null = null;

  private api: StudioApi;
  private store: JobsStore;
  private styles: StyleInfo[] = [];
  private following = new Set<string>();

  private prompt = el("textarea", { rows: "2", placeholder: "prompt" });
  private negative = el("textarea", { rows: "1", placeholder: "negative prompt" });
  private steps = el("input", { type: "range", min: "1", max: "150", value: "20" });
  private cfg = el("input", { type: "range", min: "1", max: "30", step: "0.5", value: "7" });
  private denoising = el("input", { type: "range", min: "0", max: "1", step: "0.05", value: "0.75" });
  private sampler = el("select");
  private width = el("select");
  private height = el("select");
  private seed = el("input", { type: "number", value: "-1" });
  private batch = el("input", { type: "number", min: "1", max: "8", value: "1" });
  private mode = el("select");
  private edgeOn = el("input", { type: "checkbox", checked: "" });
  private depthOn = el("input", { type: "checkbox" });
  private styleBox = el("div", { class: "styles" });
  private errors = el("div", { class: "error", role: "alert" });
  private jobList = el("div", { class: "jobs" });
  private fieldErrors = new Map<string, HTMLElement>();

  constructor(api: StudioApi, store: JobsStore) {
    this.api = api;
    this.store = store;
    for (const s of SAMPLERS) this.sampler.append(el("option", { value: s, text: s }));
    for (const v of SIZES) {
      this.width.append(el("option", { value: v, text: v }));
      this.height.append(el("option", { value: v, text: v }));
    }
    for (const m of ["txt2img", "img2img"]) this.mode.append(el("option", { value: m, text: m }));

    const generate = el("button", { text: "Generate", class: "primary" });
    generate.addEventListener("click", () => void this.submit());

    this.root = el("section", { class: "panel" }, [
      el("h2", { text: "Generate" }),
      labeled("Prompt", this.prompt),
      labeled("Negative", this.negative),
      this.fieldRow("steps", "Steps", this.steps),
      this.fieldRow("cfg_scale", "CFG", this.cfg),
      this.fieldRow("denoising_strength", "Denoising", this.denoising),
      el("div", { class: "row" }, [
        labeled("Sampler", this.sampler),
        labeled("Mode", this.mode),
        labeled("W", this.width),
        labeled("H", this.height),
        labeled("Seed", this.seed),
        labeled("Batch", this.batch),
      ]),
      el("div", { class: "row" }, [
        labeled("Edge control", this.edgeOn),
        labeled("Depth control", this.depthOn),
      ]),
      this.styleBox,
      generate,
      this.errors,
      el("h3", { text: "Jobs" }),
      this.jobList,
    ]);

    store.subscribe(() => this.renderJobs());
  }

  private fieldRow(field: string, label: string, input: HTMLElement): HTMLElement {
    const err = el("span", { class: "error" });
    this.fieldErrors.set(field, err);
    return el("div", { class: "field-row" }, [labeled(label, input), err]);
  }

  async loadStyles() {
    this.styles = await this.api.listStyles();
    clear(this.styleBox);
    for (const s of this.styles) {
      const on = el("input", { type: "checkbox", "data-style": s.name });
      const weight = el("input", {
        type: "number", min: "0", max: "2", step: "0.05",
        value: String(s.default_weight), "data-style-weight": s.name,
      });
      this.styleBox.append(
        el("span", { class: "style-pick", title: s.description }, [
          on, el("span", { text: s.display_name }), weight,
        ]),
      );
    }
  }

  private pickedStyles() {
    const out: Array<{ name: string; weight: number }> = [];
    for (const box of this.styleBox.querySelectorAll<HTMLInputElement>("input[data-style]")) {
      if (!box.checked) continue;
      const name = box.dataset.style!;
      const w = this.styleBox.querySelector<HTMLInputElement>(
        `input[data-style-weight="${name}"]`,
      );
      out.push({ name, weight: Number(w?.value ?? 1) });
    }
    return out;
  }

  private async submit() {
    this.errors.textContent = "";
    for (const e of this.fieldErrors.values()) e.textContent = "";
    if (!this.captureId) {
      this.errors.textContent = "select a capture first";
      return;
    }
    const control = [];
    if (this.edgeOn.checked) control.push({ kind: "edge" });
    if (this.depthOn.checked) control.push({ kind: "depth" });

    const tempId = `pending-${++tempCounter}`;
    this.store.markSubmitting(tempId, this.captureId);
    try {
      const jobId = await this.api.submitJob(this.captureId, {
        prompt: this.prompt.value,
        negative_prompt: this.negative.value,
        width: Number(this.width.value),
        height: Number(this.height.value),
        steps: Number(this.steps.value),
        cfg_scale: Number(this.cfg.value),
        denoising_strength: Number(this.denoising.value),
        sampler: this.sampler.value,
        seed: Number(this.seed.value),
        batch_size: Number(this.batch.value),
        mode: this.mode.value,
        styles: this.pickedStyles(),
        control_units: control,
      });
      this.store.resolveSubmitting(tempId, await this.api.getJob(jobId));
      this.follow(jobId);
    } catch (e) {
      this.store.dropSubmitting(tempId);
      if (e instanceof ApiError) {
        // route field errors to their slider, the rest to the banner
        const leftovers: string[] = [];
        for (const [field, msg] of Object.entries(e.fields)) {
          const slot = this.fieldErrors.get(field);
          if (slot) slot.textContent = msg;
          else leftovers.push(`${field}: ${msg}`);
        }
        this.errors.textContent = [e.message, ...leftovers].join("; ");
      } else {
        this.errors.textContent = String(e);
      }
    }
  }

  /** Subscribe to SSE for a job; used on submit and again after reload. */
  follow(jobId: string) {
    if (this.following.has(jobId)) return;
    this.following.add(jobId);
    followJob(this.api.eventsUrl(jobId), this.store);
  }

  private renderJobs() {
    clear(this.jobList);
    for (const v of this.store.list()) {
      this.jobList.append(this.jobCard(v));
    }
  }

  private jobCard(v: UiJobView): HTMLElement {
    const head = el("div", { class: "job-head" }, [
      el("code", { text: v.id.slice(0, 10) }),
      el("span", { class: `state ${v.state}`, text: v.state }),
    ]);
    const card = el("div", { class: "job-card" }, [head]);
    if (v.parentJob) {
      const chain = this.store.lineage(v.id).slice(1);
      head.append(el("span", { class: "lineage", text: `edit of ${chain.join(" < ")}` }));
    }
    if (TERMINAL.has(v.state)) {
      if (v.state === "completed") {
        const gallery = el("div", { class: "gallery" });
        v.resultUrls.forEach((path, i) => {
          const img = el("img", { src: this.api.resultUrl(path), class: "thumb" });
          img.addEventListener("click", () => this.onEdit(v.id, i));
          gallery.append(img);
        });
        card.append(gallery);
      } else if (v.error) {
        card.append(el("div", { class: "error", text: v.error }));
      }
    } else {
      const bar = el("progress", { max: "1", value: String(v.progress) });
      const cancel = el("button", { text: "Cancel", class: "small" });
      cancel.addEventListener("click", () => void this.api.cancelJob(v.id).catch(() => {}));
      card.append(el("div", { class: "running" }, [bar, cancel]));
    }
    return card;
  }
}
