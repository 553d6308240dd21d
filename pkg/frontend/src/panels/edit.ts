// Edit panel: paint a repaint mask over a finished result and submit a
// regional regeneration. Strokes are kept as geometry and rasterized by
// mask.ts at exact result resolution; the canvas is only a viewport.

import { StudioApi, bytesToBase64 } from "../api.js";
import { clear, el, labeled } from "../dom.js";
import type { JobsStore } from "../jobs.js";
import { Stroke, maskIsEmpty, rasterizeStrokes } from "../mask.js";
import { encodeGray8 } from "../png.js";

export class EditPanel {
  readonly root: HTMLElement;
  onSubmitted: (childJobId: string) => void = () => {};

  private api: StudioApi;
  private store: JobsStore;
  private jobId: string | null = null;
  private resultIndex = 0;
  private width = 0;
  private height = 0;
  private strokes: Stroke[] = [];
  private current: Stroke | null = null;

  private breadcrumb = el("div", { class: "lineage" });
  private stage = el("div", { class: "stage" });
  private baseImg = el("img", { class: "base" });
  private overlay = el("canvas", { class: "overlay" });
  private radius = el("input", { type: "range", min: "1", max: "64", value: "12" });
  private eraser = el("input", { type: "checkbox" });
  private feather = el("input", { type: "number", min: "0", max: "30", value: "4" });
  private prompt = el("textarea", { rows: "2", placeholder: "what should this region become" });
  private regen = el("button", { text: "Regenerate region", class: "primary" });
  private errorLine = el("div", { class: "error", role: "alert" });

  constructor(api: StudioApi, store: JobsStore) {
    this.api = api;
    this.store = store;

    const clearBtn = el("button", { text: "Clear mask", class: "small" });
    clearBtn.addEventListener("click", () => {
      this.strokes = [];
      this.repaint();
    });
    this.regen.addEventListener("click", () => void this.submit());
    this.stage.append(this.baseImg, this.overlay);
    this.wirePointer();

    this.root = el("section", { class: "panel" }, [
      el("h2", { text: "Edit" }),
      this.breadcrumb,
      this.stage,
      el("div", { class: "row" }, [
        labeled("Brush", this.radius),
        labeled("Erase", this.eraser),
        labeled("Feather", this.feather),
        clearBtn,
      ]),
      labeled("Region prompt", this.prompt),
      this.regen,
      this.errorLine,
    ]);
    this.repaint();
  }

  async open(jobId: string, resultIndex: number) {
    const job = await this.api.getJob(jobId, true);
    const params = job.params as { width: number; height: number } | undefined;
    if (!job.results || !params) return;
    this.jobId = jobId;
    this.resultIndex = resultIndex;
    this.width = params.width;
    this.height = params.height;
    this.strokes = [];
    this.baseImg.src = this.api.resultUrl(job.results[resultIndex]);
    this.overlay.width = this.width;
    this.overlay.height = this.height;
    this.renderBreadcrumb();
    this.repaint();
  }

  /** The exact bytes an inpaint submit would upload right now. */
  exportMaskPng(): Uint8Array {
    return encodeGray8(this.width, this.height, this.mask());
  }

  private mask(): Uint8Array {
    return rasterizeStrokes(this.width || 1, this.height || 1, this.strokes);
  }

  private renderBreadcrumb() {
    clear(this.breadcrumb);
    if (!this.jobId) return;
    const chain = this.store.lineage(this.jobId);
    chain.reverse().forEach((id, i) => {
      if (i > 0) this.breadcrumb.append(" > ");
      this.breadcrumb.append(el("code", { text: id.slice(0, 10) }));
    });
  }

  private wirePointer() {
    const toPixel = (ev: PointerEvent) => {
      const rect = this.overlay.getBoundingClientRect();
      return {
        x: Math.round(((ev.clientX - rect.left) / rect.width) * this.width),
        y: Math.round(((ev.clientY - rect.top) / rect.height) * this.height),
      };
    };
    this.overlay.addEventListener("pointerdown", (ev) => {
      if (!this.jobId) return;
      this.overlay.setPointerCapture(ev.pointerId);
      this.current = {
        radius: Number(this.radius.value),
        erase: this.eraser.checked,
        points: [toPixel(ev)],
      };
      this.strokes.push(this.current);
      this.repaint();
    });
    this.overlay.addEventListener("pointermove", (ev) => {
      if (!this.current) return;
      this.current.points.push(toPixel(ev));
      this.repaint();
    });
    const up = () => {
      this.current = null;
    };
    this.overlay.addEventListener("pointerup", up);
    this.overlay.addEventListener("pointercancel", up);
  }

  private repaint() {
    const mask = this.mask();
    const empty = maskIsEmpty(mask);
    this.regen.toggleAttribute("disabled", empty || !this.jobId);
    if (!this.width || !this.height) return;
    const ctx = this.overlay.getContext("2d");
    if (!ctx) return;
    const img = ctx.createImageData(this.width, this.height);
    for (let i = 0; i < mask.length; i++) {
      if (mask[i]) {
        img.data[i * 4] = 255;     // translucent red where repaint happens
        img.data[i * 4 + 3] = 110;
      }
    }
    ctx.putImageData(img, 0, 0);
  }

  private async submit() {
    if (!this.jobId) return;
    this.errorLine.textContent = "";
    try {
      const childId = await this.api.inpaint(this.jobId, {
        mask: bytesToBase64(this.exportMaskPng()),
        result_index: this.resultIndex,
        feather_radius: Number(this.feather.value),
        prompt: this.prompt.value || undefined,
      });
      this.strokes = [];
      this.repaint();
      this.onSubmitted(childId);
    } catch (e) {
      this.errorLine.textContent = String(e instanceof Error ? e.message : e);
    }
  }
}
