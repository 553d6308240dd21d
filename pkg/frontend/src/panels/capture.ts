// Capture panel: upload a viewport capture (color PNG, optional 16-bit depth
// with near/far planes), browse existing captures, preview the edge/depth
// conditioning maps the service would derive.

import { ApiError, StudioApi } from "../api.js";
import type { CaptureMeta } from "../api.js";
import { clear, el, labeled } from "../dom.js";

export class CapturePanel {
  readonly root: HTMLElement;
  selected: string | null = null;
  onSelect: (id: string) => void = () => {};

  private api: StudioApi;
  private colorInput = el("input", { type: "file", accept: "image/png" });
  private depthInput = el("input", { type: "file", accept: "image/png" });
  private nearInput = el("input", { type: "number", step: "0.1", value: "0.5" });
  private farInput = el("input", { type: "number", step: "0.1", value: "50" });
  private errorLine = el("div", { class: "error", role: "alert" });
  private listBox = el("div", { class: "capture-list" });
  private previewBox = el("div", { class: "previews" });
  private showEdge = el("input", { type: "checkbox", checked: "" });
  private showDepth = el("input", { type: "checkbox" });

  constructor(api: StudioApi) {
    this.api = api;
    const uploadBtn = el("button", { text: "Upload capture" });
    uploadBtn.addEventListener("click", () => void this.upload());
    this.showEdge.addEventListener("change", () => this.renderPreviews());
    this.showDepth.addEventListener("change", () => this.renderPreviews());

    this.root = el("section", { class: "panel" }, [
      el("h2", { text: "Captures" }),
      labeled("Color PNG", this.colorInput),
      labeled("Depth PNG (16-bit, optional)", this.depthInput),
      labeled("Near plane", this.nearInput),
      labeled("Far plane", this.farInput),
      uploadBtn,
      this.errorLine,
      this.listBox,
      el("div", { class: "toggles" }, [
        labeled("Edge preview", this.showEdge),
        labeled("Depth preview", this.showDepth),
      ]),
      this.previewBox,
    ]);
  }

  async refresh() {
    const captures = await this.api.listCaptures();
    this.renderList(captures.filter((c) => c.kind === "capture"));
  }

  private async upload() {
    this.errorLine.textContent = "";
    const color = this.colorInput.files?.[0];
    if (!color) {
      this.errorLine.textContent = "pick a color PNG first";
      return;
    }
    const depth = this.depthInput.files?.[0];
    try {
      const id = await this.api.uploadCapture(color, {
        depth: depth ?? undefined,
        near: Number(this.nearInput.value),
        far: Number(this.farInput.value),
      });
      await this.refresh();
      this.select(id);
    } catch (e) {
      // surface 400s (bad png, depth without planes) inline instead of dying
      this.errorLine.textContent = e instanceof ApiError ? `${e.code}: ${e.message}` : String(e);
    }
  }

  private renderList(captures: CaptureMeta[]) {
    clear(this.listBox);
    for (const c of [...captures].reverse()) {
      const img = el("img", {
        src: this.api.captureUrl(c.id),
        class: c.id === this.selected ? "thumb selected" : "thumb",
        title: `${c.width}x${c.height}${c.has_depth ? " +depth" : ""}`,
      });
      img.addEventListener("click", () => this.select(c.id));
      this.listBox.append(img);
    }
  }

  private select(id: string) {
    this.selected = id;
    for (const img of this.listBox.querySelectorAll("img")) {
      img.classList.toggle("selected", img.src.endsWith(`/${id}`));
    }
    this.renderPreviews();
    this.onSelect(id);
  }

  private renderPreviews() {
    clear(this.previewBox);
    if (!this.selected) return;
    if (this.showEdge.checked) {
      this.previewBox.append(
        el("img", { src: this.api.controlPreviewUrl(this.selected, "edge"), class: "thumb" }),
      );
    }
    if (this.showDepth.checked) {
      const img = el("img", {
        src: this.api.controlPreviewUrl(this.selected, "depth"),
        class: "thumb",
      });
      img.addEventListener("error", () => {
        img.replaceWith(el("span", { class: "error", text: "no depth buffer" }));
      });
      this.previewBox.append(img);
    }
  }
}
