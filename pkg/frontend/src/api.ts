// Typed client for the orchestration service. Every request the studio makes
// goes through here; there is no other network access.

export interface CaptureMeta {
  id: string;
  width: number;
  height: number;
  kind: string;
  has_depth: boolean;
  created: number;
}

export interface StyleInfo {
  name: string;
  display_name: string;
  default_weight: number;
  description: string;
}

export interface JobSummary {
  job_id: string;
  capture_id: string;
  state: string;
  progress: number;
  result_count: number;
  error: string | null;
  parent_job: string | null;
  created: number;
  updated: number;
  results?: string[];
  params?: Record<string, unknown>;
}

export interface StyleRef {
  name: string;
  weight: number;
}

export interface JobParams {
  prompt: string;
  width: number;
  height: number;
  negative_prompt?: string;
  seed?: number;
  steps?: number;
  cfg_scale?: number;
  sampler?: string;
  batch_size?: number;
  mode?: string;
  denoising_strength?: number;
  styles?: StyleRef[];
  control_units?: Array<{ kind: string; weight?: number }>;
}

export interface InpaintRequest {
  mask: string; // base64 PNG, white = repaint
  result_index?: number;
  feather_radius?: number;
  prompt?: string;
  overrides?: Record<string, unknown>;
}

/** Service error envelope, rethrown with field-level details intact. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public fields: Record<string, string> = {},
  ) {
    super(message);
  }
}

export function bytesToBase64(bytes: Uint8Array): string {
  let s = "";
  const step = 0x8000; // avoid call-stack limits on large masks
  for (let i = 0; i < bytes.length; i += step) {
    s += String.fromCharCode(...bytes.subarray(i, i + step));
  }
  return btoa(s);
}

export class StudioApi {
  constructor(
    private base = "",
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const res = await (0, this.fetchImpl)(this.base + path, init);
    if (res.ok) {
      return res.status === 204 ? null : res.json();
    }
    let code = "http_error";
    let message = `${res.status} ${res.statusText}`;
    let fields: Record<string, string> = {};
    try {
      const doc = (await res.json()) as Record<string, unknown>;
      if (typeof doc.code === "string") code = doc.code;
      if (typeof doc.message === "string") message = doc.message;
      if (doc.fields && typeof doc.fields === "object") {
        fields = doc.fields as Record<string, string>;
      }
    } catch {
      // non-JSON error body, keep the status text
    }
    throw new ApiError(res.status, code, message, fields);
  }

  private post(path: string, body: unknown): Promise<unknown> {
    return this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async uploadCapture(
    color: Blob,
    opts: { depth?: Blob; near?: number; far?: number } = {},
  ): Promise<string> {
    const form = new FormData();
    form.append("color", color, "capture.png");
    if (opts.depth) {
      form.append("depth", opts.depth, "capture.depth.png");
      form.append("near", String(opts.near));
      form.append("far", String(opts.far));
    }
    const doc = (await this.request("/api/v1/captures", {
      method: "POST",
      body: form,
    })) as { capture_id: string };
    return doc.capture_id;
  }

  listCaptures(): Promise<CaptureMeta[]> {
    return this.request("/api/v1/captures") as Promise<CaptureMeta[]>;
  }

  captureUrl(id: string): string {
    return `${this.base}/api/v1/captures/${id}`;
  }

  controlPreviewUrl(id: string, kind: "edge" | "depth", width?: number, height?: number): string {
    const q = width && height ? `?width=${width}&height=${height}` : "";
    return `${this.base}/api/v1/captures/${id}/control/${kind}${q}`;
  }

  listStyles(): Promise<StyleInfo[]> {
    return this.request("/api/v1/styles") as Promise<StyleInfo[]>;
  }

  async submitJob(captureId: string, params: JobParams): Promise<string> {
    const doc = (await this.post("/api/v1/jobs", {
      capture_id: captureId,
      params,
    })) as { job_id: string };
    return doc.job_id;
  }

  getJob(id: string, includeParams = false): Promise<JobSummary> {
    const q = includeParams ? "?include_params=1" : "";
    return this.request(`/api/v1/jobs/${id}${q}`) as Promise<JobSummary>;
  }

  listJobs(state?: string): Promise<JobSummary[]> {
    const q = state ? `?state=${state}` : "";
    return this.request(`/api/v1/jobs${q}`) as Promise<JobSummary[]>;
  }

  cancelJob(id: string): Promise<unknown> {
    return this.post(`/api/v1/jobs/${id}/cancel`, {});
  }

  async inpaint(parentId: string, req: InpaintRequest): Promise<string> {
    const doc = (await this.post(`/api/v1/jobs/${parentId}/inpaint`, req)) as {
      job_id: string;
    };
    return doc.job_id;
  }

  resultUrl(path: string): string {
    return this.base + path;
  }

  eventsUrl(jobId: string): string {
    return `${this.base}/api/v1/jobs/${jobId}/events`;
  }

  healthz(): Promise<{ status: string; backend: string }> {
    return this.request("/api/v1/healthz") as Promise<{ status: string; backend: string }>;
  }
}
