// Typed client for the generation service.

import type {
  GenerateRequest,
  GenerateResponse,
  JobRecord,
  MotionPayload,
  ParseResponse,
  SampleActionsResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface PollOptions {
  initialMs?: number;
  maxMs?: number;
  timeoutMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let code = "http_error";
      let message = `${response.status} on ${path}`;
      try {
        const body = await response.json();
        const detail = body?.detail;
        if (detail && typeof detail === "object") {
          code = detail.code ?? code;
          message = detail.message ?? message;
        }
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  healthz(): Promise<{ status: string }> {
    return this.request("/healthz");
  }

  parse(text: string): Promise<ParseResponse> {
    return this.post("/parse", { text });
  }

  sampleActions(
    text: string,
    seeds: number,
    steps: [number, number] = [15, 15],
    length = 60,
  ): Promise<SampleActionsResponse> {
    return this.post("/actions/sample", { text, seeds, steps, length });
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.post("/generate", req);
  }

  getJob(id: string): Promise<JobRecord> {
    return this.request(`/jobs/${id}`);
  }

  getMotion(id: string): Promise<MotionPayload> {
    return this.request(`/motions/${id}`);
  }

  /** Poll a job with exponential backoff until done or failed. */
  async waitForJob(id: string, options: PollOptions = {}): Promise<JobRecord> {
    const initial = options.initialMs ?? 150;
    const max = options.maxMs ?? 2000;
    const timeout = options.timeoutMs ?? 120_000;
    const sleep = options.sleep ?? defaultSleep;
    const started = Date.now();
    let interval = initial;
    for (;;) {
      const job = await this.getJob(id);
      if (job.status === "done" || job.status === "failed") {
        return job;
      }
      if (Date.now() - started > timeout) {
        throw new ApiError(408, "poll_timeout", `job ${id} still ${job.status}`);
      }
      await sleep(interval);
      interval = Math.min(interval * 1.6, max);
    }
  }
}
