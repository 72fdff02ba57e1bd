// Typed client for the triage HTTP API. The fetch implementation is
// injected so tests can run against a fake server.

export type Category =
  | "unassigned"
  | "occlusion"
  | "both_off"
  | "opposite_side"
  | "blur"
  | "other";

export interface ErrorCard {
  frame_id: string;
  score_left: number;
  score_right: number;
  label_left: boolean;
  label_right: boolean;
  pred_left: boolean;
  pred_right: boolean;
  behavior: string;
  lighting: string;
  occluded: boolean;
  category: Category;
}

export interface ErrorPage {
  errors: ErrorCard[];
  page: number;
  per_page: number;
  total: number;
}

export interface IterationPlan {
  counts: Record<string, number>;
  behavior_weight_deltas: Record<string, number>;
  added_sequences: number;
  enable_cross_reach: boolean;
  motion_blur_frames_delta: number;
}

export interface ApplyResult {
  path: string;
  hash: string;
  plan: IterationPlan;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      // keep statusText
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class TriageApi {
  constructor(
    private readonly fetchImpl: FetchLike,
    private readonly base: string = "",
  ) {}

  async listErrors(page: number, perPage: number): Promise<ErrorPage> {
    const res = await this.fetchImpl(`${this.base}/errors?page=${page}&per_page=${perPage}`);
    return parseOrThrow<ErrorPage>(res);
  }

  frameUrl(frameId: string): string {
    return `${this.base}/frames/${encodeURIComponent(frameId)}`;
  }

  async assignCategory(frameId: string, category: Category, note = ""): Promise<void> {
    const res = await this.fetchImpl(`${this.base}/errors/${encodeURIComponent(frameId)}/category`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ category, note }),
    });
    await parseOrThrow<unknown>(res);
  }

  async getPlan(): Promise<IterationPlan | null> {
    const res = await this.fetchImpl(`${this.base}/plan`);
    if (res.status === 409) return null; // nothing categorized yet
    return parseOrThrow<IterationPlan>(res);
  }

  async applyPlan(): Promise<ApplyResult> {
    const res = await this.fetchImpl(`${this.base}/plan/apply`, { method: "POST" });
    return parseOrThrow<ApplyResult>(res);
  }
}
