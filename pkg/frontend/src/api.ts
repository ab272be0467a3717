/**
 * Typed access to the diagnosis service. All numeric work (scores, orderings,
 * weights) happens server-side; this client only moves JSON.
 */

export type SortKey = "under" | "over" | "total" | "unseen_sum";
export type Side = "over" | "under";

export interface OverviewClass {
  name: string;
  index: number;
  seen: boolean;
  diag_count: number;
  coords: [number, number];
}

export interface OverviewPayload {
  classes: OverviewClass[];
  attributes: string[];
  revision: number;
}

export interface DiagnosticsPayload {
  attributes: string[];
  categories: string[];
  q_over: number[][];
  q_under: number[][];
  stacking: string[];
  ordering: number[];
  sort: SortKey;
  unseen_signatures: Record<string, number[]>;
  weights: number[];
  revision: number;
}

export interface DecompositionEntry {
  predicted: string;
  value: number;
}

export interface DecompositionPayload {
  attribute: number;
  category: number;
  category_name: string;
  side: Side;
  total: number;
  breakdown: DecompositionEntry[];
  revision: number;
}

export interface WeightsPayload {
  weights: number[];
  revision: number;
  below_guidance: number[];
}

export interface ClassMetrics {
  per_class: Record<string, number>;
  counts: Record<string, number>;
  mean_per_class: number;
  overall: number;
  n_instances: number;
  n_correct: number;
}

export interface MetricsPayload {
  diag: ClassMetrics;
  unseen: ClassMetrics | null;
  revision: number;
}

export interface RetrainStartPayload {
  job_id: number;
  status: string;
}

export interface RetrainJobPayload {
  id: number;
  status: "pending" | "running" | "done" | "failed";
  base_revision: number;
  error: string | null;
  metrics_before: ClassMetrics | null;
  metrics_after: ClassMetrics | null;
  unseen_before: ClassMetrics | null;
  unseen_after: ClassMetrics | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      body = null;
    }
    if (!resp.ok) {
      const err = (body ?? {}) as { error?: string; code?: string };
      throw new ApiError(resp.status, err.code ?? "http_error", err.error ?? resp.statusText);
    }
    return body as T;
  }

  overview(): Promise<OverviewPayload> {
    return this.request("/api/overview");
  }

  diagnostics(seen: string[], unseen: string[], sort: SortKey): Promise<DiagnosticsPayload> {
    const params = new URLSearchParams({
      seen: seen.join(","),
      unseen: unseen.join(","),
      sort,
    });
    return this.request(`/api/diagnostics?${params}`);
  }

  decomposition(attr: number, cat: number, side: Side): Promise<DecompositionPayload> {
    const params = new URLSearchParams({
      attr: String(attr),
      cat: String(cat),
      side,
    });
    return this.request(`/api/decomposition?${params}`);
  }

  weights(): Promise<WeightsPayload> {
    return this.request("/api/weights");
  }

  adjustWeight(attr: number, delta: number): Promise<WeightsPayload> {
    return this.request("/api/weights", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ attr, delta }),
    });
  }

  startRetrain(): Promise<RetrainStartPayload> {
    return this.request("/api/retrain", { method: "POST" });
  }

  retrainStatus(jobId: number): Promise<RetrainJobPayload> {
    return this.request(`/api/retrain/${jobId}`);
  }

  metrics(): Promise<MetricsPayload> {
    return this.request("/api/metrics");
  }
}
