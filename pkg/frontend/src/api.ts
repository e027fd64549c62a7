/**
 * Thin client for the monitoring engine's HTTP API.  Response payloads are
 * passed through untouched; the console displays them, it never recomputes
 * them.
 */

export interface CameraInfo {
  camera_id: string;
  has_calibration: boolean;
}

export interface QuadViolation {
  kind: string;
  indices: number[];
  message: string;
}

export interface ComputeRequest {
  image_points: [number, number][];
  world_rect_cm: [number, number];
  image_size: [number, number];
}

export interface ComputeResponse {
  homography: number[][];
  edge_lengths_cm: number[];
  edge_errors_pct: number[];
}

export type MeasureRequest = {
  point_a: [number, number];
  point_b: [number, number];
} & ({ camera_id: string } | { homography: number[][] });

export interface AlertRow {
  id: string;
  kind: string;
  camera_id: string;
  started_ts_ms: number;
  min_distance_cm: number | null;
}

export interface TrendRow {
  bucket_start_ts: number;
  count: number;
}

/** The server rejected the corner set and said why, point indices included. */
export class QuadRejected extends Error {
  constructor(public readonly violations: QuadViolation[]) {
    super(violations.map((v) => v.message).join("; "));
    this.name = "QuadRejected";
  }
}

/** One probe point has no floor position (it sits on the horizon line). */
export class DegeneratePoint extends Error {
  constructor(public readonly point: "a" | "b", message: string) {
    super(message);
    this.name = "DegeneratePoint";
  }
}

/** Any other non-2xx answer, status and payload kept for display. */
export class ApiError extends Error {
  constructor(public readonly status: number, public readonly payload: unknown) {
    super(`server answered ${status}: ${JSON.stringify(payload)}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** The surface the console needs; CalibApi is the HTTP implementation. */
export interface Api {
  frameUrl(cameraId: string): string;
  cameras(signal?: AbortSignal): Promise<CameraInfo[]>;
  compute(request: ComputeRequest, signal?: AbortSignal): Promise<ComputeResponse>;
  saveCalibration(
    cameraId: string,
    request: ComputeRequest,
    signal?: AbortSignal,
  ): Promise<ComputeResponse>;
  measure(request: MeasureRequest, signal?: AbortSignal): Promise<number>;
  alerts(
    params?: { camera_id?: string; kind?: string; from_ts?: number; to_ts?: number },
    signal?: AbortSignal,
  ): Promise<AlertRow[]>;
  trends(
    bucket: "hour" | "day",
    params?: { camera_id?: string; kind?: string },
    signal?: AbortSignal,
  ): Promise<TrendRow[]>;
}

export class CalibApi implements Api {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  frameUrl(cameraId: string): string {
    return `${this.baseUrl}/api/frame/${encodeURIComponent(cameraId)}`;
  }

  async cameras(signal?: AbortSignal): Promise<CameraInfo[]> {
    return this.expectOk(await this.send("GET", "/api/cameras", undefined, signal));
  }

  async compute(request: ComputeRequest, signal?: AbortSignal): Promise<ComputeResponse> {
    const reply = await this.send("POST", "/api/calibration/compute", request, signal);
    this.throwIfRejectedQuad(reply);
    return this.expectOk(reply);
  }

  async saveCalibration(
    cameraId: string,
    request: ComputeRequest,
    signal?: AbortSignal,
  ): Promise<ComputeResponse> {
    const reply = await this.send(
      "PUT",
      `/api/calibration/${encodeURIComponent(cameraId)}`,
      request,
      signal,
    );
    this.throwIfRejectedQuad(reply);
    return this.expectOk(reply, 201);
  }

  async measure(request: MeasureRequest, signal?: AbortSignal): Promise<number> {
    const reply = await this.send("POST", "/api/measure", request, signal);
    if (reply.status === 400 && this.errorKind(reply.payload) === "point_at_infinity") {
      const payload = reply.payload as { point: "a" | "b"; message?: string };
      throw new DegeneratePoint(payload.point, payload.message ?? "point at infinity");
    }
    const payload = this.expectOk(reply) as { distance_cm: number };
    return payload.distance_cm;
  }

  async alerts(
    params: { camera_id?: string; kind?: string; from_ts?: number; to_ts?: number } = {},
    signal?: AbortSignal,
  ): Promise<AlertRow[]> {
    return this.expectOk(
      await this.send("GET", `/api/alerts${this.query(params)}`, undefined, signal),
    );
  }

  async trends(
    bucket: "hour" | "day",
    params: { camera_id?: string; kind?: string } = {},
    signal?: AbortSignal,
  ): Promise<TrendRow[]> {
    return this.expectOk(
      await this.send("GET", `/api/trends${this.query({ bucket, ...params })}`, undefined, signal),
    );
  }

  // -- plumbing ------------------------------------------------------------

  private query(params: Record<string, string | number | undefined>): string {
    const pairs = Object.entries(params).filter(([, v]) => v !== undefined && v !== "");
    if (pairs.length === 0) return "";
    const qs = new URLSearchParams(pairs.map(([k, v]) => [k, String(v)]));
    return `?${qs.toString()}`;
  }

  private async send(
    method: string,
    path: string,
    body: unknown,
    signal?: AbortSignal,
  ): Promise<{ status: number; payload: unknown }> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
      signal,
    });
    const payload = await response.json().catch(() => null);
    return { status: response.status, payload };
  }

  private errorKind(payload: unknown): string | null {
    if (payload && typeof payload === "object" && "error" in payload) {
      return String((payload as { error: unknown }).error);
    }
    return null;
  }

  private throwIfRejectedQuad(reply: { status: number; payload: unknown }): void {
    if (
      reply.status === 400 &&
      reply.payload &&
      typeof reply.payload === "object" &&
      Array.isArray((reply.payload as { violations?: unknown }).violations)
    ) {
      throw new QuadRejected((reply.payload as { violations: QuadViolation[] }).violations);
    }
  }

  private expectOk<T>(reply: { status: number; payload: unknown }, okStatus = 200): T {
    if (reply.status !== okStatus) {
      throw new ApiError(reply.status, reply.payload);
    }
    return reply.payload as T;
  }
}
