import type {
  AcceptResponse, AgreementCurve, FitResponse, FrameMeta, FrameSummary, Meta, Vec2,
} from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

/** Thin typed client for the annotation service; no state beyond the base URL. */
export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl}/v1${path}`, init);
    } catch (err) {
      throw new ApiError(`server unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  meta(): Promise<Meta> {
    return this.request<Meta>("/meta");
  }

  frames(): Promise<{ frames: FrameSummary[] }> {
    return this.request<{ frames: FrameSummary[] }>("/frames");
  }

  frame(frameId: string): Promise<FrameMeta> {
    return this.request<FrameMeta>(`/frames/${encodeURIComponent(frameId)}`);
  }

  depthUrl(frameId: string): string {
    return `${this.baseUrl}/v1/frames/${encodeURIComponent(frameId)}/depth.png`;
  }

  rgbUrl(frameId: string): string {
    return `${this.baseUrl}/v1/frames/${encodeURIComponent(frameId)}/rgb.png`;
  }

  fit(frameId: string, labels: Record<string, Vec2>, annotator: string): Promise<FitResponse> {
    return this.request<FitResponse>(`/frames/${encodeURIComponent(frameId)}/fit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ labels, annotator }),
    });
  }

  accept(
    frameId: string,
    labels: Record<string, Vec2>,
    annotator: string,
    occluded: string[] = [],
  ): Promise<AcceptResponse> {
    return this.request<AcceptResponse>(`/frames/${encodeURIComponent(frameId)}/accept`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ labels, annotator, occluded }),
    });
  }

  agreement(mode: "max" | "mean" = "max"): Promise<AgreementCurve> {
    return this.request<AgreementCurve>(`/agreement?mode=${mode}`);
  }
}
