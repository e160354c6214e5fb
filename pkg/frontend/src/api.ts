/** Typed client for the session service. All server interaction goes
 * through these endpoints; `fetchImpl` is injectable for tests. */

export interface SessionInfo {
  session_id: string;
  frame_count: number;
  categories: number[];
}

export interface RoundResponse {
  round: number;
  prediction_version: number;
  inference_ms: number;
}

export interface RoundCurvePoint {
  round: number;
  mean_j: number;
  mean_f: number;
  cum_time_ms: number;
}

export interface Polyline {
  points: Array<[number, number]>;
  category: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { error?: string };
        if (body.error) detail = body.error;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  datasetStatus(datasetId: string): Promise<{ state: string }> {
    return this.json(`/datasets/${datasetId}/status`);
  }

  createSession(datasetId: string, backend = "gnn"): Promise<SessionInfo> {
    return this.json("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ dataset_id: datasetId, backend }),
    });
  }

  submitScribbles(
    sessionId: string,
    frame: number,
    polylines: Polyline[],
  ): Promise<RoundResponse> {
    return this.json(`/sessions/${sessionId}/scribbles`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ frame, polylines }),
    });
  }

  async fetchPrediction(
    sessionId: string,
    frame: number,
    version: number,
    etag?: string,
  ): Promise<{ status: number; body: Blob | null; etag: string | null }> {
    const headers: Record<string, string> = {};
    if (etag) headers["If-None-Match"] = etag;
    const resp = await this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/prediction?frame=${frame}&version=${version}`,
      { headers },
    );
    if (resp.status === 304) {
      return { status: 304, body: null, etag };
    }
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return {
      status: resp.status,
      body: await resp.blob(),
      etag: resp.headers.get("etag"),
    };
  }

  frameUrl(sessionId: string, frame: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/frames/${frame}`;
  }

  async metrics(sessionId: string): Promise<RoundCurvePoint[] | null> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/metrics`,
    );
    if (resp.status === 204) return null;
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    const body = (await resp.json()) as { rounds: RoundCurvePoint[] };
    return body.rounds;
  }

  deleteSession(sessionId: string): Promise<void> {
    return this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`, {
      method: "DELETE",
    }).then(() => undefined);
  }
}
