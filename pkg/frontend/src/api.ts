// Thin HTTP client over the review service. All reads and writes go
// through here; the fetch implementation is injectable so tests can run
// against an in-memory fixture server.

import type {
  Annotation,
  AnnotationStatus,
  Manifest,
  NewAnnotationDraft,
  SessionDetail,
  SessionEvent,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConflictError";
  }
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (resp.status === 409) {
    throw new ConflictError(await resp.text());
  }
  if (!resp.ok) {
    throw new ApiError(resp.status, await resp.text());
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  listSessions(): Promise<Manifest[]> {
    return this.fetchImpl(this.url("/sessions")).then((r) => expectJson<Manifest[]>(r));
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}`)).then((r) =>
      expectJson<SessionDetail>(r),
    );
  }

  getEvents(
    sessionId: string,
    params: { from?: number; to?: number; type?: string } = {},
  ): Promise<SessionEvent[]> {
    const q = new URLSearchParams();
    if (params.from !== undefined) q.set("from", String(params.from));
    if (params.to !== undefined) q.set("to", String(params.to));
    if (params.type !== undefined) q.set("type", params.type);
    const suffix = q.toString() ? `?${q.toString()}` : "";
    return this.fetchImpl(this.url(`/sessions/${sessionId}/events${suffix}`)).then((r) =>
      expectJson<SessionEvent[]>(r),
    );
  }

  getAnnotations(
    sessionId: string,
    filter: { kind?: string; status?: string } = {},
  ): Promise<Annotation[]> {
    const q = new URLSearchParams();
    if (filter.kind) q.set("kind", filter.kind);
    if (filter.status) q.set("status", filter.status);
    const suffix = q.toString() ? `?${q.toString()}` : "";
    return this.fetchImpl(this.url(`/sessions/${sessionId}/annotations${suffix}`)).then((r) =>
      expectJson<Annotation[]>(r),
    );
  }

  postAnnotation(sessionId: string, draft: NewAnnotationDraft): Promise<Annotation> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/annotations`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(draft),
    }).then((r) => expectJson<Annotation>(r));
  }

  patchAnnotation(
    sessionId: string,
    annotationId: string,
    status: AnnotationStatus,
    author?: string,
  ): Promise<Annotation> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/annotations/${annotationId}`), {
      method: "PATCH",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ status, author }),
    }).then((r) => expectJson<Annotation>(r));
  }

  frameUrl(sessionId: string, index: number): string {
    return this.url(`/sessions/${sessionId}/frames/${index}.png`);
  }
}
