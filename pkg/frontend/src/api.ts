import {
  ClassifyRequest,
  ClassifyResponse,
  ClassifyResponseSchema,
  ErrorBodySchema,
  HeadlineReport,
  HeadlineReportSchema,
  JobHandle,
  JobHandleSchema,
  MatchRequest,
  MatchStatus,
  MatchStatusSchema,
  PreprocessRequest,
  PreprocessResponse,
  PreprocessResponseSchema,
  VolumesResponse,
  VolumesResponseSchema,
} from './types';

/** Server-reported failure with a machine code and an optional hint. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public hint: string = ''
  ) {
    super(message);
  }
}

/** The API could not be reached at all (network down, server stopped). */
export class OfflineError extends Error {
  constructor() {
    super('API unreachable');
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Typed client for the slice-analysis REST API. All responses are validated
 * against the shared schemas; the UI never computes metric values itself.
 */
export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: FetchLike = (url, init) => fetch(url, init)
  ) {}

  private async request<T>(
    method: string,
    path: string,
    schema: { parse(data: unknown): T },
    body?: unknown
  ): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body !== undefined ? { 'Content-Type': 'application/json' } : undefined,
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    } catch {
      throw new OfflineError();
    }
    if (!response.ok) {
      let code = 'http_error';
      let message = `HTTP ${response.status}`;
      let hint = '';
      try {
        const parsed = ErrorBodySchema.safeParse(await response.json());
        if (parsed.success) {
          code = parsed.data.code;
          message = parsed.data.message;
          hint = parsed.data.hint;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(response.status, code, message, hint);
    }
    return schema.parse(await response.json());
  }

  volumes(): Promise<VolumesResponse> {
    return this.request('GET', '/api/volumes', VolumesResponseSchema);
  }

  preprocess(req: PreprocessRequest): Promise<PreprocessResponse> {
    return this.request('POST', '/api/preprocess', PreprocessResponseSchema, req);
  }

  classify(req: ClassifyRequest): Promise<ClassifyResponse> {
    return this.request('POST', '/api/classify', ClassifyResponseSchema, req);
  }

  startMatch(req: MatchRequest): Promise<JobHandle> {
    return this.request('POST', '/api/match', JobHandleSchema, req);
  }

  matchStatus(jobId: string): Promise<MatchStatus> {
    return this.request('GET', `/api/match/${jobId}`, MatchStatusSchema);
  }

  /** Static headline metrics deployed next to the assets; null when absent. */
  async headlineReport(): Promise<HeadlineReport | null> {
    try {
      const response = await this.fetchFn(this.baseUrl + '/report.json', {});
      if (!response.ok) return null;
      const parsed = HeadlineReportSchema.safeParse(await response.json());
      return parsed.success ? parsed.data : null;
    } catch {
      return null;
    }
  }
}
