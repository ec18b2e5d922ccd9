import {
  decisionResponseSchema,
  exposureSchema,
  recordsResponseSchema,
  SchemaError,
} from "./schema";
import type { DecisionTableView, ExposureSamples, PatientRecordView } from "./types";

export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConflictError";
  }
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface DecisionEnvelope {
  sessionId: string;
  revision: number;
  decision: DecisionTableView;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin client over the trial service.  The server is the single source of
 * truth: the client keeps nothing beyond the latest revision token and
 * re-fetches after a 409.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`, 0);
    }
    if (response.status === 409) {
      const body = await response.text();
      throw new ConflictError(body);
    }
    if (!response.ok) {
      const body = await response.text();
      throw new ApiError(`${response.status}: ${body}`, response.status);
    }
    return response.json();
  }

  private decisionEnvelope(raw: unknown): DecisionEnvelope {
    const parsed = decisionResponseSchema.safeParse(raw);
    if (!parsed.success) {
      throw new SchemaError(`response malformed: ${parsed.error.issues[0]?.message}`);
    }
    return {
      sessionId: parsed.data.session_id,
      revision: parsed.data.revision,
      decision: parsed.data.decision,
    };
  }

  async createSession(config: object = {}): Promise<DecisionEnvelope> {
    const raw = await this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
    return this.decisionEnvelope(raw);
  }

  async getDecision(sessionId: string): Promise<DecisionEnvelope> {
    return this.decisionEnvelope(await this.request(`/sessions/${sessionId}/decision`));
  }

  async getRecords(sessionId: string): Promise<{ revision: number; records: PatientRecordView[] }> {
    const raw = await this.request(`/sessions/${sessionId}/records`);
    const parsed = recordsResponseSchema.safeParse(raw);
    if (!parsed.success) {
      throw new SchemaError(`records malformed: ${parsed.error.issues[0]?.message}`);
    }
    return { revision: parsed.data.revision, records: parsed.data.records };
  }

  async postRecord(
    sessionId: string,
    record: PatientRecordView,
    revision: number,
  ): Promise<DecisionEnvelope> {
    const raw = await this.request(`/sessions/${sessionId}/records`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ record, revision }),
    });
    return this.decisionEnvelope(raw);
  }

  async deleteRecord(sessionId: string, index: number, revision: number): Promise<DecisionEnvelope> {
    const raw = await this.request(
      `/sessions/${sessionId}/records/${index}?revision=${revision}`,
      { method: "DELETE" },
    );
    return this.decisionEnvelope(raw);
  }

  async whatIf(sessionId: string, records: PatientRecordView[]): Promise<DecisionEnvelope> {
    const raw = await this.request(`/sessions/${sessionId}/what-if`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ records }),
    });
    return this.decisionEnvelope(raw);
  }

  async getExposure(sessionId: string, dose: number, freq: number, points = 697): Promise<ExposureSamples> {
    const raw = await this.request(
      `/sessions/${sessionId}/exposure?dose=${dose}&freq=${freq}&points=${points}`,
    );
    const parsed = exposureSchema.safeParse(raw);
    if (!parsed.success) {
      throw new SchemaError(`exposure malformed: ${parsed.error.issues[0]?.message}`);
    }
    return parsed.data;
  }
}
