/**
 * Typed client for the ipa session API.
 *
 * The workbench is a pure consumer: every view is rebuilt from
 * GET /session, and no analysis decision is made on this side.
 */

export interface StateSnapshot {
  true: string[];
  counters: Record<string, number>;
}

export interface BoundOp {
  name: string;
  args: Record<string, string>;
}

export interface ConflictReport {
  kind: "boolean" | "compensationRequired";
  opA: BoundOp;
  opB: BoundOp;
  initialState: StateSnapshot;
  stateAfterA: StateSnapshot;
  stateAfterB: StateSnapshot;
  mergedState: StateSnapshot;
  violatedClauses: string[];
  compensationClauses: string[];
}

export interface AddedEffect {
  pred: string;
  args: string[];
  action: "setTrue" | "setFalse";
}

export interface ConvergenceRule {
  pred: string;
  policy: "add-wins" | "rem-wins";
}

export interface Candidate {
  pair: [string, string];
  modifiedSide: "A" | "B";
  modifiedOp: string;
  addedEffects: AddedEffect[];
  requiredRules: ConvergenceRule[];
  resolutionMeaning: string;
  semanticsChanging: boolean;
}

export interface Resolution {
  pair: [string, string];
  round: number;
  candidate: Candidate;
}

export interface FlaggedPair {
  pair: [string, string];
  reason: string[];
}

export interface ClassRow {
  index: number;
  invariant: string;
  classTag: string;
  outcome: "safe" | "repaired" | "compensation" | "flagged";
}

export interface SessionView {
  app: string;
  policy: string;
  rounds: number;
  roundLimit: number;
  complete: boolean;
  done: boolean;
  resolved: Resolution[];
  flaggedUnsolvable: FlaggedPair[];
  reopened: unknown[];
  resolutionClashes: unknown[];
  compensations: string[];
  classTable: ClassRow[];
  spec: string;
  currentConflict: ConflictReport | null;
  currentPairId?: string;
  candidates: Candidate[];
  repairedSpec?: string;
}

export interface TraceEvent {
  event: string;
  step: number;
  replica?: string;
  record?: { op?: string; origin?: string; kind?: string };
  instance?: string;
  op?: string;
}

/** Error carrying the server's status and message for inline display. */
export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function parseBody(response: Response): Promise<unknown> {
  const text = await response.text();
  try {
    return JSON.parse(text);
  } catch {
    throw new ApiError(response.status, `invalid JSON from server: ${text.slice(0, 120)}`);
  }
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await fetch(this.baseUrl + path, init);
    const body = await parseBody(response);
    if (!response.ok) {
      const message =
        typeof body === "object" && body !== null && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return body;
  }

  getSession(): Promise<SessionView> {
    return this.request("/session") as Promise<SessionView>;
  }

  submitChoice(pairId: string, candidateIndex: number): Promise<SessionView> {
    return this.request("/session/choice", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ pairId, candidateIndex }),
    }) as Promise<SessionView>;
  }

  submitFlag(pairId: string): Promise<SessionView> {
    return this.request("/session/flag", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ pairId }),
    }) as Promise<SessionView>;
  }

  getTrace(scheduleId: string): Promise<TraceEvent[]> {
    return this.request(`/trace/${encodeURIComponent(scheduleId)}`) as Promise<TraceEvent[]>;
  }
}
