// Typed client for the study server.  Payload shapes mirror the serve API:
// drawings travel as geometry (stroke points or cell clicks), never pixels.

export interface TaskView {
  done: boolean;
  task_id?: string;
  kind?: "maze" | "queen";
  geometry?: string | null;
  scale?: number;
  resolution?: number;
  image_b64?: string;
}

export interface Timings {
  shown_ms: number;
  draw_started_ms: number;
  submitted_ms: number;
}

export interface Drawing {
  stroke?: [number, number][];
  clicks?: number[];
}

export interface Submission {
  task_id: string;
  drawing: Drawing;
  timings: Timings;
}

export interface ScoreReceipt {
  task_id: string;
  success: boolean;
  coverage: number;
  violation: number;
  pass: number;
  mse_in: number;
  mse_out: number;
  think_s: number;
  draw_s: number;
  submission_file: string;
  detected: number[];
}

export interface SessionInfo {
  session_id: string;
  task_ids: string[];
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class StudyApi {
  private queue: Submission[] = [];

  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return response.json() as Promise<T>;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return response.json() as Promise<T>;
  }

  createSession(participantId: string, ageGroup: string, taskIds?: string[]): Promise<SessionInfo> {
    return this.post("/session", {
      participant_id: participantId,
      age_group: ageGroup,
      task_ids: taskIds ?? null,
    });
  }

  nextTask(sessionId: string): Promise<TaskView> {
    return this.get(`/session/${sessionId}/next`);
  }

  /** Submit a drawing; on network failure the submission is queued and
   * retried by the next flush.  Duplicate rejections (409) are surfaced. */
  async submit(sessionId: string, submission: Submission): Promise<ScoreReceipt> {
    try {
      return await this.post<ScoreReceipt>(
        `/session/${sessionId}/submit`,
        submission,
      );
    } catch (err) {
      if (err instanceof ApiError) {
        throw err; // server answered; do not re-queue
      }
      this.queue.push(submission);
      throw err;
    }
  }

  get pendingSubmissions(): number {
    return this.queue.length;
  }

  /** Retry queued submissions in order; stops at the first network failure. */
  async flush(sessionId: string): Promise<ScoreReceipt[]> {
    const receipts: ScoreReceipt[] = [];
    while (this.queue.length > 0) {
      const submission = this.queue[0];
      try {
        receipts.push(
          await this.post<ScoreReceipt>(
            `/session/${sessionId}/submit`,
            submission,
          ),
        );
        this.queue.shift();
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          this.queue.shift(); // already recorded server-side
          continue;
        }
        if (err instanceof ApiError) {
          this.queue.shift();
          throw err;
        }
        break; // still offline; keep the queue
      }
    }
    return receipts;
  }

  exportSession(sessionId: string): Promise<unknown> {
    return this.get(`/session/${sessionId}/export`);
  }
}
