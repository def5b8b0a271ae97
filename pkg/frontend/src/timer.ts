// Phase timing for one task: unlimited think time, then one drawing
// window.  The clock is injectable so tests control time exactly.

export type Clock = () => number;

export type Phase = "idle" | "think" | "draw" | "submitted";

export class PhaseTimer {
  private phase: Phase = "idle";
  private shownAt = 0;
  private drawStartedAt = 0;
  private submittedAt = 0;

  constructor(private clock: Clock = () => performance.now()) {}

  get currentPhase(): Phase {
    return this.phase;
  }

  /** Task becomes visible; think time starts.  A persisted earlier
   * timestamp restores accumulated think time across reloads. */
  show(restoredShownAt?: number): void {
    if (this.phase !== "idle") {
      throw new Error(`cannot show in phase ${this.phase}`);
    }
    this.shownAt = restoredShownAt ?? this.clock();
    this.phase = "think";
  }

  startDrawing(): void {
    if (this.phase !== "think") {
      throw new Error(`cannot start drawing in phase ${this.phase}`);
    }
    this.drawStartedAt = this.clock();
    this.phase = "draw";
  }

  submit(): void {
    if (this.phase !== "draw") {
      throw new Error(`cannot submit in phase ${this.phase}`);
    }
    this.submittedAt = this.clock();
    this.phase = "submitted";
  }

  get shownMs(): number {
    return this.shownAt;
  }

  thinkSeconds(): number {
    const end = this.phase === "think" ? this.clock() : this.drawStartedAt;
    return (end - this.shownAt) / 1000;
  }

  drawSeconds(): number {
    if (this.phase === "draw") {
      return (this.clock() - this.drawStartedAt) / 1000;
    }
    if (this.phase === "submitted") {
      return (this.submittedAt - this.drawStartedAt) / 1000;
    }
    return 0;
  }

  timings(): { shown_ms: number; draw_started_ms: number; submitted_ms: number } {
    if (this.phase !== "submitted") {
      throw new Error("timings are final only after submission");
    }
    return {
      shown_ms: this.shownAt,
      draw_started_ms: this.drawStartedAt,
      submitted_ms: this.submittedAt,
    };
  }
}
