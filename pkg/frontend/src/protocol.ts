// Per-task protocol: think phase (drawing disabled), one continuous
// drawing, automatic submission.  Every input arrives as an event; events
// that would erase, undo, or restart are rejected without touching state.

import { Drawing, Submission, TaskView } from "./api.js";
import { ClickRecorder } from "./clicks.js";
import { StrokeRecorder } from "./stroke.js";
import { Clock, PhaseTimer } from "./timer.js";

export type TaskEvent =
  | { type: "start-drawing" }
  | { type: "pointer-down"; point: [number, number] }
  | { type: "pointer-move"; point: [number, number] }
  | { type: "pointer-up" }
  | { type: "cell-click"; cell: number }
  | { type: "finish" }
  | { type: string };

export interface EventOutcome {
  accepted: boolean;
  submission?: Submission;
}

const PROHIBITED = new Set(["erase", "undo", "redo", "restart", "clear", "back"]);

export class TaskController {
  readonly timer: PhaseTimer;
  private stroke?: StrokeRecorder;
  private clicks?: ClickRecorder;
  private submission?: Submission;

  constructor(private task: TaskView, clock?: Clock) {
    if (task.done || !task.task_id || !task.kind) {
      throw new Error("controller needs an open task");
    }
    this.timer = new PhaseTimer(clock);
    if (task.kind === "maze") {
      this.stroke = new StrokeRecorder();
    } else {
      const n = task.scale ?? 0;
      this.clicks = new ClickRecorder(n * n);
    }
    this.timer.show();
  }

  get submitted(): boolean {
    return this.submission !== undefined;
  }

  get result(): Submission | undefined {
    return this.submission;
  }

  handle(event: TaskEvent): EventOutcome {
    if (PROHIBITED.has(event.type)) {
      return { accepted: false };
    }
    if (this.submission) {
      return { accepted: false }; // task already spent
    }
    switch (event.type) {
      case "start-drawing":
        if (this.timer.currentPhase !== "think") {
          return { accepted: false };
        }
        this.timer.startDrawing();
        return { accepted: true };
      case "pointer-down":
      case "pointer-move":
      case "pointer-up":
        return this.handleStroke(event);
      case "cell-click":
        return this.handleClick(event as { type: "cell-click"; cell: number });
      case "finish":
        return this.handleFinish();
      default:
        return { accepted: false };
    }
  }

  private handleStroke(event: TaskEvent): EventOutcome {
    if (!this.stroke || this.timer.currentPhase !== "draw") {
      return { accepted: false };
    }
    if (event.type === "pointer-down") {
      return { accepted: this.stroke.begin((event as any).point) };
    }
    if (event.type === "pointer-move") {
      return { accepted: this.stroke.extend((event as any).point) };
    }
    // pointer-up finalizes the stroke and auto-submits; an accidental
    // early lift still counts, the protocol forbids a second try.
    if (!this.stroke.end()) {
      return { accepted: false };
    }
    return { accepted: true, submission: this.finalize({ stroke: this.stroke.snapshot() }) };
  }

  private handleClick(event: { type: "cell-click"; cell: number }): EventOutcome {
    if (!this.clicks || this.timer.currentPhase !== "draw") {
      return { accepted: false };
    }
    return { accepted: this.clicks.click(event.cell) };
  }

  private handleFinish(): EventOutcome {
    if (!this.clicks || this.timer.currentPhase !== "draw") {
      return { accepted: false };
    }
    this.clicks.finish();
    return { accepted: true, submission: this.finalize({ clicks: this.clicks.snapshot() }) };
  }

  private finalize(drawing: Drawing): Submission {
    this.timer.submit();
    this.submission = {
      task_id: this.task.task_id!,
      drawing,
      timings: this.timer.timings(),
    };
    return this.submission;
  }
}
