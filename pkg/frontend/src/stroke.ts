// Single-stroke capture for maze solutions.  The protocol is one
// continuous attempt: pointer-down begins the only stroke, pointer-up
// finalizes it, and there is deliberately no API to remove or amend a
// point afterwards.

export type Point = [number, number];

export class StrokeRecorder {
  private points: Point[] = [];
  private active = false;
  private finished = false;

  /** True once the single stroke has been finalized. */
  get isFinished(): boolean {
    return this.finished;
  }

  get isActive(): boolean {
    return this.active;
  }

  /** Begin the stroke.  Returns false (ignoring the event) if a stroke
   * was already drawn: the attempt is spent. */
  begin(p: Point): boolean {
    if (this.active || this.finished) {
      return false;
    }
    this.active = true;
    this.points.push(p);
    return true;
  }

  extend(p: Point): boolean {
    if (!this.active) {
      return false;
    }
    this.points.push(p);
    return true;
  }

  /** Pointer-up: the stroke is final. */
  end(): boolean {
    if (!this.active) {
      return false;
    }
    this.active = false;
    this.finished = true;
    return true;
  }

  snapshot(): Point[] {
    return this.points.map((p) => [p[0], p[1]]);
  }

  get length(): number {
    return this.points.length;
  }
}
