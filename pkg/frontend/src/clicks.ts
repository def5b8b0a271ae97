// Queen placements by cell click.  Clicks are irrevocable: the record
// only ever grows, and no removal or toggle operation exists.

export class ClickRecorder {
  private cells: number[] = [];
  private finished = false;

  constructor(private boardCells: number) {}

  get isFinished(): boolean {
    return this.finished;
  }

  /** Place a queen mark.  Re-clicking an occupied cell is ignored rather
   * than toggled; out-of-board clicks are ignored. */
  click(cell: number): boolean {
    if (this.finished) {
      return false;
    }
    if (!Number.isInteger(cell) || cell < 0 || cell >= this.boardCells) {
      return false;
    }
    if (this.cells.includes(cell)) {
      return false;
    }
    this.cells.push(cell);
    return true;
  }

  /** Explicit submit ends the task. */
  finish(): boolean {
    if (this.finished) {
      return false;
    }
    this.finished = true;
    return true;
  }

  snapshot(): number[] {
    return [...this.cells];
  }

  get count(): number {
    return this.cells.length;
  }
}
