// DOM shell: fetches tasks, shows the task image, runs the think/draw
// protocol on a canvas, and submits drawings for scoring.

import { ScoreReceipt, StudyApi, TaskView } from "./api.js";
import { TaskController } from "./protocol.js";

const api = new StudyApi("");

function el<T extends HTMLElement>(tag: string, parent: HTMLElement, text = ""): T {
  const node = document.createElement(tag) as T;
  if (text) node.textContent = text;
  parent.append(node);
  return node;
}

async function runSession(root: HTMLElement): Promise<void> {
  const status = el<HTMLParagraphElement>("p", root, "Creating session...");
  const participant = new URLSearchParams(location.search).get("p") ?? "anonymous";
  const ageGroup = new URLSearchParams(location.search).get("age") ?? "";
  const session = await api.createSession(participant, ageGroup);
  status.textContent = `Session ${session.session_id}: ${session.task_ids.length} tasks`;

  const canvas = el<HTMLCanvasElement>("canvas", root);
  const controls = el<HTMLDivElement>("div", root);
  const startButton = el<HTMLButtonElement>("button", controls, "Start drawing");
  const finishButton = el<HTMLButtonElement>("button", controls, "Place queens, then submit");
  const scoreLine = el<HTMLParagraphElement>("p", root);

  for (;;) {
    const task = await api.nextTask(session.session_id);
    if (task.done) {
      status.textContent = "All tasks done. Thank you!";
      startButton.remove();
      finishButton.remove();
      return;
    }
    const receipt = await runTask(task, session.session_id, canvas, startButton, finishButton, status);
    scoreLine.textContent =
      `${task.task_id}: ${receipt.success ? "solved" : "not solved"} ` +
      `(coverage ${(receipt.coverage * 100).toFixed(0)}%, ` +
      `think ${receipt.think_s.toFixed(1)}s, draw ${receipt.draw_s.toFixed(1)}s)`;
  }
}

function runTask(
  task: TaskView,
  sessionId: string,
  canvas: HTMLCanvasElement,
  startButton: HTMLButtonElement,
  finishButton: HTMLButtonElement,
  status: HTMLParagraphElement,
): Promise<ScoreReceipt> {
  const controller = new TaskController(task);
  const resolution = task.resolution ?? 512;
  canvas.width = resolution;
  canvas.height = resolution;
  const ctx = canvas.getContext("2d")!;
  const image = new Image();
  image.src = `data:image/png;base64,${task.image_b64}`;
  image.onload = () => ctx.drawImage(image, 0, 0);
  status.textContent = `${task.kind} ${task.scale}: study the puzzle, then press start`;
  finishButton.hidden = task.kind !== "queen";
  startButton.disabled = false;

  const norm = (event: PointerEvent): [number, number] => {
    const rect = canvas.getBoundingClientRect();
    return [
      (event.clientX - rect.left) / rect.width,
      (event.clientY - rect.top) / rect.height,
    ];
  };

  return new Promise((resolve, reject) => {
    const submitAndAdvance = (submission: NonNullable<typeof controller.result>) => {
      cleanup();
      api
        .submit(sessionId, submission)
        .then(resolve)
        .catch(async () => {
          // Offline: the client queues and retries until the server answers.
          status.textContent = "Network trouble; retrying...";
          for (;;) {
            try {
              const receipts = await api.flush(sessionId);
              if (receipts.length > 0) return resolve(receipts[0]);
            } catch (err) {
              return reject(err);
            }
            await new Promise((r) => setTimeout(r, 1000));
          }
        });
    };

    const onStart = () => {
      if (controller.handle({ type: "start-drawing" }).accepted) {
        startButton.disabled = true;
        status.textContent = task.kind === "maze"
          ? "Draw the path in ONE stroke; lifting the pointer submits."
          : "Click cells to place queens (no undo), then submit.";
      }
    };
    const onDown = (event: PointerEvent) => {
      if (task.kind === "maze") {
        controller.handle({ type: "pointer-down", point: norm(event) });
      } else {
        const cell = cellOf(norm(event), task.scale ?? 1);
        if (cell >= 0) {
          if (controller.handle({ type: "cell-click", cell }).accepted) {
            drawQueenMark(ctx, norm(event), resolution);
          }
        }
      }
    };
    const onMove = (event: PointerEvent) => {
      if (task.kind !== "maze") return;
      const outcome = controller.handle({ type: "pointer-move", point: norm(event) });
      if (outcome.accepted) {
        drawStrokePoint(ctx, norm(event), resolution);
      }
    };
    const onUp = () => {
      if (task.kind !== "maze") return;
      const outcome = controller.handle({ type: "pointer-up" });
      if (outcome.submission) submitAndAdvance(outcome.submission);
    };
    const onFinish = () => {
      const outcome = controller.handle({ type: "finish" });
      if (outcome.submission) submitAndAdvance(outcome.submission);
    };

    const cleanup = () => {
      canvas.removeEventListener("pointerdown", onDown);
      canvas.removeEventListener("pointermove", onMove);
      canvas.removeEventListener("pointerup", onUp);
      startButton.removeEventListener("click", onStart);
      finishButton.removeEventListener("click", onFinish);
    };

    canvas.addEventListener("pointerdown", onDown);
    canvas.addEventListener("pointermove", onMove);
    canvas.addEventListener("pointerup", onUp);
    startButton.addEventListener("click", onStart);
    finishButton.addEventListener("click", onFinish);
  });
}

// The board is inset by the render margin; map a normalized click to a
// row-major cell index, or -1 outside the board.
const MARGIN = 0.04;

function cellOf(point: [number, number], n: number): number {
  const side = 1 - 2 * MARGIN;
  const col = Math.floor(((point[0] - MARGIN) / side) * n);
  const row = Math.floor(((point[1] - MARGIN) / side) * n);
  if (row < 0 || col < 0 || row >= n || col >= n) return -1;
  return row * n + col;
}

function drawStrokePoint(ctx: CanvasRenderingContext2D, p: [number, number], res: number): void {
  ctx.fillStyle = "blue";
  ctx.beginPath();
  ctx.arc(p[0] * res, p[1] * res, 3, 0, 2 * Math.PI);
  ctx.fill();
}

function drawQueenMark(ctx: CanvasRenderingContext2D, p: [number, number], res: number): void {
  ctx.fillStyle = "black";
  ctx.beginPath();
  ctx.arc(p[0] * res, p[1] * res, 8, 0, 2 * Math.PI);
  ctx.fill();
}

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app") ?? document.body;
  runSession(root as HTMLElement).catch((err) => {
    const node = document.createElement("pre");
    node.textContent = String(err);
    document.body.append(node);
  });
});
