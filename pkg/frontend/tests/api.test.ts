import { describe, expect, it } from "vitest";

import { ApiError, StudyApi, Submission } from "../src/api.js";

type Call = { url: string; init?: RequestInit };

function mockFetch(
  responder: (call: Call, index: number) => Response | Error,
) {
  const calls: Call[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    const call = { url, init };
    calls.push(call);
    const out = responder(call, calls.length - 1);
    if (out instanceof Error) throw out;
    return out;
  };
  return { calls, fetchFn };
}

const ok = (body: unknown) =>
  new Response(JSON.stringify(body), { status: 200 });

const SUBMISSION: Submission = {
  task_id: "maze-x",
  drawing: { stroke: [[0.1, 0.2]] },
  timings: { shown_ms: 0, draw_started_ms: 10, submitted_ms: 20 },
};

describe("StudyApi", () => {
  it("creates sessions and fetches tasks with the right shapes", async () => {
    const { calls, fetchFn } = mockFetch((call) => {
      if (call.url.endsWith("/session")) {
        return ok({ session_id: "s1", task_ids: ["a", "b"] });
      }
      return ok({ done: false, task_id: "a", kind: "maze", resolution: 512 });
    });
    const api = new StudyApi("http://host", fetchFn);
    const session = await api.createSession("p1", "18");
    expect(session.task_ids).toEqual(["a", "b"]);
    const body = JSON.parse(String(calls[0].init!.body));
    expect(body.participant_id).toBe("p1");
    expect(body.age_group).toBe("18");

    const task = await api.nextTask("s1");
    expect(calls[1].url).toBe("http://host/session/s1/next");
    expect(task.task_id).toBe("a");
  });

  it("submits drawings and returns the receipt", async () => {
    const receipt = {
      task_id: "maze-x",
      success: true,
      coverage: 1,
      violation: 0,
      pass: 1,
      mse_in: 0,
      mse_out: 0,
      think_s: 0.01,
      draw_s: 0.01,
      submission_file: "f.png",
      detected: [1, 2],
    };
    const { calls, fetchFn } = mockFetch(() => ok(receipt));
    const api = new StudyApi("", fetchFn);
    const out = await api.submit("s1", SUBMISSION);
    expect(out.success).toBe(true);
    const sent = JSON.parse(String(calls[0].init!.body));
    expect(sent.drawing.stroke).toEqual([[0.1, 0.2]]);
    expect(sent.timings.submitted_ms).toBe(20);
  });

  it("queues on network failure and flushes later", async () => {
    let offline = true;
    const { fetchFn } = mockFetch(() => {
      if (offline) return new TypeError("network down");
      return ok({ task_id: "maze-x", success: false });
    });
    const api = new StudyApi("", fetchFn);
    await expect(api.submit("s1", SUBMISSION)).rejects.toThrow();
    expect(api.pendingSubmissions).toBe(1);

    offline = false;
    const receipts = await api.flush("s1");
    expect(receipts.length).toBe(1);
    expect(api.pendingSubmissions).toBe(0);
  });

  it("does not re-queue server rejections", async () => {
    const { fetchFn } = mockFetch(() => new Response("dup", { status: 409 }));
    const api = new StudyApi("", fetchFn);
    await expect(api.submit("s1", SUBMISSION)).rejects.toThrow(ApiError);
    expect(api.pendingSubmissions).toBe(0);
  });

  it("drops queued duplicates on flush", async () => {
    let calls = 0;
    const { fetchFn } = mockFetch(() => {
      calls += 1;
      if (calls === 1) return new TypeError("offline");
      return new Response("dup", { status: 409 });
    });
    const api = new StudyApi("", fetchFn);
    await expect(api.submit("s1", SUBMISSION)).rejects.toThrow();
    const receipts = await api.flush("s1");
    expect(receipts).toEqual([]);
    expect(api.pendingSubmissions).toBe(0);
  });
});
