import { afterEach, describe, expect, it, vi } from "vitest";
import {
  advanceEpoch,
  ApiError,
  getPendingTasks,
  getState,
  getTask,
  submitAnnotation,
} from "./api.js";

type FetchCall = { url: string; init?: RequestInit };

function mockFetch(
  responder: (url: string, init?: RequestInit) => { status: number; body: unknown },
): FetchCall[] {
  const calls: FetchCall[] = [];
  vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const { status, body } = responder(url, init);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  });
  return calls;
}

afterEach(() => vi.unstubAllGlobals());

describe("endpoint shapes", () => {
  it("reads state from GET /api/state", async () => {
    const calls = mockFetch(() => ({
      status: 200,
      body: { epoch: 0, max_epochs: 3, tasks_total: 2, tasks_submitted: 0,
              paired_count: 10, pool_count: 20, history: [], metrics_csv: "" },
    }));
    const state = await getState();
    expect(calls[0].url).toBe("/api/state");
    expect(calls[0].init).toBeUndefined();
    expect(state.max_epochs).toBe(3);
  });

  it("lists pending tasks with the status filter", async () => {
    const calls = mockFetch(() => ({ status: 200, body: { tasks: [] } }));
    await getPendingTasks();
    expect(calls[0].url).toBe("/api/tasks?status=pending");
  });

  it("posts annotations as JSON to the task endpoint", async () => {
    const calls = mockFetch(() => ({
      status: 200,
      body: { task_id: "t1", queried_id: "q", epoch: 0, status: "submitted",
              payload: { text_id: "txt_1" }, display_uri: null },
    }));
    const task = await submitAnnotation("t1", { text_id: "txt_1" });
    expect(calls[0].url).toBe("/api/tasks/t1/annotation");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ text_id: "txt_1" });
    expect(task.status).toBe("submitted");
  });

  it("advances the epoch with POST", async () => {
    const calls = mockFetch(() => ({
      status: 200,
      body: { epoch: 1, paired_count: 12, metrics: { epoch: 1,
              paired_fraction: 0.35, r_at_k_text: {}, r_at_k_image: {} } },
    }));
    const result = await advanceEpoch();
    expect(calls[0].url).toBe("/api/epoch/advance");
    expect(calls[0].init?.method).toBe("POST");
    expect(result.epoch).toBe(1);
  });
});

describe("error mapping", () => {
  it.each([
    [404, "UnknownTask"],
    [409, "AlreadySubmitted"],
    [422, "BadVectorDim"],
    [422, "EpochIncomplete"],
  ])("maps %i %s to a typed ApiError", async (status, code) => {
    mockFetch(() => ({ status, body: { error: code, detail: "boom" } }));
    const err = await getTask("x").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(status);
    expect(err.code).toBe(code);
    expect(err.detail).toBe("boom");
  });
});

describe("409 reconciliation on resubmission", () => {
  it("treats a 409 whose recorded payload matches ours as success", async () => {
    const payload = { text_id: "txt_9" };
    mockFetch((url, init) => {
      if (init?.method === "POST") {
        return { status: 409, body: { error: "AlreadySubmitted", detail: "dup" } };
      }
      return {
        status: 200,
        body: { task_id: "t1", queried_id: "q", epoch: 0,
                status: "submitted", payload, display_uri: null },
      };
    });
    const task = await submitAnnotation("t1", payload);
    expect(task.status).toBe("submitted");
  });

  it("surfaces a 409 whose recorded payload differs", async () => {
    mockFetch((url, init) => {
      if (init?.method === "POST") {
        return { status: 409, body: { error: "AlreadySubmitted", detail: "dup" } };
      }
      return {
        status: 200,
        body: { task_id: "t1", queried_id: "q", epoch: 0,
                status: "submitted", payload: { text_id: "other" },
                display_uri: null },
      };
    });
    const err = await submitAnnotation("t1", { text_id: "txt_9" }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("AlreadySubmitted");
  });
});

describe("full-epoch scripted flow", () => {
  it("issues exactly the calls of the oracle-annotator path", async () => {
    // two tasks -> two annotation POSTs -> one advance; the same sequence the
    // service-side fidelity test replays against the orchestrator.
    const tasks = [
      { task_id: "task-e0-0000", queried_id: "img_1", epoch: 0,
        status: "pending", payload: null, display_uri: null },
      { task_id: "task-e0-0001", queried_id: "img_2", epoch: 0,
        status: "pending", payload: null, display_uri: null },
    ];
    const calls = mockFetch((url, init) => {
      if (url.endsWith("/annotation")) {
        return { status: 200, body: { ...tasks[0], status: "submitted" } };
      }
      if (url === "/api/epoch/advance") {
        return { status: 200, body: { epoch: 1, paired_count: 2, metrics: {
          epoch: 1, paired_fraction: 0.35, r_at_k_text: { "1": 0.5 },
          r_at_k_image: { "1": 0.4 } } } };
      }
      return { status: 200, body: { tasks } };
    });
    const pending = await getPendingTasks();
    for (const t of pending) {
      await submitAnnotation(t.task_id, { text_id: `oracle_of_${t.queried_id}` });
    }
    await advanceEpoch();
    const posts = calls.filter((c) => c.init?.method === "POST").map((c) => c.url);
    expect(posts).toEqual([
      "/api/tasks/task-e0-0000/annotation",
      "/api/tasks/task-e0-0001/annotation",
      "/api/epoch/advance",
    ]);
  });
});
