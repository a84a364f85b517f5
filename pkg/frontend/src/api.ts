// Typed client for the annotation service. All server interaction goes
// through here; the rest of the app never touches fetch directly.

export interface Candidate {
  text_id: string;
  similarity: number;
}

export interface TaskView {
  task_id: string;
  queried_id: string;
  epoch: number;
  status: "pending" | "submitted";
  payload: Record<string, unknown> | null;
  display_uri: string | null;
  candidates?: Candidate[];
}

export interface EpochMetrics {
  epoch: number;
  paired_fraction: number;
  r_at_k_text: Record<string, number>;
  r_at_k_image: Record<string, number>;
}

export interface ServerState {
  epoch: number;
  max_epochs: number;
  paired_count: number;
  pool_count: number;
  tasks_total: number;
  tasks_submitted: number;
  history: EpochMetrics[];
  metrics_csv: string;
}

export type AnnotationPayload =
  | { text_id: string }
  | { caption: string; vector: number[] };

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let code = `HTTP ${res.status}`;
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body.error === "string") {
      code = body.error;
      detail = String(body.detail ?? "");
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(res.status, code, detail);
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(path, init);
  if (!res.ok) {
    throw await parseError(res);
  }
  return (await res.json()) as T;
}

export function getState(): Promise<ServerState> {
  return request<ServerState>("/api/state");
}

export async function getPendingTasks(): Promise<TaskView[]> {
  const body = await request<{ tasks: TaskView[] }>("/api/tasks?status=pending");
  return body.tasks;
}

export function getTask(taskId: string): Promise<TaskView> {
  return request<TaskView>(`/api/tasks/${encodeURIComponent(taskId)}`);
}

function payloadsEqual(
  a: Record<string, unknown> | null,
  b: AnnotationPayload,
): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}

// Submit a counterpart choice. A 409 means the task was already submitted;
// if the recorded payload equals ours the submission raced with itself (or a
// twin tab) and counts as success, otherwise the conflict surfaces.
export async function submitAnnotation(
  taskId: string,
  payload: AnnotationPayload,
): Promise<TaskView> {
  try {
    return await request<TaskView>(
      `/api/tasks/${encodeURIComponent(taskId)}/annotation`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      },
    );
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      const task = await getTask(taskId);
      if (task.status === "submitted" && payloadsEqual(task.payload, payload)) {
        return task;
      }
    }
    throw err;
  }
}

export function advanceEpoch(): Promise<{
  epoch: number;
  paired_count: number;
  metrics: EpochMetrics;
}> {
  return request("/api/epoch/advance", { method: "POST" });
}
