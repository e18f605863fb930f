/** Typed client for the annotation service. Every mask shown in the UI
 * comes from these endpoints; nothing is segmented client-side. */

export type Polarity = 'positive' | 'negative';

export interface SessionInfo {
  session_id: string;
  scene_id: string;
  width: number;
  height: number;
}

export interface MaskResponse {
  /** base64 PNG of the current mask */
  mask: string;
  click_count: number;
  mask_area: number;
}

export interface CommitRecord {
  task_id: string;
  shot_index: number;
  image: string;
  mask: string;
}

export interface TaskSummary {
  task_id: string;
  n_samples: number;
}

export interface JobInfo {
  job_id: string;
  task_id: string;
  state: 'queued' | 'running' | 'done' | 'failed';
  shots: number;
  steps: number;
  error?: string;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let detail = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (typeof body.detail === 'string') detail = body.detail;
    else if (body.detail) detail = JSON.stringify(body.detail);
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(readonly baseUrl: string = '') {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body ?? {}),
    });
  }

  listScenes(): Promise<{ scenes: string[] }> {
    return this.request('/scenes');
  }

  sceneImageUrl(sceneId: string): string {
    return `${this.baseUrl}/scenes/${encodeURIComponent(sceneId)}/image`;
  }

  createSession(sceneId: string): Promise<SessionInfo> {
    return this.post('/sessions', { scene_id: sceneId });
  }

  click(sessionId: string, x: number, y: number, polarity: Polarity): Promise<MaskResponse> {
    return this.post(`/sessions/${sessionId}/clicks`, { x, y, polarity });
  }

  undo(sessionId: string): Promise<MaskResponse> {
    return this.post(`/sessions/${sessionId}/undo`);
  }

  commit(sessionId: string, taskId: string): Promise<CommitRecord> {
    return this.post(`/sessions/${sessionId}/commit`, { task_id: taskId });
  }

  listTasks(): Promise<{ tasks: TaskSummary[] }> {
    return this.request('/tasks');
  }

  adapt(taskId: string, steps?: number): Promise<JobInfo> {
    return this.post(`/tasks/${taskId}/adapt`, steps === undefined ? {} : { steps });
  }

  jobStatus(jobId: string): Promise<JobInfo> {
    return this.request(`/jobs/${jobId}`);
  }

  /** Raw PNG bytes of the predicted mask for a scene. */
  async prediction(taskId: string, sceneId: string, outlierElim: boolean): Promise<Uint8Array> {
    const params = new URLSearchParams({ scene: sceneId, outlier_elim: String(outlierElim) });
    const resp = await fetch(
      `${this.baseUrl}/tasks/${encodeURIComponent(taskId)}/predict?${params}`,
    );
    if (!resp.ok) throw await parseError(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }
}
