/** Session state machine for the teaching loop.
 *
 * Owns the click markers, the server-confirmed overlay mask, per-task shot
 * counters, and the adaptation/prediction flow. Rendering is delegated to a
 * listener so the controller stays DOM-free and testable. At most one
 * mutating request is in flight at a time; the UI is disabled meanwhile.
 */

import { ApiClient, ApiError, JobInfo, Polarity } from './api.js';

export interface ClickMarker {
  x: number;
  y: number;
  polarity: Polarity;
}

export interface UiSessionState {
  sceneId: string | null;
  sessionId: string | null;
  width: number;
  height: number;
  tool: Polarity;
  markers: ClickMarker[];
  /** base64 PNG of the server-confirmed mask, null before the first click */
  overlayMask: string | null;
  maskArea: number;
  shotCounts: Record<string, number>;
  busy: boolean;
  job: JobInfo | null;
  /** PNG bytes of the currently shown prediction */
  prediction: Uint8Array | null;
  outlierElim: boolean;
  toast: string | null;
}

function initialState(): UiSessionState {
  return {
    sceneId: null,
    sessionId: null,
    width: 0,
    height: 0,
    tool: 'positive',
    markers: [],
    overlayMask: null,
    maskArea: 0,
    shotCounts: {},
    busy: false,
    job: null,
    prediction: null,
    outlierElim: false,
    toast: null,
  };
}

export type Listener = (state: UiSessionState) => void;

export class SessionController {
  private state: UiSessionState = initialState();
  private listeners: Listener[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly pollIntervalMs = 250,
  ) {}

  getState(): UiSessionState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<UiSessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  private async mutate<T>(run: () => Promise<T>): Promise<T | null> {
    if (this.state.busy) return null; // single in-flight mutation
    this.update({ busy: true, toast: null });
    try {
      return await run();
    } catch (err) {
      this.update({ toast: err instanceof Error ? err.message : String(err) });
      return null;
    } finally {
      this.update({ busy: false });
    }
  }

  async startSession(sceneId: string): Promise<void> {
    await this.mutate(async () => {
      const info = await this.api.createSession(sceneId);
      this.update({
        sceneId,
        sessionId: info.session_id,
        width: info.width,
        height: info.height,
        markers: [],
        overlayMask: null,
        maskArea: 0,
        job: null,
        prediction: null,
      });
    });
  }

  selectTool(tool: Polarity): void {
    this.update({ tool });
  }

  /** Click at canvas position; out-of-bounds clicks never reach the server. */
  async placeClick(x: number, y: number, polarity?: Polarity): Promise<void> {
    const { sessionId, width, height } = this.state;
    if (!sessionId) return;
    const px = Math.floor(x);
    const py = Math.floor(y);
    if (px < 0 || py < 0 || px >= width || py >= height) return;
    const pol = polarity ?? this.state.tool;
    await this.mutate(async () => {
      const resp = await this.api.click(sessionId, px, py, pol);
      this.update({
        markers: [...this.state.markers, { x: px, y: py, polarity: pol }],
        overlayMask: resp.mask,
        maskArea: resp.mask_area,
      });
    });
  }

  async undo(): Promise<void> {
    const { sessionId } = this.state;
    if (!sessionId) return;
    await this.mutate(async () => {
      const resp = await this.api.undo(sessionId);
      this.update({
        markers: this.state.markers.slice(0, resp.click_count),
        overlayMask: resp.click_count > 0 ? resp.mask : null,
        maskArea: resp.mask_area,
      });
    });
  }

  get canCommit(): boolean {
    return this.state.maskArea > 0 && !this.state.busy && this.state.sessionId !== null;
  }

  /** Store the current mask as one demonstration shot and clear the canvas. */
  async commitShot(taskId: string): Promise<void> {
    if (!this.canCommit) return;
    const { sessionId } = this.state;
    await this.mutate(async () => {
      const record = await this.api.commit(sessionId!, taskId);
      const shotCounts = {
        ...this.state.shotCounts,
        [taskId]: record.shot_index + 1,
      };
      // clear for the next demonstration: server history stays, markers reset
      // by unwinding clicks so marker count keeps matching server state
      let clicks = this.state.markers.length;
      while (clicks > 0) {
        const resp = await this.api.undo(sessionId!);
        clicks = resp.click_count;
      }
      this.update({ shotCounts, markers: [], overlayMask: null, maskArea: 0 });
    });
  }

  get canAdapt(): boolean {
    const counts = Object.values(this.state.shotCounts);
    return counts.some((n) => n > 0) && !this.state.busy;
  }

  /** Kick off adaptation and poll until the job reaches a terminal state. */
  async adaptAndWait(taskId: string, steps?: number, timeoutMs = 120_000): Promise<JobInfo | null> {
    if (!this.canAdapt) return null;
    return await this.mutate(async () => {
      let job = await this.api.adapt(taskId, steps);
      this.update({ job });
      const deadline = Date.now() + timeoutMs;
      while (job.state !== 'done' && job.state !== 'failed') {
        if (Date.now() > deadline) throw new ApiError(408, 'adaptation timed out');
        await new Promise((r) => setTimeout(r, this.pollIntervalMs));
        job = await this.api.jobStatus(job.job_id);
        this.update({ job });
      }
      if (job.state === 'failed') {
        throw new ApiError(500, job.error ?? 'adaptation failed');
      }
      return job;
    });
  }

  /** Fetch the predicted mask for a scene and show it as the overlay. */
  async loadPrediction(taskId: string, sceneId: string): Promise<void> {
    await this.mutate(async () => {
      const png = await this.api.prediction(taskId, sceneId, this.state.outlierElim);
      this.update({ prediction: png });
    });
  }

  /** Flip outlier elimination and reload the served prediction. */
  async toggleOutlierElim(taskId: string, sceneId: string): Promise<void> {
    this.update({ outlierElim: !this.state.outlierElim });
    await this.loadPrediction(taskId, sceneId);
  }
}
