/** Wires the controller, the canvas, and the toolbar together.
 *
 * Left-click places the selected tool's polarity; right-click always places
 * a negative click. Commit stores the current mask as a demonstration shot;
 * adapt starts the background job and then shows the prediction overlay for
 * the chosen review scene with an outlier-elimination toggle.
 */

import { ApiClient } from './api.js';
import { OverlayCanvas, maskPngToDataUrl, predictionPngToBlobUrl } from './overlay.js';
import { SessionController } from './state.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export async function bootstrap(baseUrl = ''): Promise<void> {
  const api = new ApiClient(baseUrl);
  const controller = new SessionController(api);
  const canvas = new OverlayCanvas(el<HTMLCanvasElement>('scene-canvas'));
  const sceneSelect = el<HTMLSelectElement>('scene-select');
  const reviewSelect = el<HTMLSelectElement>('review-select');
  const taskInput = el<HTMLInputElement>('task-id');
  const toolButtons = {
    positive: el<HTMLButtonElement>('tool-positive'),
    negative: el<HTMLButtonElement>('tool-negative'),
  };
  const undoButton = el<HTMLButtonElement>('undo');
  const commitButton = el<HTMLButtonElement>('commit');
  const adaptButton = el<HTMLButtonElement>('adapt');
  const outlierToggle = el<HTMLInputElement>('outlier-elim');
  const shotCounter = el<HTMLSpanElement>('shot-counter');
  const jobStatus = el<HTMLSpanElement>('job-status');
  const toast = el<HTMLDivElement>('toast');

  const { scenes } = await api.listScenes();
  for (const select of [sceneSelect, reviewSelect]) {
    for (const id of scenes) {
      const option = document.createElement('option');
      option.value = id;
      option.textContent = id;
      select.appendChild(option);
    }
  }

  let predictionUrl: string | null = null;
  controller.subscribe((state) => {
    for (const [tool, button] of Object.entries(toolButtons)) {
      button.classList.toggle('active', state.tool === tool);
    }
    undoButton.disabled = state.busy || state.markers.length === 0;
    commitButton.disabled = !controller.canCommit || !taskInput.value;
    adaptButton.disabled = !controller.canAdapt || !taskInput.value;
    shotCounter.textContent = String(state.shotCounts[taskInput.value] ?? 0);
    jobStatus.textContent = state.job ? `${state.job.state}` : 'idle';
    toast.textContent = state.toast ?? '';
    toast.classList.toggle('visible', state.toast !== null);
    if (state.prediction) {
      if (predictionUrl) URL.revokeObjectURL(predictionUrl);
      predictionUrl = predictionPngToBlobUrl(state.prediction);
      void canvas.render(predictionUrl, []);
    } else {
      void canvas.render(state.overlayMask && maskPngToDataUrl(state.overlayMask), state.markers);
    }
  });

  async function openScene(sceneId: string): Promise<void> {
    await canvas.setScene(api.sceneImageUrl(sceneId));
    await controller.startSession(sceneId);
  }

  sceneSelect.addEventListener('change', () => void openScene(sceneSelect.value));
  toolButtons.positive.addEventListener('click', () => controller.selectTool('positive'));
  toolButtons.negative.addEventListener('click', () => controller.selectTool('negative'));
  undoButton.addEventListener('click', () => void controller.undo());
  commitButton.addEventListener('click', () => void controller.commitShot(taskInput.value));
  adaptButton.addEventListener('click', async () => {
    const job = await controller.adaptAndWait(taskInput.value);
    if (job) await controller.loadPrediction(taskInput.value, reviewSelect.value);
  });
  outlierToggle.addEventListener('change', () =>
    void controller.toggleOutlierElim(taskInput.value, reviewSelect.value));

  const sceneCanvas = el<HTMLCanvasElement>('scene-canvas');
  sceneCanvas.addEventListener('click', (ev) => {
    const { x, y } = canvas.eventPosition(ev);
    void controller.placeClick(x, y);
  });
  sceneCanvas.addEventListener('contextmenu', (ev) => {
    ev.preventDefault();
    const { x, y } = canvas.eventPosition(ev);
    void controller.placeClick(x, y, 'negative');
  });

  if (scenes.length > 0) await openScene(scenes[0]!);
}

declare global {
  interface Window {
    graspteachBootstrap: typeof bootstrap;
  }
}

if (typeof window !== 'undefined') {
  window.graspteachBootstrap = bootstrap;
}
