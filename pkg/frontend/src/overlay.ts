/** Canvas drawing for the scene, the semi-transparent mask overlay, and the
 * polarity-colored click markers. The mask is always a server-provided PNG;
 * tinting happens via composite operations, never by recomputing pixels. */

import { ClickMarker } from './state.js';

export const OVERLAY_COLORS = { mask: '#ff3030', positive: '#2ecc40', negative: '#ff4136' };
export const OVERLAY_ALPHA = 0.5;

export function maskPngToDataUrl(base64Png: string): string {
  return `data:image/png;base64,${base64Png}`;
}

export function predictionPngToBlobUrl(png: Uint8Array): string {
  return URL.createObjectURL(new Blob([png.buffer as ArrayBuffer], { type: 'image/png' }));
}

async function loadImage(src: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${src.slice(0, 64)}`));
    img.src = src;
  });
}

export class OverlayCanvas {
  private ctx: CanvasRenderingContext2D;
  private scene: HTMLImageElement | null = null;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext('2d');
    if (!ctx) throw new Error('2d canvas context unavailable');
    this.ctx = ctx;
  }

  async setScene(url: string): Promise<void> {
    this.scene = await loadImage(url);
    this.canvas.width = this.scene.width;
    this.canvas.height = this.scene.height;
    this.render(null, []);
  }

  /** Redraw scene, tinted mask, and markers. */
  async render(maskSrc: string | null, markers: ClickMarker[]): Promise<void> {
    const { ctx, canvas } = this;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (this.scene) ctx.drawImage(this.scene, 0, 0);
    if (maskSrc) {
      const mask = await loadImage(maskSrc);
      const tint = document.createElement('canvas');
      tint.width = canvas.width;
      tint.height = canvas.height;
      const tctx = tint.getContext('2d')!;
      tctx.drawImage(mask, 0, 0);
      tctx.globalCompositeOperation = 'source-in';
      tctx.fillStyle = OVERLAY_COLORS.mask;
      tctx.fillRect(0, 0, tint.width, tint.height);
      ctx.globalAlpha = OVERLAY_ALPHA;
      ctx.drawImage(tint, 0, 0);
      ctx.globalAlpha = 1.0;
    }
    for (const marker of markers) {
      ctx.beginPath();
      ctx.arc(marker.x, marker.y, 4, 0, 2 * Math.PI);
      ctx.fillStyle = marker.polarity === 'positive'
        ? OVERLAY_COLORS.positive : OVERLAY_COLORS.negative;
      ctx.fill();
      ctx.strokeStyle = '#ffffff';
      ctx.stroke();
    }
  }

  /** Canvas-relative pixel position of a mouse event. */
  eventPosition(ev: MouseEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * this.canvas.width,
      y: ((ev.clientY - rect.top) / rect.height) * this.canvas.height,
    };
  }
}
