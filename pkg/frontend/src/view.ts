import { Point } from './types.js'

/**
 * Zoom/pan mapping between image cell coordinates and canvas pixels.
 * `scale` is canvas pixels per cell; `offset` is the canvas position of
 * image coordinate (0, 0).
 */
export interface ViewTransform {
  scale: number
  offsetX: number
  offsetY: number
}

export function identityView(scale = 1): ViewTransform {
  return { scale, offsetX: 0, offsetY: 0 }
}

export function fitView(
  imageW: number,
  imageH: number,
  canvasW: number,
  canvasH: number,
): ViewTransform {
  const scale = Math.min(canvasW / imageW, canvasH / imageH)
  return {
    scale,
    offsetX: (canvasW - imageW * scale) / 2,
    offsetY: (canvasH - imageH * scale) / 2,
  }
}

export function toScreen(view: ViewTransform, p: Point): Point {
  return { x: view.offsetX + p.x * view.scale, y: view.offsetY + p.y * view.scale }
}

export function toImage(view: ViewTransform, p: Point): Point {
  return { x: (p.x - view.offsetX) / view.scale, y: (p.y - view.offsetY) / view.scale }
}

/** Zoom by `factor` keeping the screen point `anchor` fixed. */
export function zoomAt(view: ViewTransform, anchor: Point, factor: number): ViewTransform {
  const scale = Math.min(Math.max(view.scale * factor, 0.25), 64)
  const eff = scale / view.scale
  return {
    scale,
    offsetX: anchor.x - (anchor.x - view.offsetX) * eff,
    offsetY: anchor.y - (anchor.y - view.offsetY) * eff,
  }
}

export function pan(view: ViewTransform, dx: number, dy: number): ViewTransform {
  return { ...view, offsetX: view.offsetX + dx, offsetY: view.offsetY + dy }
}

/** Subpixel cursor readout, e.g. "x=13.42 y=86.07". */
export function cursorReadout(p: Point): string {
  return `x=${p.x.toFixed(2)} y=${p.y.toFixed(2)}`
}
