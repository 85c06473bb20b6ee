import { MARKER_COLORS, markerRole, SessionState } from './state.js'
import { Point } from './types.js'
import { toScreen, ViewTransform } from './view.js'

export interface MarkerShape {
  center: Point
  color: string
  role: string
}

export function markerShapes(state: SessionState, view: ViewTransform): MarkerShape[] {
  const n = state.points.length
  return state.points.map((p, i) => {
    const role = markerRole(i, n)
    return { center: toScreen(view, p), color: MARKER_COLORS[role], role }
  })
}

export function pathPolyline(
  path: [number, number][],
  view: ViewTransform,
): Point[] {
  return path.map(([x, y]) => toScreen(view, { x, y }))
}

/**
 * Vessel boundary contours from a radius-lifted path: the centerline
 * offset by +-r along the local normal (screen coordinates).
 */
export function radiusContours(
  lifted: [number, number, number][],
  view: ViewTransform,
): { left: Point[]; right: Point[] } {
  const left: Point[] = []
  const right: Point[] = []
  for (let i = 0; i < lifted.length; i++) {
    const [x, y, r] = lifted[i]
    const [x0, y0] = lifted[Math.max(i - 1, 0)]
    const [x1, y1] = lifted[Math.min(i + 1, lifted.length - 1)]
    const tx = x1 - x0
    const ty = y1 - y0
    const norm = Math.hypot(tx, ty) || 1
    const nx = -ty / norm
    const ny = tx / norm
    left.push(toScreen(view, { x: x + nx * r, y: y + ny * r }))
    right.push(toScreen(view, { x: x - nx * r, y: y - ny * r }))
  }
  return { left, right }
}

/** One-line diagnostics summary under the canvas. */
export function diagnosticsSummary(state: SessionState): string {
  const res = state.lastResult
  if (!res) return ''
  const d = res.diagnostics
  const total = Object.entries(d.timings)
    .filter(([k]) => !k.includes('.'))
    .reduce((acc, [, v]) => acc + v, 0)
  const fallback = d.segments.reduce((acc, s) => acc + s.fallback_pixels, 0)
  const parts = [
    `${res.path.length} samples`,
    `mode=${d.mode}`,
    `${total.toFixed(2)}s`,
  ]
  if (fallback > 0) parts.push(`fallback pixels: ${fallback}`)
  const saddles = d.segments.filter((s) => s.saddle).map((s) => s.saddle)
  if (saddles.length) {
    parts.push(`saddle at ${saddles.map((s) => `(${s![0]}, ${s![1]})`).join(', ')}`)
  }
  return parts.join(' | ')
}
