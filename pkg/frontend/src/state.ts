import { ConfigOverrides, ExtractResponse, ImageInfo, Point } from './types.js'

/**
 * Interactive session: one image, an ordered point list (source first,
 * end last, corrective waypoints between), the last service response and
 * an undo history of point lists.  The UI never edits extraction results
 * locally; every overlay is a pure render of `lastResult`.
 */
export interface SessionState {
  image: ImageInfo | null
  points: Point[]
  lastResult: ExtractResponse | null
  overrides: ConfigOverrides
  radiusLift: boolean
  history: Point[][]
}

export function initialState(): SessionState {
  return {
    image: null,
    points: [],
    lastResult: null,
    overrides: {},
    radiusLift: false,
    history: [],
  }
}

export function loadImage(state: SessionState, image: ImageInfo): SessionState {
  return { ...initialState(), overrides: state.overrides, radiusLift: state.radiusLift, image }
}

export function canExtract(state: SessionState): boolean {
  return state.image !== null && state.points.length >= 2
}

export interface PlaceResult {
  state: SessionState
  ignored: boolean
  reason?: string
}

/**
 * Append a point in integer cell coordinates.  The first click places the
 * source, the second the end; later clicks insert waypoints before the
 * end (the wrong-branch recovery flow).  Clicks outside the image are
 * ignored with a reason for the toast.
 */
export function placePoint(state: SessionState, p: Point): PlaceResult {
  if (state.image === null) {
    return { state, ignored: true, reason: 'load an image first' }
  }
  const x = Math.round(p.x)
  const y = Math.round(p.y)
  if (x < 0 || y < 0 || x >= state.image.width || y >= state.image.height) {
    return { state, ignored: true, reason: 'click outside the image' }
  }
  const points = [...state.points]
  if (points.length < 2) {
    points.push({ x, y })
  } else {
    points.splice(points.length - 1, 0, { x, y })
  }
  return {
    state: {
      ...state,
      points,
      history: [...state.history, state.points],
    },
    ignored: false,
  }
}

/** Revert the point list to its previous value (identity if no history). */
export function undo(state: SessionState): SessionState {
  if (state.history.length === 0) return state
  const history = [...state.history]
  const points = history.pop()!
  return { ...state, points, history }
}

export function clearPoints(state: SessionState): SessionState {
  if (state.points.length === 0) return state
  return { ...state, points: [], history: [...state.history, state.points] }
}

export function setResult(state: SessionState, result: ExtractResponse | null): SessionState {
  return { ...state, lastResult: result }
}

export function setOverride<K extends keyof ConfigOverrides>(
  state: SessionState,
  key: K,
  value: ConfigOverrides[K] | undefined,
): SessionState {
  const overrides = { ...state.overrides }
  if (value === undefined || (typeof value === 'number' && Number.isNaN(value))) {
    delete overrides[key]
  } else {
    overrides[key] = value
  }
  return { ...state, overrides }
}

export type MarkerRole = 'source' | 'end' | 'waypoint'

export const MARKER_COLORS: Record<MarkerRole, string> = {
  source: '#3c5ae6', // blue
  end: '#f0dc3c',    // yellow
  waypoint: '#50d2d2', // cyan
}

export function markerRole(index: number, total: number): MarkerRole {
  if (index === 0) return 'source'
  if (index === total - 1 && total >= 2) return 'end'
  return 'waypoint'
}

/** Points serialized for the service: integer cell coordinates. */
export function requestPoints(state: SessionState): [number, number][] {
  return state.points.map((p) => [p.x, p.y])
}
