import { OrientationResponse, Point } from './types.js'

/**
 * Polar-plot geometry for one pixel's orientation profile: sample points
 * of `radius * value/maxValue` at each bin angle around `center`, plus
 * markers at the detected peak bins.
 */
export interface PolarPlot {
  outline: Point[]
  peaks: Point[]
  maxValue: number
}

export function polarPlot(
  profile: OrientationResponse,
  center: Point,
  radius: number,
  values?: number[],
): PolarPlot {
  const data = values ?? profile.enhanced
  const maxValue = Math.max(...data, 1e-12)
  const at = (k: number, scale = 1): Point => ({
    x: center.x + Math.cos(profile.angles[k]) * (data[k] / maxValue) * radius * scale,
    y: center.y + Math.sin(profile.angles[k]) * (data[k] / maxValue) * radius * scale,
  })
  const outline = data.map((_, k) => at(k))
  outline.push(outline[0])
  const peaks = profile.peaks.map((k) => at(k))
  return { outline, peaks, maxValue }
}
