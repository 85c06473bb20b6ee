export interface Point {
  x: number
  y: number
}

/** Overrides forwarded verbatim to the extraction service. */
export interface ConfigOverrides {
  lam?: number
  alpha?: number
  xi_aniso?: number
  chi2?: number
  mode?: 'single' | 'partial'
}

export interface ImageInfo {
  id: string
  width: number
  height: number
}

export interface SegmentDiagnostics {
  saddle?: [number, number]
  fallback_pixels: number
  accepted: number
  saddle_gap?: number
}

export interface Diagnostics {
  mode: string
  timings: Record<string, number>
  used_fallback?: boolean
  segments: SegmentDiagnostics[]
}

export interface ExtractResponse {
  path: [number, number][]
  radius_path: [number, number, number][] | null
  cells: [number, number][]
  diagnostics: Diagnostics
}

export interface OrientationResponse {
  x: number
  y: number
  angles: number[]
  raw: number[]
  enhanced: number[]
  peaks: number[]
}

export interface ServiceErrorBody {
  code: string
  message: string
}
