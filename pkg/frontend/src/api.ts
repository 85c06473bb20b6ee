import {
  ConfigOverrides,
  ExtractResponse,
  ImageInfo,
  OrientationResponse,
  ServiceErrorBody,
} from './types.js'

export class ServiceError extends Error {
  code: string
  status: number

  constructor(status: number, body: ServiceErrorBody) {
    super(body.message)
    this.code = body.code
    this.status = status
  }
}

export interface ExtractRequest {
  imageId: string
  points: [number, number][]
  config?: ConfigOverrides
  radiusLift?: boolean
}

export type OrientationResult =
  | { pending: true }
  | { pending: false; profile: OrientationResponse }

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

async function asError(resp: Response): Promise<ServiceError> {
  let body: ServiceErrorBody
  try {
    body = (await resp.json()) as ServiceErrorBody
  } catch {
    body = { code: 'unknown', message: `HTTP ${resp.status}` }
  }
  return new ServiceError(resp.status, body)
}

/**
 * Typed client for the extraction service.  Extraction requests are
 * cancel-and-replace: starting a new one aborts the in-flight call.
 */
export class ApiClient {
  private controller: AbortController | null = null

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async uploadImage(data: Blob | ArrayBuffer): Promise<ImageInfo> {
    const resp = await this.fetchImpl(`${this.baseUrl}/images`, {
      method: 'POST',
      headers: { 'content-type': 'image/png' },
      body: data,
    })
    if (!resp.ok) throw await asError(resp)
    return (await resp.json()) as ImageInfo
  }

  previewUrl(imageId: string): string {
    return `${this.baseUrl}/images/${imageId}/preview`
  }

  async orientation(imageId: string, x: number, y: number): Promise<OrientationResult> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/images/${imageId}/orientation?x=${x}&y=${y}`,
    )
    if (resp.status === 202) return { pending: true }
    if (!resp.ok) throw await asError(resp)
    return { pending: false, profile: (await resp.json()) as OrientationResponse }
  }

  /**
   * Run an extraction; a still-running previous request is aborted.
   * Returns null when this request itself was replaced.
   */
  async extract(req: ExtractRequest): Promise<ExtractResponse | null> {
    this.controller?.abort()
    const controller = new AbortController()
    this.controller = controller
    let resp: Response
    try {
      resp = await this.fetchImpl(`${this.baseUrl}/extract`, {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({
          image_id: req.imageId,
          points: req.points,
          config: req.config && Object.keys(req.config).length ? req.config : undefined,
          radius_lift: req.radiusLift ?? false,
        }),
        signal: controller.signal,
      })
    } catch (err) {
      if ((err as Error).name === 'AbortError') return null
      throw err
    }
    if (this.controller !== controller) return null
    if (!resp.ok) throw await asError(resp)
    return (await resp.json()) as ExtractResponse
  }
}
