import { ApiClient, ServiceError } from './api.js'
import { diagnosticsSummary, markerShapes, pathPolyline, radiusContours } from './overlay.js'
import { polarPlot } from './polar.js'
import {
  canExtract,
  clearPoints,
  initialState,
  loadImage,
  placePoint,
  requestPoints,
  setOverride,
  setResult,
  SessionState,
  undo,
} from './state.js'
import { ConfigOverrides, Point } from './types.js'
import { cursorReadout, fitView, identityView, pan, toImage, ViewTransform, zoomAt } from './view.js'

const api = new ApiClient(
  (window as unknown as { TUBETRACE_API?: string }).TUBETRACE_API ?? '',
)

let state: SessionState = initialState()
let view: ViewTransform = identityView(4)
let bitmap: ImageBitmap | null = null
let inspecting = false
let busy = false

const canvas = document.getElementById('canvas') as HTMLCanvasElement
const ctx = canvas.getContext('2d')!
const polarCanvas = document.getElementById('polar') as HTMLCanvasElement
const polarCtx = polarCanvas.getContext('2d')!
const banner = document.getElementById('banner')!
const toast = document.getElementById('toast')!
const readout = document.getElementById('readout')!
const diag = document.getElementById('diagnostics')!
const spinner = document.getElementById('spinner')!
const extractBtn = document.getElementById('extract') as HTMLButtonElement
const retryBtn = document.getElementById('retry') as HTMLButtonElement

function showBanner(text: string, withRetry: boolean) {
  banner.textContent = text
  banner.style.display = text ? 'inline-block' : 'none'
  retryBtn.style.display = withRetry ? 'inline-block' : 'none'
}

function showToast(text: string) {
  toast.textContent = text
  toast.style.opacity = '1'
  setTimeout(() => (toast.style.opacity = '0'), 1600)
}

function drawPolyline(c: CanvasRenderingContext2D, pts: Point[], color: string, width: number) {
  if (pts.length < 2) return
  c.strokeStyle = color
  c.lineWidth = width
  c.beginPath()
  c.moveTo(pts[0].x, pts[0].y)
  for (const p of pts.slice(1)) c.lineTo(p.x, p.y)
  c.stroke()
}

function render() {
  ctx.fillStyle = '#14161a'
  ctx.fillRect(0, 0, canvas.width, canvas.height)
  if (bitmap && state.image) {
    ctx.imageSmoothingEnabled = view.scale < 3
    ctx.drawImage(
      bitmap,
      view.offsetX - 0.5 * view.scale,
      view.offsetY - 0.5 * view.scale,
      state.image.width * view.scale,
      state.image.height * view.scale,
    )
  }
  const res = state.lastResult
  if (res) {
    if (res.radius_path) {
      const { left, right } = radiusContours(res.radius_path, view)
      drawPolyline(ctx, left, '#f0dc3c', 1)
      drawPolyline(ctx, right, '#f0dc3c', 1)
    }
    drawPolyline(ctx, pathPolyline(res.path, view), '#e03c3c', 2)
  }
  for (const m of markerShapes(state, view)) {
    ctx.fillStyle = m.color
    ctx.beginPath()
    ctx.arc(m.center.x, m.center.y, 4, 0, 2 * Math.PI)
    ctx.fill()
    ctx.strokeStyle = '#202020'
    ctx.stroke()
  }
  diag.textContent = diagnosticsSummary(state)
  extractBtn.disabled = !canExtract(state) || busy
}

async function runExtraction() {
  if (!canExtract(state) || !state.image) return
  busy = true
  spinner.style.display = 'inline-block'
  showBanner('', false)
  render()
  try {
    const result = await api.extract({
      imageId: state.image.id,
      points: requestPoints(state),
      config: state.overrides,
      radiusLift: state.radiusLift,
    })
    if (result !== null) {
      state = setResult(state, result)
    }
  } catch (err) {
    if (err instanceof ServiceError) {
      showBanner(`${err.code}: ${err.message}`, true)
    } else {
      showBanner(`request failed: ${(err as Error).message}`, true)
    }
  } finally {
    busy = false
    spinner.style.display = 'none'
    render()
  }
}

async function inspectAt(image: Point) {
  if (!state.image) return
  const x = Math.round(image.x)
  const y = Math.round(image.y)
  try {
    const r = await api.orientation(state.image.id, x, y)
    polarCtx.clearRect(0, 0, polarCanvas.width, polarCanvas.height)
    if (r.pending) {
      polarCtx.fillStyle = '#aaa'
      polarCtx.fillText('features still building...', 10, 20)
      return
    }
    const center = { x: polarCanvas.width / 2, y: polarCanvas.height / 2 }
    const radius = Math.min(center.x, center.y) - 12
    const enhanced = polarPlot(r.profile, center, radius)
    const raw = polarPlot(r.profile, center, radius, r.profile.raw)
    polarCtx.strokeStyle = '#566'
    polarCtx.beginPath()
    polarCtx.arc(center.x, center.y, radius, 0, 2 * Math.PI)
    polarCtx.stroke()
    drawPolyline(polarCtx, raw.outline, '#5a7ae6', 1)
    drawPolyline(polarCtx, enhanced.outline, '#e03c3c', 1.5)
    polarCtx.fillStyle = '#111'
    for (const p of enhanced.peaks) {
      polarCtx.beginPath()
      polarCtx.arc(p.x, p.y, 3, 0, 2 * Math.PI)
      polarCtx.fill()
    }
    polarCtx.fillStyle = '#ccc'
    polarCtx.fillText(`(${x}, ${y})  peaks: ${r.profile.peaks.join(', ')}`, 8, 14)
  } catch (err) {
    showBanner(`orientation lookup failed: ${(err as Error).message}`, false)
  }
}

// --- wiring -----------------------------------------------------------

document.getElementById('file')!.addEventListener('change', async (ev) => {
  const input = ev.target as HTMLInputElement
  const file = input.files?.[0]
  if (!file) return
  try {
    const info = await api.uploadImage(file)
    state = loadImage(state, info)
    const resp = await fetch(api.previewUrl(info.id))
    bitmap = await createImageBitmap(await resp.blob())
    view = fitView(info.width, info.height, canvas.width, canvas.height)
    showBanner('', false)
    render()
  } catch (err) {
    showBanner(`upload failed: ${(err as Error).message}`, false)
  }
})

canvas.addEventListener('mousemove', (ev) => {
  const rect = canvas.getBoundingClientRect()
  const image = toImage(view, { x: ev.clientX - rect.left, y: ev.clientY - rect.top })
  readout.textContent = cursorReadout(image)
  if (ev.buttons === 4 || (ev.buttons === 1 && ev.shiftKey)) {
    view = pan(view, ev.movementX, ev.movementY)
    render()
  }
})

canvas.addEventListener('wheel', (ev) => {
  ev.preventDefault()
  const rect = canvas.getBoundingClientRect()
  const anchor = { x: ev.clientX - rect.left, y: ev.clientY - rect.top }
  view = zoomAt(view, anchor, ev.deltaY < 0 ? 1.2 : 1 / 1.2)
  render()
})

canvas.addEventListener('click', (ev) => {
  if (ev.shiftKey) return
  const rect = canvas.getBoundingClientRect()
  const image = toImage(view, { x: ev.clientX - rect.left, y: ev.clientY - rect.top })
  if (inspecting) {
    void inspectAt(image)
    return
  }
  const placed = placePoint(state, image)
  if (placed.ignored) {
    showToast(placed.reason ?? 'ignored')
    return
  }
  state = placed.state
  render()
})

extractBtn.addEventListener('click', () => void runExtraction())
retryBtn.addEventListener('click', () => void runExtraction())
document.getElementById('undo')!.addEventListener('click', () => {
  state = undo(state)
  render()
})
document.getElementById('clear')!.addEventListener('click', () => {
  state = setResult(clearPoints(state), null)
  render()
})
document.getElementById('inspect')!.addEventListener('change', (ev) => {
  inspecting = (ev.target as HTMLInputElement).checked
})
document.getElementById('radius-lift')!.addEventListener('change', (ev) => {
  state = { ...state, radiusLift: (ev.target as HTMLInputElement).checked }
})

const numericOverrides: (keyof ConfigOverrides)[] = ['lam', 'alpha', 'xi_aniso', 'chi2']
for (const key of numericOverrides) {
  document.getElementById(`cfg-${key}`)!.addEventListener('change', (ev) => {
    const raw = (ev.target as HTMLInputElement).value
    const value = raw === '' ? undefined : Number(raw)
    state = setOverride(state, key, value as never)
  })
}
document.getElementById('cfg-mode')!.addEventListener('change', (ev) => {
  const v = (ev.target as HTMLSelectElement).value
  state = setOverride(state, 'mode', v === 'default' ? undefined : (v as 'single' | 'partial'))
})

render()
