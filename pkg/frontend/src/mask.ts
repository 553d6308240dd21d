// Client-side mask rasterization.
//
// Strokes are recorded in result-pixel coordinates and rendered here rather
// than scraped off a display canvas, so the exported mask is exactly the
// geometry the user drew regardless of zoom, devicePixelRatio, or how the
// browser antialiases its own strokes.
//
// Coverage rule: a pixel (x, y) is painted when its distance to the stroke
// polyline is <= the brush radius. Points and radii are integers, so the
// test below is exact integer arithmetic with no epsilon anywhere.

export interface StrokePoint {
  x: number;
  y: number;
}

export interface Stroke {
  radius: number;
  erase?: boolean;
  points: StrokePoint[];
}

function stampSegment(
  out: Uint8Array,
  w: number,
  h: number,
  ax: number,
  ay: number,
  bx: number,
  by: number,
  r: number,
  value: number,
) {
  const x0 = Math.max(0, Math.min(ax, bx) - r);
  const x1 = Math.min(w - 1, Math.max(ax, bx) + r);
  const y0 = Math.max(0, Math.min(ay, by) - r);
  const y1 = Math.min(h - 1, Math.max(ay, by) + r);
  const abx = bx - ax;
  const aby = by - ay;
  const ab2 = abx * abx + aby * aby;
  const r2 = r * r;
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const apx = x - ax;
      const apy = y - ay;
      let hit = apx * apx + apy * apy <= r2;
      if (!hit) {
        const bpx = x - bx;
        const bpy = y - by;
        hit = bpx * bpx + bpy * bpy <= r2;
      }
      if (!hit && ab2 > 0) {
        // interior of the capsule: projection falls inside the segment and
        // the perpendicular distance is within r; cross^2 <= r^2 |ab|^2
        // avoids the division
        const t = apx * abx + apy * aby;
        if (t > 0 && t < ab2) {
          const cross = apx * aby - apy * abx;
          hit = cross * cross <= r2 * ab2;
        }
      }
      if (hit) out[y * w + x] = value;
    }
  }
}

export function stampStroke(out: Uint8Array, w: number, h: number, stroke: Stroke) {
  const r = Math.max(1, Math.round(stroke.radius));
  const value = stroke.erase ? 0 : 255;
  const pts = stroke.points.map((p) => ({ x: Math.round(p.x), y: Math.round(p.y) }));
  if (pts.length === 0) return;
  if (pts.length === 1) {
    stampSegment(out, w, h, pts[0].x, pts[0].y, pts[0].x, pts[0].y, r, value);
    return;
  }
  for (let i = 1; i < pts.length; i++) {
    stampSegment(out, w, h, pts[i - 1].x, pts[i - 1].y, pts[i].x, pts[i].y, r, value);
  }
}

/** Render a stroke list into a fresh {0,255} mask of the given size. */
export function rasterizeStrokes(width: number, height: number, strokes: Stroke[]): Uint8Array {
  if (width < 1 || height < 1) throw new Error("mask size must be positive");
  const out = new Uint8Array(width * height);
  for (const s of strokes) stampStroke(out, width, height, s);
  return out;
}

export function maskIsEmpty(mask: Uint8Array): boolean {
  return mask.every((v) => v === 0);
}
