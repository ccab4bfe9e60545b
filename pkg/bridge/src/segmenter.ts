/** Promptable segmenter backing the bridge.
 *
 * A deterministic, image-driven model: foreground/background intensity
 * statistics are estimated from the prompts (patches around clicks, box
 * interior, image border), three candidate masks are proposed (global
 * intensity affinity, box-restricted, click-anchored), and the best-scoring
 * candidate under prompt consistency is returned as one probability map.
 */

export interface PointPrompt {
  kind: "point";
  r: number;
  c: number;
  label: "pos" | "neg";
}

export interface BoxPrompt {
  kind: "box";
  r0: number;
  c0: number;
  r1: number;
  c1: number;
}

export type Prompt = PointPrompt | BoxPrompt;

export interface SegmenterParams {
  /** logistic gain on the normalized foreground-background affinity */
  gain: number;
  /** half-side of the intensity patch sampled around each click */
  patchRadius: number;
  /** logit penalty applied outside the box / click-anchor regions */
  suppression: number;
  /** anchor disk radius as a fraction of max(h, w) */
  anchorFraction: number;
}

export const DEFAULT_PARAMS: SegmenterParams = {
  gain: 4.0,
  patchRadius: 2,
  suppression: 8.0,
  anchorFraction: 0.25,
};

function sigmoid(x: number): number {
  return 1 / (1 + Math.exp(-x));
}

function patchMean(
  image: Uint8Array, h: number, w: number, r: number, c: number, radius: number,
): number {
  let sum = 0;
  let n = 0;
  for (let dr = -radius; dr <= radius; dr++) {
    for (let dc = -radius; dc <= radius; dc++) {
      const rr = r + dr;
      const cc = c + dc;
      if (rr >= 0 && rr < h && cc >= 0 && cc < w) {
        sum += image[rr * w + cc];
        n++;
      }
    }
  }
  return n ? sum / n / 255 : 0.5;
}

export class PromptableSegmenter {
  private image: Uint8Array | null = null;
  private h = 0;
  private w = 0;

  constructor(private readonly params: SegmenterParams = DEFAULT_PARAMS) {}

  setCase(h: number, w: number, image: Uint8Array): void {
    if (image.length !== h * w) {
      throw new Error(`image is ${image.length} bytes, expected ${h * w}`);
    }
    this.h = h;
    this.w = w;
    this.image = image;
  }

  /** One foreground probability map for the full prompt history. */
  predict(prompts: Prompt[]): Float32Array {
    if (!this.image) throw new Error("predict before set_case");
    if (prompts.length === 0) throw new Error("predict requires at least one prompt");
    const { h, w, image } = { h: this.h, w: this.w, image: this.image };
    const p = this.params;

    const points = prompts.filter((q): q is PointPrompt => q.kind === "point");
    const boxes = prompts.filter((q): q is BoxPrompt => q.kind === "box");
    for (const q of points) {
      if (q.r < 0 || q.r >= h || q.c < 0 || q.c >= w) {
        throw new Error(`point (${q.r}, ${q.c}) outside ${h}x${w} grid`);
      }
    }
    for (const b of boxes) {
      if (b.r0 > b.r1 || b.c0 > b.c1 || b.r0 < 0 || b.c0 < 0 || b.r1 >= h || b.c1 >= w) {
        throw new Error(`box (${b.r0},${b.c0},${b.r1},${b.c1}) invalid for ${h}x${w}`);
      }
    }

    // foreground statistic: positive-click patches, else the box center
    const pos = points.filter((q) => q.label === "pos");
    const neg = points.filter((q) => q.label === "neg");
    let fgMean: number;
    if (pos.length) {
      fgMean = mean(pos.map((q) => patchMean(image, h, w, q.r, q.c, p.patchRadius)));
    } else if (boxes.length) {
      const b = boxes[boxes.length - 1];
      fgMean = patchMean(image, h, w, (b.r0 + b.r1) >> 1, (b.c0 + b.c1) >> 1, p.patchRadius);
    } else {
      fgMean = 0.75;
    }
    // background statistic: negative-click patches, else the border ring
    let bgMean: number;
    if (neg.length) {
      bgMean = mean(neg.map((q) => patchMean(image, h, w, q.r, q.c, p.patchRadius)));
    } else {
      let sum = 0;
      let n = 0;
      for (let c = 0; c < w; c++) {
        sum += image[c] + image[(h - 1) * w + c];
        n += 2;
      }
      for (let r = 0; r < h; r++) {
        sum += image[r * w] + image[r * w + (w - 1)];
        n += 2;
      }
      bgMean = sum / n / 255;
    }
    const spread = Math.max(1e-3, Math.abs(fgMean - bgMean));

    const logits = new Float64Array(h * w);
    for (let i = 0; i < h * w; i++) {
      const v = image[i] / 255;
      logits[i] = (p.gain * (Math.abs(v - bgMean) - Math.abs(v - fgMean))) / spread;
    }

    const candidates: Float64Array[] = [logits];
    if (boxes.length) {
      const inBox = new Uint8Array(h * w);
      for (const b of boxes) {
        for (let r = b.r0; r <= b.r1; r++) {
          for (let c = b.c0; c <= b.c1; c++) inBox[r * w + c] = 1;
        }
      }
      const restricted = new Float64Array(h * w);
      for (let i = 0; i < h * w; i++) {
        restricted[i] = logits[i] - (inBox[i] ? 0 : p.suppression);
      }
      candidates.push(restricted);
    }
    if (pos.length) {
      const radius = Math.max(4, Math.round(p.anchorFraction * Math.max(h, w)));
      const anchored = new Float64Array(h * w);
      const r2 = radius * radius;
      for (let r = 0; r < h; r++) {
        for (let c = 0; c < w; c++) {
          let near = false;
          for (const q of pos) {
            const dr = r - q.r;
            const dc = c - q.c;
            if (dr * dr + dc * dc <= r2) {
              near = true;
              break;
            }
          }
          const i = r * w + c;
          anchored[i] = logits[i] - (near ? 0 : p.suppression);
        }
      }
      candidates.push(anchored);
    }

    let best = 0;
    let bestScore = -Infinity;
    candidates.forEach((cand, idx) => {
      const score = this.promptConsistency(cand, points, boxes);
      if (score > bestScore) {
        bestScore = score;
        best = idx;
      }
    });
    const out = new Float32Array(h * w);
    for (let i = 0; i < h * w; i++) out[i] = sigmoid(candidates[best][i]);
    return out;
  }

  /** Higher when clicks fall on the right side of 0.5 and the mask stays in the box. */
  private promptConsistency(logits: Float64Array, points: PointPrompt[], boxes: BoxPrompt[]): number {
    const { h, w } = this;
    let score = 0;
    for (const q of points) {
      const prob = sigmoid(logits[q.r * w + q.c]);
      score += q.label === "pos" ? prob : 1 - prob;
    }
    if (boxes.length) {
      const b = boxes[boxes.length - 1];
      let inside = 0;
      let insideN = 0;
      let outside = 0;
      let outsideN = 0;
      for (let r = 0; r < h; r++) {
        for (let c = 0; c < w; c++) {
          const prob = sigmoid(logits[r * w + c]);
          if (r >= b.r0 && r <= b.r1 && c >= b.c0 && c <= b.c1) {
            inside += prob;
            insideN++;
          } else {
            outside += prob;
            outsideN++;
          }
        }
      }
      score += inside / Math.max(1, insideN) - (outsideN ? outside / outsideN : 0);
    }
    return score;
  }
}

function mean(xs: number[]): number {
  return xs.reduce((a, b) => a + b, 0) / xs.length;
}
