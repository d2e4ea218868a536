/**
 * The backbone boundary: everything the server needs from a latent diffusion
 * model. A real implementation would wrap pretrained weights; the synthetic
 * backbone below is a deterministic stand-in with the same contract, so the
 * protocol surface can run and be tested on machines without any weights.
 */

export interface Backbone {
  readonly nTrain: number;
  /** Signal-retention table, strictly decreasing, length nTrain + 1 with [0] = 1. */
  readonly alphaBar: Float64Array;
  /** Noise prediction for a latent at a timestep under a conditioning id. */
  predictEps(z: Float64Array, shape: number[], timestep: number, cond: string): Float64Array;
  /** Pixel tensor (c, H, W) to latent tensor; returns values and shape. */
  encode(x: Float64Array, shape: number[]): { values: Float64Array; shape: number[] };
  /** Latent tensor back to pixel space. */
  decode(z: Float64Array, shape: number[]): { values: Float64Array; shape: number[] };
}

export interface BackboneOptions {
  nTrain?: number;
  betaStart?: number;
  betaEnd?: number;
  /** Pixel-to-latent spatial reduction factor. */
  scale?: number;
  latentChannels?: number;
  pixelChannels?: number;
}

function linearAlphaBar(nTrain: number, betaStart: number, betaEnd: number): Float64Array {
  const table = new Float64Array(nTrain + 1);
  table[0] = 1.0;
  let prod = 1.0;
  for (let t = 1; t <= nTrain; t++) {
    const beta = betaStart + ((betaEnd - betaStart) * (t - 1)) / (nTrain - 1);
    prod *= 1.0 - beta;
    table[t] = prod;
  }
  return table;
}

/** Deterministic per-string parameter in [-1, 1], FNV-1a hashed. */
function condOffset(cond: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < cond.length; i++) {
    hash ^= cond.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return (hash % 2001) / 1000 - 1;
}

/**
 * Closed-form noise predictor for isotropic Gaussian toy data, mirroring the
 * oracle the core pipelines are verified against. Each conditioning id maps
 * deterministically to its own data mean, so different prompts genuinely
 * steer the output; the null id maps to mean zero.
 */
export class SyntheticBackbone implements Backbone {
  readonly nTrain: number;
  readonly alphaBar: Float64Array;
  private readonly scale: number;
  private readonly latentChannels: number;
  private readonly pixelChannels: number;

  constructor(options: BackboneOptions = {}) {
    this.nTrain = options.nTrain ?? 1000;
    this.alphaBar = linearAlphaBar(this.nTrain, options.betaStart ?? 1e-4, options.betaEnd ?? 0.02);
    this.scale = options.scale ?? 8;
    this.latentChannels = options.latentChannels ?? 4;
    this.pixelChannels = options.pixelChannels ?? 3;
  }

  predictEps(z: Float64Array, shape: number[], timestep: number, cond: string): Float64Array {
    if (!Number.isInteger(timestep) || timestep < 1 || timestep > this.nTrain) {
      throw new Error(`timestep ${timestep} outside [1, ${this.nTrain}]`);
    }
    const mu = cond === "null_text" ? 0.0 : condOffset(cond);
    const sigma2 = 1.0;
    const abar = this.alphaBar[timestep];
    const rootAbar = Math.sqrt(abar);
    const denom = abar * sigma2 + (1.0 - abar);
    const rootOneMinus = Math.sqrt(1.0 - abar);
    const out = new Float64Array(z.length);
    for (let i = 0; i < z.length; i++) {
      const posteriorMean = (rootAbar * sigma2 * z[i] + (1.0 - abar) * mu) / denom;
      out[i] = (z[i] - rootAbar * posteriorMean) / rootOneMinus;
    }
    return out;
  }

  encode(x: Float64Array, shape: number[]): { values: Float64Array; shape: number[] } {
    const [c, height, width] = shape;
    const s = this.scale;
    if (height % s !== 0 || width % s !== 0) {
      throw new Error(`pixel shape ${height}x${width} not divisible by scale ${s}`);
    }
    const lh = height / s;
    const lw = width / s;
    const out = new Float64Array(this.latentChannels * lh * lw);
    // block means per input channel, cycled over the latent channels
    for (let lc = 0; lc < this.latentChannels; lc++) {
      const src = lc % c;
      for (let i = 0; i < lh; i++) {
        for (let j = 0; j < lw; j++) {
          let acc = 0;
          for (let di = 0; di < s; di++) {
            for (let dj = 0; dj < s; dj++) {
              acc += x[src * height * width + (i * s + di) * width + (j * s + dj)];
            }
          }
          out[lc * lh * lw + i * lw + j] = acc / (s * s);
        }
      }
    }
    return { values: out, shape: [this.latentChannels, lh, lw] };
  }

  decode(z: Float64Array, shape: number[]): { values: Float64Array; shape: number[] } {
    const [c, lh, lw] = shape;
    const s = this.scale;
    const height = lh * s;
    const width = lw * s;
    const out = new Float64Array(this.pixelChannels * height * width);
    for (let pc = 0; pc < this.pixelChannels; pc++) {
      const src = pc % c;
      for (let i = 0; i < height; i++) {
        for (let j = 0; j < width; j++) {
          const v = z[src * lh * lw + Math.floor(i / s) * lw + Math.floor(j / s)];
          out[pc * height * width + i * width + j] = v;
        }
      }
    }
    return { values: out, shape: [this.pixelChannels, height, width] };
  }
}

/**
 * Factory honoring the CLI surface. A model path selects a real backbone
 * loader; none is bundled here, so pointing at weights reports exactly that
 * rather than silently falling back to the synthetic one.
 */
export function createBackbone(modelPath: string | undefined, _device: string,
                               options: BackboneOptions = {}): Backbone {
  if (modelPath !== undefined) {
    throw new Error(
      `no loader available for model weights at ${modelPath}; ` +
      "run without --model-path to serve the synthetic backbone");
  }
  return new SyntheticBackbone(options);
}
