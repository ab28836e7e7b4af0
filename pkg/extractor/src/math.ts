/** Small dense-tensor helpers for the transformer forward pass. */

/** out[r] = sum_k x[k] * w[k*cols + r] + b[r]  (x: [rows_in], w: [rows_in, cols]) */
export function affine(
  x: Float32Array,
  w: Float32Array,
  b: Float32Array | null,
  rowsIn: number,
  cols: number,
): Float32Array {
  const out = new Float32Array(cols);
  if (b) out.set(b);
  for (let k = 0; k < rowsIn; k++) {
    const xk = x[k];
    if (xk === 0) continue;
    const base = k * cols;
    for (let r = 0; r < cols; r++) out[r] += xk * w[base + r];
  }
  return out;
}

export function layerNorm(
  x: Float32Array,
  gain: Float32Array,
  bias: Float32Array,
  eps = 1e-5,
): Float32Array {
  const n = x.length;
  let mean = 0;
  for (let i = 0; i < n; i++) mean += x[i];
  mean /= n;
  let variance = 0;
  for (let i = 0; i < n; i++) {
    const d = x[i] - mean;
    variance += d * d;
  }
  variance /= n;
  const inv = 1 / Math.sqrt(variance + eps);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

const GELU_C = Math.sqrt(2 / Math.PI);

/** Tanh-approximation used by the original architecture. */
export function gelu(x: Float32Array): Float32Array {
  const out = new Float32Array(x.length);
  for (let i = 0; i < x.length; i++) {
    const v = x[i];
    out[i] = 0.5 * v * (1 + Math.tanh(GELU_C * (v + 0.044715 * v * v * v)));
  }
  return out;
}

/** In-place softmax over a plain slice. */
export function softmaxInPlace(x: Float64Array): void {
  let max = -Infinity;
  for (let i = 0; i < x.length; i++) if (x[i] > max) max = x[i];
  let sum = 0;
  for (let i = 0; i < x.length; i++) {
    x[i] = Math.exp(x[i] - max);
    sum += x[i];
  }
  for (let i = 0; i < x.length; i++) x[i] /= sum;
}

/** Log-softmax into a fresh f32 array (natural log). */
export function logSoftmax(logits: Float64Array): Float32Array {
  let max = -Infinity;
  for (let i = 0; i < logits.length; i++) if (logits[i] > max) max = logits[i];
  let sum = 0;
  for (let i = 0; i < logits.length; i++) sum += Math.exp(logits[i] - max);
  const logZ = max + Math.log(sum);
  const out = new Float32Array(logits.length);
  for (let i = 0; i < logits.length; i++) out[i] = logits[i] - logZ;
  return out;
}

export function logSumExp(values: Float32Array | number[]): number {
  let max = -Infinity;
  for (const v of values) if (v > max) max = v;
  if (max === -Infinity) return -Infinity;
  let sum = 0;
  for (const v of values) sum += Math.exp(v - max);
  return max + Math.log(sum);
}
