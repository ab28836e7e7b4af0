/**
 * Minimal GPT-style causal language model over a flat weights file.
 *
 * The TGPT format is one JSON header line followed by concatenated
 * row-major little-endian float32 tensors in the order listed in the
 * header. Pre-LN blocks, tied input/output embeddings, learned absolute
 * positions, tanh-GELU MLPs: export any compatible pretrained
 * checkpoint into this layout and the extractor serves its real
 * distributions. Inference is single-threaded and fully deterministic.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { affine, gelu, layerNorm, logSoftmax, softmaxInPlace } from "./math.js";
import { Rng } from "./rng.js";
import { Vocab, makeVocab } from "./vocab.js";

export interface ModelConfig {
  nLayer: number;
  nHead: number;
  dModel: number;
  dFf: number;
  nCtx: number;
}

interface TensorSpec {
  name: string;
  shape: number[];
}

export interface TgptHeader {
  magic: "TGPT";
  version: 1;
  n_layer: number;
  n_head: number;
  d_model: number;
  d_ff: number;
  n_ctx: number;
  vocab: string[];
  whitespace_marker: string;
  eot_token: string | null;
  tensors: TensorSpec[];
}

function tensorLayout(config: ModelConfig, vocabSize: number): TensorSpec[] {
  const { nLayer, dModel, dFf, nCtx } = config;
  const specs: TensorSpec[] = [
    { name: "wte", shape: [vocabSize, dModel] },
    { name: "wpe", shape: [nCtx, dModel] },
  ];
  for (let i = 0; i < nLayer; i++) {
    specs.push(
      { name: `h${i}.ln1.g`, shape: [dModel] },
      { name: `h${i}.ln1.b`, shape: [dModel] },
      { name: `h${i}.attn.w`, shape: [dModel, 3 * dModel] },
      { name: `h${i}.attn.b`, shape: [3 * dModel] },
      { name: `h${i}.proj.w`, shape: [dModel, dModel] },
      { name: `h${i}.proj.b`, shape: [dModel] },
      { name: `h${i}.ln2.g`, shape: [dModel] },
      { name: `h${i}.ln2.b`, shape: [dModel] },
      { name: `h${i}.fc.w`, shape: [dModel, dFf] },
      { name: `h${i}.fc.b`, shape: [dFf] },
      { name: `h${i}.out.w`, shape: [dFf, dModel] },
      { name: `h${i}.out.b`, shape: [dModel] },
    );
  }
  specs.push({ name: "ln_f.g", shape: [dModel] }, { name: "ln_f.b", shape: [dModel] });
  return specs;
}

export class CausalModel {
  readonly vocab: Vocab;
  readonly config: ModelConfig;
  private tensors: Map<string, Float32Array>;

  constructor(vocab: Vocab, config: ModelConfig, tensors: Map<string, Float32Array>) {
    this.vocab = vocab;
    this.config = config;
    this.tensors = tensors;
    for (const spec of tensorLayout(config, vocab.tokens.length)) {
      const got = tensors.get(spec.name);
      const want = spec.shape.reduce((a, b) => a * b, 1);
      if (!got || got.length !== want) {
        throw new Error(`tensor ${spec.name}: expected ${want} values`);
      }
    }
  }

  get vocabSize(): number {
    return this.vocab.tokens.length;
  }

  /** Longest servable prefix; one slot is reserved for the BOS token. */
  get maxPrefix(): number {
    return this.config.nCtx - 1;
  }

  private t(name: string): Float32Array {
    return this.tensors.get(name)!;
  }

  /**
   * Log-probabilities (nats, f32) of the next token given a prefix of
   * token ids. The end-of-text token is prepended as position 0, so the
   * empty prefix is valid and sentence-initial material is conditioned
   * the way pretrained checkpoints expect.
   */
  nextLogprobs(prefix: number[]): Float32Array {
    if (prefix.length > this.maxPrefix) {
      throw new Error(
        `prefix of ${prefix.length} tokens exceeds the ${this.maxPrefix}-token window`,
      );
    }
    const bos = this.vocab.eotToken !== null ? this.vocab.index.get(this.vocab.eotToken)! : 0;
    const ids = [bos, ...prefix];
    for (const id of ids) {
      if (id < 0 || id >= this.vocabSize) throw new Error(`token id ${id} out of range`);
    }
    const { nLayer, nHead, dModel, dFf } = this.config;
    const headDim = dModel / nHead;
    const seq = ids.length;

    const wte = this.t("wte");
    const wpe = this.t("wpe");
    let states: Float32Array[] = ids.map((id, pos) => {
      const x = new Float32Array(dModel);
      for (let d = 0; d < dModel; d++) x[d] = wte[id * dModel + d] + wpe[pos * dModel + d];
      return x;
    });

    for (let layer = 0; layer < nLayer; layer++) {
      const ln1g = this.t(`h${layer}.ln1.g`);
      const ln1b = this.t(`h${layer}.ln1.b`);
      const attnW = this.t(`h${layer}.attn.w`);
      const attnB = this.t(`h${layer}.attn.b`);
      const projW = this.t(`h${layer}.proj.w`);
      const projB = this.t(`h${layer}.proj.b`);

      const qkv = states.map((x) =>
        affine(layerNorm(x, ln1g, ln1b), attnW, attnB, dModel, 3 * dModel),
      );
      const attnOut: Float32Array[] = [];
      for (let pos = 0; pos < seq; pos++) {
        const merged = new Float32Array(dModel);
        for (let head = 0; head < nHead; head++) {
          const qOff = head * headDim;
          const scores = new Float64Array(pos + 1);
          for (let src = 0; src <= pos; src++) {
            let dot = 0;
            for (let d = 0; d < headDim; d++) {
              dot += qkv[pos][qOff + d] * qkv[src][dModel + qOff + d];
            }
            scores[src] = dot / Math.sqrt(headDim);
          }
          softmaxInPlace(scores);
          for (let src = 0; src <= pos; src++) {
            const w = scores[src];
            for (let d = 0; d < headDim; d++) {
              merged[qOff + d] += w * qkv[src][2 * dModel + qOff + d];
            }
          }
        }
        attnOut.push(affine(merged, projW, projB, dModel, dModel));
      }
      states = states.map((x, pos) => {
        const out = new Float32Array(dModel);
        for (let d = 0; d < dModel; d++) out[d] = x[d] + attnOut[pos][d];
        return out;
      });

      const ln2g = this.t(`h${layer}.ln2.g`);
      const ln2b = this.t(`h${layer}.ln2.b`);
      const fcW = this.t(`h${layer}.fc.w`);
      const fcB = this.t(`h${layer}.fc.b`);
      const outW = this.t(`h${layer}.out.w`);
      const outB = this.t(`h${layer}.out.b`);
      states = states.map((x) => {
        const hidden = gelu(affine(layerNorm(x, ln2g, ln2b), fcW, fcB, dModel, dFf));
        const mlp = affine(hidden, outW, outB, dFf, dModel);
        const out = new Float32Array(dModel);
        for (let d = 0; d < dModel; d++) out[d] = x[d] + mlp[d];
        return out;
      });
    }

    const final = layerNorm(states[seq - 1], this.t("ln_f.g"), this.t("ln_f.b"));
    const logits = new Float64Array(this.vocabSize);
    for (let v = 0; v < this.vocabSize; v++) {
      let dot = 0;
      for (let d = 0; d < dModel; d++) dot += final[d] * wte[v * dModel + d];
      logits[v] = dot;
    }
    return logSoftmax(logits);
  }

  /** Log-probability (nats) of a continuation given a prefix. */
  score(prefix: number[], continuation: number[]): number {
    let total = 0;
    const running = [...prefix];
    for (const token of continuation) {
      total += this.nextLogprobs(running)[token];
      running.push(token);
    }
    return total;
  }

  /** Static input-embedding matrix (row per token). */
  embeddings(): Float32Array {
    return this.t("wte");
  }
}

export function loadModel(path: string): CausalModel {
  const raw = readFileSync(path);
  const newline = raw.indexOf(0x0a);
  if (newline < 0) throw new Error(`${path}: missing header line`);
  let header: TgptHeader;
  try {
    header = JSON.parse(raw.subarray(0, newline).toString("utf-8"));
  } catch (err) {
    throw new Error(`${path}: bad header (${err})`);
  }
  if (header.magic !== "TGPT" || header.version !== 1) {
    throw new Error(`${path}: bad magic/version`);
  }
  const vocab = makeVocab(header.vocab, header.whitespace_marker, header.eot_token);
  const config: ModelConfig = {
    nLayer: header.n_layer,
    nHead: header.n_head,
    dModel: header.d_model,
    dFf: header.d_ff,
    nCtx: header.n_ctx,
  };
  const tensors = new Map<string, Float32Array>();
  let offset = newline + 1;
  for (const spec of header.tensors) {
    const count = spec.shape.reduce((a, b) => a * b, 1);
    const bytes = count * 4;
    if (offset + bytes > raw.length) throw new Error(`${path}: truncated at ${spec.name}`);
    // copy out of the file buffer to guarantee alignment
    const slice = Buffer.from(raw.subarray(offset, offset + bytes));
    tensors.set(
      spec.name,
      new Float32Array(slice.buffer, slice.byteOffset, count),
    );
    offset += bytes;
  }
  if (offset !== raw.length) throw new Error(`${path}: ${raw.length - offset} trailing bytes`);
  return new CausalModel(vocab, config, tensors);
}

/** Write a seeded random-weights model; the test double for a real export. */
export function generateModel(
  path: string,
  vocabTokens: string[],
  config: ModelConfig,
  seed: number,
  whitespaceMarker = " ",
  eotToken: string | null = "<|endoftext|>",
): void {
  const rng = new Rng(seed);
  const specs = tensorLayout(config, vocabTokens.length);
  const chunks: Buffer[] = [];
  const header: TgptHeader = {
    magic: "TGPT",
    version: 1,
    n_layer: config.nLayer,
    n_head: config.nHead,
    d_model: config.dModel,
    d_ff: config.dFf,
    n_ctx: config.nCtx,
    vocab: vocabTokens,
    whitespace_marker: whitespaceMarker,
    eot_token: eotToken,
    tensors: specs,
  };
  chunks.push(Buffer.from(JSON.stringify(header) + "\n", "utf-8"));
  for (const spec of specs) {
    const count = spec.shape.reduce((a, b) => a * b, 1);
    const data = new Float32Array(count);
    const isGain = spec.name.endsWith(".g");
    const isBias = spec.name.endsWith(".b");
    const scale = 0.6 / Math.sqrt(spec.shape[0]);
    for (let i = 0; i < count; i++) {
      if (isGain) data[i] = 1 + 0.02 * rng.normal();
      else if (isBias) data[i] = 0.01 * rng.normal();
      else data[i] = scale * rng.normal();
    }
    chunks.push(Buffer.from(data.buffer, data.byteOffset, data.byteLength));
  }
  writeFileSync(path, Buffer.concat(chunks));
}

export const DEFAULT_TEST_WORDS = [
  "the", "a", "old", "man", "woman", "child", "dog", "cat", "bird", "sat",
  "ran", "slept", "walked", "saw", "found", "lost", "fell", "blew", "on",
  "under", "near", "in", "to", "mat", "rug", "tree", "house", "door",
  "garden", "kitchen", "key", "book", "lamp", "light", "rain", "wind",
  "morning", "night", "river", "bridge", "path", "village", "home",
  "quiet", "small", "warm",
];

/** Default vocabulary: marked words, two subword pieces, punctuation, EOT. */
export function defaultVocabTokens(words: string[] = DEFAULT_TEST_WORDS): string[] {
  const tokens = words.map((w) => ` ${w}`);
  tokens.push(" car", "pet", "ow", ".", ",", "<|endoftext|>");
  return tokens;
}
