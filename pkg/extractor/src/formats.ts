/** Writers (and a reader used by tests) for the core toolkit's files. */

import { createWriteStream, readFileSync, writeFileSync } from "node:fs";
import { once } from "node:events";

import { Vocab } from "./vocab.js";
import { ContextKey } from "./stimuli.js";

export interface DumpRow {
  context?: ContextKey;
  prefix?: number[];
  logprobs: Float32Array;
}

function encodeLogprobs(logprobs: Float32Array): string {
  return Buffer.from(logprobs.buffer, logprobs.byteOffset, logprobs.byteLength).toString("base64");
}

export function decodeLogprobs(blob: string, dim: number): Float32Array {
  const raw = Buffer.from(blob, "base64");
  if (raw.length !== dim * 4) {
    throw new Error(`logprob row has ${raw.length} bytes, expected ${dim * 4}`);
  }
  const copy = Buffer.from(raw); // realign
  return new Float32Array(copy.buffer, copy.byteOffset, dim);
}

export function dumpHeader(vocab: Vocab, segmentation: Record<string, number[]>): string {
  return JSON.stringify({
    magic: "PDLM",
    version: 1,
    vocab: vocab.tokens,
    dim_v: vocab.tokens.length,
    segmentation,
    whitespace_marker: vocab.whitespaceMarker,
    eot_token: vocab.eotToken,
  });
}

export function dumpRowLine(row: DumpRow): string {
  // fixed insertion order keeps the output byte-deterministic
  const record: Record<string, unknown> = {};
  if (row.context) {
    record.context = {
      item: row.context.item,
      sentence: row.context.sentence,
      word_index: row.context.wordIndex,
    };
  }
  record.logprobs = encodeLogprobs(row.logprobs);
  if (row.prefix) record.prefix = row.prefix;
  return JSON.stringify(record);
}

export async function writeDump(
  path: string,
  vocab: Vocab,
  segmentation: Record<string, number[]>,
  rows: Iterable<DumpRow>,
): Promise<void> {
  const stream = createWriteStream(path, { encoding: "utf-8" });
  stream.write(dumpHeader(vocab, segmentation) + "\n");
  for (const row of rows) {
    if (!stream.write(dumpRowLine(row) + "\n")) await once(stream, "drain");
  }
  stream.end();
  await once(stream, "finish");
}

export interface ParsedDump {
  vocab: string[];
  segmentation: Record<string, number[]>;
  rows: { context?: ContextKey; prefix?: number[]; logprobs: Float32Array }[];
}

export function readDump(path: string): ParsedDump {
  const lines = readFileSync(path, "utf-8").split("\n");
  const header = JSON.parse(lines[0]);
  if (header.magic !== "PDLM" || header.version !== 1) {
    throw new Error(`${path}: bad magic/version`);
  }
  const dim = header.dim_v as number;
  const rows: ParsedDump["rows"] = [];
  for (const line of lines.slice(1)) {
    if (!line.trim()) continue;
    const parsed = JSON.parse(line);
    rows.push({
      context: parsed.context
        ? {
            item: String(parsed.context.item),
            sentence: String(parsed.context.sentence),
            wordIndex: Number(parsed.context.word_index),
          }
        : undefined,
      prefix: parsed.prefix,
      logprobs: decodeLogprobs(parsed.logprobs, dim),
    });
  }
  return { vocab: header.vocab, segmentation: header.segmentation, rows };
}

/** PDEM: JSON header line then row-major little-endian float32. */
export function writeEmbeddings(path: string, matrix: Float32Array, dimV: number, dimD: number): void {
  if (matrix.length !== dimV * dimD) throw new Error("embedding matrix shape mismatch");
  const header = JSON.stringify({ magic: "PDEM", version: 1, dim_v: dimV, dim_d: dimD });
  const payload = Buffer.from(matrix.buffer, matrix.byteOffset, matrix.byteLength);
  writeFileSync(path, Buffer.concat([Buffer.from(header + "\n", "utf-8"), payload]));
}

export interface SampleRecord {
  context?: ContextKey;
  prefix?: number[];
  seed: number;
  samples: string[];
}

export function sampleRecordLine(record: SampleRecord): string {
  const out: Record<string, unknown> = {};
  if (record.context) {
    out.context = {
      item: record.context.item,
      sentence: record.context.sentence,
      word_index: record.context.wordIndex,
    };
  }
  if (record.prefix) out.prefix = record.prefix;
  out.seed = record.seed;
  out.samples = record.samples;
  return JSON.stringify(out);
}

export interface ScoredWord {
  context: ContextKey;
  word: string;
  prob: number | null;
  logprob: number | null;
  error?: string;
}

export function scoredWordLine(entry: ScoredWord): string {
  return JSON.stringify({
    item_id: entry.context.item,
    sentence_id: entry.context.sentence,
    word_index: entry.context.wordIndex,
    word: entry.word,
    prob: entry.prob,
    logprob: entry.logprob,
    ...(entry.error ? { error: entry.error } : {}),
  });
}
