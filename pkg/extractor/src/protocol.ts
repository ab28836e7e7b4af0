/**
 * Line-delimited request/response protocol over standard streams.
 *
 * Request:  {"id": int, "op": "dist"|"score", "prefix": [ids], "cont": [ids]?}
 * Response: {"id": int, "logprobs": "<base64 f32>"} for dist,
 *           {"id": int, "logprob": float} for score,
 *           {"id": int, "error": string} on any failure.
 *
 * One request is in flight at a time; a malformed line never kills the
 * stream, it produces an error response (id -1 when unparseable).
 */

import { createInterface } from "node:readline";
import { Readable, Writable } from "node:stream";

import { CausalModel } from "./model.js";

export function handleRequestLine(model: CausalModel, line: string): string {
  let id = -1;
  try {
    const request = JSON.parse(line);
    if (typeof request.id === "number") id = request.id;
    if (!Number.isInteger(id)) throw new Error("request id must be an integer");
    const prefix = parseIds(request.prefix, model.vocabSize, "prefix");
    if (request.op === "dist") {
      const logprobs = model.nextLogprobs(prefix);
      const blob = Buffer.from(
        logprobs.buffer,
        logprobs.byteOffset,
        logprobs.byteLength,
      ).toString("base64");
      return JSON.stringify({ id, logprobs: blob });
    }
    if (request.op === "score") {
      const cont = parseIds(request.cont, model.vocabSize, "cont");
      if (cont.length === 0) throw new Error("cont must be nonempty for score");
      return JSON.stringify({ id, logprob: model.score(prefix, cont) });
    }
    throw new Error(`unknown op ${JSON.stringify(request.op)}`);
  } catch (err) {
    return JSON.stringify({ id, error: String(err instanceof Error ? err.message : err) });
  }
}

function parseIds(value: unknown, vocabSize: number, field: string): number[] {
  if (value === undefined && field === "prefix") return [];
  if (!Array.isArray(value)) throw new Error(`${field} must be an array of token ids`);
  return value.map((v) => {
    const id = Number(v);
    if (!Number.isInteger(id) || id < 0 || id >= vocabSize) {
      throw new Error(`${field} has out-of-range token id ${v}`);
    }
    return id;
  });
}

export async function serve(
  model: CausalModel,
  input: Readable = process.stdin,
  output: Writable = process.stdout,
): Promise<void> {
  const lines = createInterface({ input, terminal: false });
  for await (const line of lines) {
    if (!line.trim()) continue;
    output.write(handleRequestLine(model, line) + "\n");
  }
}
