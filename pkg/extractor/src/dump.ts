/** Batch extraction: distributions, embeddings, samples, scored words. */

import { createWriteStream, readFileSync } from "node:fs";
import { once } from "node:events";

import { logSumExp } from "./math.js";
import { CausalModel } from "./model.js";
import { sampleWords } from "./sampling.js";
import {
  DumpRow,
  SampleRecord,
  ScoredWord,
  sampleRecordLine,
  scoredWordLine,
  writeDump,
  writeEmbeddings,
} from "./formats.js";
import {
  ContextKey,
  ContextMode,
  Sentence,
  contextKeyString,
  contextPrefix,
  listContexts,
  loadClozeRecords,
  loadStimuli,
} from "./stimuli.js";
import { boundaryIds, buildSegmentationTable, segmentWord } from "./vocab.js";

export interface DumpReport {
  rows: number;
  truncated: string[];
  skipped: string[];
}

function fitWindow(model: CausalModel, prefix: number[]): { prefix: number[]; truncated: boolean } {
  if (prefix.length <= model.maxPrefix) return { prefix, truncated: false };
  // long passages lose their oldest material first
  return { prefix: prefix.slice(prefix.length - model.maxPrefix), truncated: true };
}

/**
 * One row per scoreable context plus the extended prefixes needed to
 * score its target word (conditionals and boundary mass). Prefixes
 * beyond the model window are truncated from the left and flagged.
 */
export async function dumpDistributions(
  model: CausalModel,
  sentences: Sentence[],
  outPath: string,
  mode: ContextMode = "sentence",
): Promise<DumpReport> {
  const vocab = model.vocab;
  const words = new Set<string>();
  for (const sentence of sentences) sentence.words.forEach((w) => words.add(w));
  const { table, failed } = buildSegmentationTable(vocab, words);
  const report: DumpReport = { rows: 0, truncated: [], skipped: [...failed] };

  const cache = new Map<string, Float32Array>();
  const logprobsFor = (prefix: number[]): Float32Array => {
    const key = prefix.join(",");
    let vector = cache.get(key);
    if (!vector) {
      vector = model.nextLogprobs(prefix);
      cache.set(key, vector);
    }
    return vector;
  };

  const contextRows: DumpRow[] = [];
  const contextPrefixes = new Set<string>();
  const extendedNeeded = new Map<string, number[]>();
  for (const { key, word } of listContexts(sentences)) {
    const label = contextKeyString(key);
    const rawPrefix = contextPrefix(sentences, key, vocab, mode);
    const tokens = table[word];
    if (rawPrefix === null || tokens === undefined) {
      report.skipped.push(label);
      continue;
    }
    const { prefix, truncated } = fitWindow(model, rawPrefix);
    if (truncated) report.truncated.push(label);
    contextRows.push({ context: key, prefix, logprobs: logprobsFor(prefix) });
    contextPrefixes.add(prefix.join(","));
    for (let i = 1; i <= tokens.length; i++) {
      const extended = fitWindow(model, [...prefix, ...tokens.slice(0, i)]).prefix;
      extendedNeeded.set(extended.join(","), extended);
    }
  }
  // extended prefixes that no context row already covers
  const extraRows: DumpRow[] = [];
  for (const [key, prefix] of extendedNeeded) {
    if (!contextPrefixes.has(key)) {
      extraRows.push({ prefix, logprobs: logprobsFor(prefix) });
    }
  }
  const rows = [...contextRows, ...extraRows];
  report.rows = rows.length;
  await writeDump(outPath, vocab, table, rows);
  return report;
}

export function dumpModelEmbeddings(model: CausalModel, outPath: string): void {
  writeEmbeddings(outPath, model.embeddings(), model.vocabSize, model.config.dModel);
}

export interface SampleDumpReport {
  contexts: number;
  skipped: string[];
}

/** Sample N words per cloze context, N matching the response count. */
export async function dumpSamples(
  model: CausalModel,
  sentences: Sentence[],
  clozePath: string,
  outPath: string,
  baseSeed: number,
  mode: ContextMode = "sentence",
): Promise<SampleDumpReport> {
  const records = loadClozeRecords(clozePath);
  const report: SampleDumpReport = { contexts: 0, skipped: [] };
  const stream = createWriteStream(outPath, { encoding: "utf-8" });
  let index = 0;
  for (const record of records) {
    const rawPrefix = contextPrefix(sentences, record.key, model.vocab, mode);
    if (rawPrefix === null) {
      report.skipped.push(contextKeyString(record.key));
      index += 1;
      continue;
    }
    const { prefix } = fitWindow(model, rawPrefix);
    const seed = (baseSeed * 65537 + index) >>> 0;
    const samples = sampleWords(model, prefix, record.responses.length, seed);
    const line = sampleRecordLine({ context: record.key, seed, samples } as SampleRecord);
    if (!stream.write(line + "\n")) await once(stream, "drain");
    report.contexts += 1;
    index += 1;
  }
  stream.end();
  await once(stream, "finish");
  return report;
}

/** Boundary-corrected word probability, the dump-free counterpart. */
export function wordProbability(model: CausalModel, prefix: number[], word: string): number | null {
  const tokens = segmentWord(model.vocab, word);
  if (tokens === null) return null;
  let logProb = 0;
  const running = [...prefix];
  for (const token of tokens) {
    logProb += model.nextLogprobs(fitWindow(model, running).prefix)[token];
    running.push(token);
  }
  const after = model.nextLogprobs(fitWindow(model, running).prefix);
  const boundary = boundaryIds(model.vocab).map((i) => after[i]);
  return Math.exp(logProb + logSumExp(boundary));
}

export interface WordListRecord {
  key: ContextKey;
  words: string[];
}

export async function scoreWords(
  model: CausalModel,
  sentences: Sentence[],
  lists: WordListRecord[],
  outPath: string,
  mode: ContextMode = "sentence",
): Promise<{ scored: number; flagged: number }> {
  const stream = createWriteStream(outPath, { encoding: "utf-8" });
  let scored = 0;
  let flagged = 0;
  for (const { key, words } of lists) {
    const rawPrefix = contextPrefix(sentences, key, model.vocab, mode);
    for (const word of words) {
      let entry: ScoredWord;
      if (rawPrefix === null) {
        entry = { context: key, word, prob: null, logprob: null, error: "prefix unsegmentable" };
        flagged += 1;
      } else {
        const prob = wordProbability(model, fitWindow(model, rawPrefix).prefix, word);
        if (prob === null) {
          entry = { context: key, word, prob: null, logprob: null, error: "word unsegmentable" };
          flagged += 1;
        } else {
          entry = { context: key, word, prob, logprob: Math.log(prob) };
          scored += 1;
        }
      }
      if (!stream.write(scoredWordLine(entry) + "\n")) await once(stream, "drain");
    }
  }
  stream.end();
  await once(stream, "finish");
  return { scored, flagged };
}

export function loadWordLists(path: string): WordListRecord[] {
  const out: WordListRecord[] = [];
  for (const line of readFileSync(path, "utf-8").split(/\r?\n/)) {
    if (!line.trim()) continue;
    const parsed = JSON.parse(line);
    out.push({
      key: {
        item: String(parsed.item_id),
        sentence: String(parsed.sentence_id),
        wordIndex: Number(parsed.word_index),
      },
      words: (parsed.words as unknown[]).map(String),
    });
  }
  return out;
}

export { loadStimuli };
