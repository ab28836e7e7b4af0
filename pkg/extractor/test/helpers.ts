import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { CausalModel, defaultVocabTokens, generateModel, loadModel } from "../src/model.js";

export function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "extractor-test-"));
}

let cachedModelPath: string | null = null;

/** One small seeded model shared across tests (2 layers, 32 dims). */
export function testModelPath(): string {
  if (!cachedModelPath) {
    cachedModelPath = join(tempDir(), "model.tgpt");
    generateModel(cachedModelPath, defaultVocabTokens(), {
      nLayer: 2,
      nHead: 2,
      dModel: 32,
      dFf: 64,
      nCtx: 64,
    }, 7);
  }
  return cachedModelPath;
}

export function testModel(): CausalModel {
  return loadModel(testModelPath());
}

/** 12-sentence stimulus fixture over the default vocabulary (120 words). */
export function writeStimuliFixture(dir: string): string {
  const sentences: [string, string, string][] = [
    ["p1", "s1", "the old man walked to the small village near home"],
    ["p1", "s2", "a quiet woman sat under the tree in garden"],
    ["p1", "s3", "the child found a lost key near the door"],
    ["p1", "s4", "a small bird slept on the warm carpet home"],
    ["p2", "s1", "the dog ran to the garden near the house"],
    ["p2", "s2", "the woman saw a small cat near the window"],
    ["p2", "s3", "the rain fell on the path near the bridge"],
    ["p2", "s4", "the wind blew in the quiet night near home"],
    ["p3", "s1", "the child lost a small book near the lamp"],
    ["p3", "s2", "a dog slept near the door in the night"],
    ["p3", "s3", "the man saw the bird on the old tree"],
    ["p3", "s4", "a woman walked home to the warm kitchen light"],
  ];
  const lines = ["item_id,sentence_id,word_index,word_text"];
  for (const [item, sentence, text] of sentences) {
    text.split(" ").forEach((word, i) => {
      lines.push(`${item},${sentence},${i},${word}`);
    });
  }
  const path = join(dir, "stimuli.csv");
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

export function writeClozeFixture(dir: string, counts: [string, string, number, number][]): string {
  const lines = counts.map(([item, sentence, wordIndex, n]) =>
    JSON.stringify({
      item_id: item,
      sentence_id: sentence,
      word_index: wordIndex,
      responses: Array.from({ length: n }, (_, i) => (i % 2 === 0 ? "the" : "dog")),
    }),
  );
  const path = join(dir, "cloze.jsonl");
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}
