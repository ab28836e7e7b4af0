/**
 * Word sampling by token walks: draw a first token, keep drawing until a
 * boundary-marking token appears among the next three draws, and emit
 * the accumulated material (at most three tokens) with its leading
 * whitespace stripped.
 */

import { CausalModel } from "./model.js";
import { Rng } from "./rng.js";
import { isWordEnd } from "./vocab.js";

export function sampleWords(
  model: CausalModel,
  prefix: number[],
  n: number,
  seed: number,
): string[] {
  if (n < 1) throw new Error("sample count must be >= 1");
  const rng = new Rng(seed);
  const vocab = model.vocab;
  const probsFor = (ids: number[]): Float64Array => {
    const logprobs = model.nextLogprobs(ids);
    const probs = new Float64Array(logprobs.length);
    let sum = 0;
    for (let i = 0; i < logprobs.length; i++) {
      probs[i] = Math.exp(logprobs[i]);
      sum += probs[i];
    }
    for (let i = 0; i < probs.length; i++) probs[i] /= sum;
    return probs;
  };

  const words: string[] = [];
  for (let draw = 0; draw < n; draw++) {
    const emitted: number[] = [rng.categorical(probsFor(prefix))];
    for (let step = 0; step < 3; step++) {
      const next = rng.categorical(probsFor([...prefix, ...emitted]));
      if (isWordEnd(vocab.tokens[next], vocab)) break;
      if (step < 2) emitted.push(next);
      // the fourth draw never extends the word
    }
    let surface = emitted.map((id) => vocab.tokens[id]).join("");
    if (surface.startsWith(vocab.whitespaceMarker)) {
      surface = surface.slice(vocab.whitespaceMarker.length);
    }
    words.push(surface);
  }
  return words;
}
