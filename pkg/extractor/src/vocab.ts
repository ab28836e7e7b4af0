/** Surface-form vocabulary with the leading-whitespace convention. */

export interface Vocab {
  tokens: string[];
  whitespaceMarker: string;
  eotToken: string | null;
  index: Map<string, number>;
}

export function makeVocab(
  tokens: string[],
  whitespaceMarker = " ",
  eotToken: string | null = "<|endoftext|>",
): Vocab {
  const index = new Map<string, number>();
  tokens.forEach((t, i) => {
    if (index.has(t)) throw new Error(`duplicate token ${JSON.stringify(t)}`);
    index.set(t, i);
  });
  return { tokens, whitespaceMarker, eotToken, index };
}

const PUNCTUATION = /^\p{P}+$/u;

/** Boundary test: leading whitespace marker, punctuation-only, or end-of-text. */
export function isWordEnd(token: string, vocab: Vocab): boolean {
  if (vocab.eotToken !== null && token === vocab.eotToken) return true;
  return token.startsWith(vocab.whitespaceMarker) || PUNCTUATION.test(token);
}

export function boundaryIds(vocab: Vocab): number[] {
  const ids: number[] = [];
  vocab.tokens.forEach((t, i) => {
    if (isWordEnd(t, vocab)) ids.push(i);
  });
  return ids;
}

/**
 * Greedy longest-match segmentation. The marker-prefixed form is tried
 * first; bare form as a fallback; null when neither covers the word.
 */
export function segmentWord(vocab: Vocab, word: string): number[] | null {
  const byLength = segmentCache.get(vocab) ?? cacheTokens(vocab);
  const attempt = (text: string): number[] | null => {
    const ids: number[] = [];
    while (text.length > 0) {
      let matched = false;
      for (const token of byLength) {
        if (text.startsWith(token)) {
          ids.push(vocab.index.get(token)!);
          text = text.slice(token.length);
          matched = true;
          break;
        }
      }
      if (!matched) return null;
    }
    return ids;
  };
  return attempt(vocab.whitespaceMarker + word) ?? attempt(word);
}

const segmentCache = new WeakMap<Vocab, string[]>();

function cacheTokens(vocab: Vocab): string[] {
  const sorted = [...vocab.tokens].sort((a, b) => b.length - a.length);
  segmentCache.set(vocab, sorted);
  return sorted;
}

/** word -> token ids table for a word list; unsegmentable words reported. */
export function buildSegmentationTable(
  vocab: Vocab,
  words: Iterable<string>,
): { table: Record<string, number[]>; failed: string[] } {
  const table: Record<string, number[]> = {};
  const failed: string[] = [];
  for (const word of words) {
    if (word in table) continue;
    const ids = segmentWord(vocab, word);
    if (ids === null) failed.push(word);
    else table[word] = ids;
  }
  return { table, failed };
}
