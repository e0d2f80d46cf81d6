/**
 * TF-IDF retrieval over past labeled examples, matching the orchestrator's
 * weighting: raw term counts, idf = ln(N / df) + 1, L2-normalized vectors,
 * cosine similarity, ties resolved by insertion order.
 */

const TOKEN_RE = /\\[a-zA-Z]+|[\^_]\{[^{}]*\}|[a-zA-Z]+|[0-9]+/g;

export function tokenize(text: string): string[] {
  const tokens: string[] = [];
  for (const match of text.matchAll(TOKEN_RE)) {
    const tok = match[0];
    tokens.push("\\^_".includes(tok[0]) ? tok : tok.toLowerCase());
  }
  return tokens;
}

function counts(tokens: string[]): Map<string, number> {
  const tf = new Map<string, number>();
  for (const tok of tokens) {
    tf.set(tok, (tf.get(tok) ?? 0) + 1);
  }
  return tf;
}

export class TfidfIndex {
  private readonly idf = new Map<string, number>();
  private readonly vectors: Map<string, number>[] = [];

  constructor(texts: string[]) {
    const docTf = texts.map((t) => counts(tokenize(t)));
    const df = new Map<string, number>();
    for (const tf of docTf) {
      for (const term of tf.keys()) {
        df.set(term, (df.get(term) ?? 0) + 1);
      }
    }
    const n = texts.length;
    for (const [term, d] of df) {
      this.idf.set(term, Math.log(n / d) + 1.0);
    }
    for (const tf of docTf) {
      this.vectors.push(this.normalized(tf));
    }
  }

  private normalized(tf: Map<string, number>): Map<string, number> {
    const vec = new Map<string, number>();
    for (const [term, count] of tf) {
      const idf = this.idf.get(term);
      if (idf !== undefined) {
        vec.set(term, count * idf);
      }
    }
    let norm = 0;
    for (const w of vec.values()) norm += w * w;
    norm = Math.sqrt(norm);
    if (norm > 0) {
      for (const [term, w] of vec) vec.set(term, w / norm);
    }
    return vec;
  }

  similarities(text: string): number[] {
    const query = this.normalized(counts(tokenize(text)));
    return this.vectors.map((vec) => {
      const [small, big] = query.size < vec.size ? [query, vec] : [vec, query];
      let dot = 0;
      for (const [term, w] of small) {
        dot += w * (big.get(term) ?? 0);
      }
      return dot;
    });
  }

  /** Indices of all documents ranked by similarity, stable on ties. */
  ranked(text: string): number[] {
    const sims = this.similarities(text);
    return sims
      .map((sim, index) => ({ sim, index }))
      .sort((a, b) => b.sim - a.sim)
      .map((item) => item.index);
  }
}
