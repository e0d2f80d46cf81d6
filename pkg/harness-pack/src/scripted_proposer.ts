#!/usr/bin/env node
/**
 * Scripted proposer: moves the next <= K queued candidate directories into
 * the drop directory. A deterministic stand-in for an agentic proposer.
 *
 * Usage: node scripted_proposer.js --queue QUEUE_DIR DROP_DIR K
 * An empty queue is fine: the iteration is simply barren (exit 0).
 */

import * as fs from "node:fs";
import * as path from "node:path";

function main(argv: string[]): number {
  const args = [...argv];
  const queueFlag = args.indexOf("--queue");
  if (queueFlag < 0 || args.length < queueFlag + 4) {
    console.error("usage: scripted_proposer --queue QUEUE_DIR DROP_DIR K");
    return 2;
  }
  const queueDir = args[queueFlag + 1];
  const [dropDir, kRaw] = args.slice(queueFlag + 2);
  const k = parseInt(kRaw, 10);

  fs.mkdirSync(dropDir, { recursive: true });
  const pending = fs.existsSync(queueDir)
    ? fs
        .readdirSync(queueDir, { withFileTypes: true })
        .filter((d) => d.isDirectory())
        .map((d) => d.name)
        .sort()
    : [];

  for (const name of pending.slice(0, k)) {
    fs.renameSync(path.join(queueDir, name), path.join(dropDir, name));
    console.log(`proposed ${name}`);
  }
  return 0;
}

process.exit(main(process.argv.slice(2)));
