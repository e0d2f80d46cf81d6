#!/usr/bin/env python3
"""Scripted proposer: moves the next <= K queued candidate directories
into the drop directory. A deterministic stand-in for an agentic proposer.

Usage: scripted_proposer.py --queue QUEUE_DIR DROP_DIR K
"""
import argparse
import shutil
import sys
from pathlib import Path


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--queue", required=True)
    parser.add_argument("drop_dir")
    parser.add_argument("k", type=int)
    args = parser.parse_args()

    queue = Path(args.queue)
    drop = Path(args.drop_dir)
    drop.mkdir(parents=True, exist_ok=True)
    pending = sorted(d for d in queue.iterdir() if d.is_dir()) if queue.is_dir() else []
    for source in pending[: args.k]:
        shutil.move(str(source), str(drop / source.name))
        print(f"proposed {source.name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
