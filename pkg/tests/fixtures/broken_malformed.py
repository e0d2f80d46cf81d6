#!/usr/bin/env python3
"""Broken harness: answers init with a line that is not JSON."""
import sys

sys.stdin.readline()
sys.stdout.write("READY SET GO\n")
sys.stdout.flush()
for _ in sys.stdin:
    pass
