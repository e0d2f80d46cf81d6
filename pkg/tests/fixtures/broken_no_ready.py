#!/usr/bin/env python3
"""Broken harness: consumes messages but never replies."""
import sys

for _ in sys.stdin:
    pass
