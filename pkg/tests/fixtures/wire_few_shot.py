#!/usr/bin/env python3
"""Few-shot harness behind the wire protocol; the subprocess twin of the
native few-shot harness used by the adapter-equivalence tests."""
from harness_search.reference import FewShotHarness
from harness_search.wire import serve

if __name__ == "__main__":
    serve(FewShotHarness(n=8))
