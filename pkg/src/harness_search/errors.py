"""Exception types shared across the package.

Filesystem failures (unwritable paths, unreadable files) are not wrapped:
they surface as the interpreter's own OSError.
"""


class HarnessSearchError(Exception):
    """Base class for all domain errors raised by this package."""


# --- experience store ---------------------------------------------------


class RunAlreadyExists(HarnessSearchError):
    """init_run called on a directory that already holds a run manifest."""


class RunNotFound(HarnessSearchError):
    """load_run called on a directory without a run manifest."""


class UnknownParent(HarnessSearchError):
    """A declared parent candidate id does not exist in the store."""


class UnknownCandidate(HarnessSearchError):
    """Referenced candidate id does not exist in the store."""


class EmptyCandidate(HarnessSearchError):
    """Candidate creation attempted with no source files."""


class AlreadyScored(HarnessSearchError):
    """A score report was already written for this candidate."""


class InvalidReport(HarnessSearchError):
    """Score report violates its own invariants."""


class SequenceGap(HarnessSearchError):
    """Trace event sequence numbers are not contiguous."""


# --- metrics ------------------------------------------------------------


class ObjectiveMismatch(HarnessSearchError):
    """Metric vectors do not carry exactly the declared objectives."""


class EmptySeries(HarnessSearchError):
    """A running-optimum series was requested for an empty sequence."""


# --- LLM backends -------------------------------------------------------


class BackendUnavailable(HarnessSearchError):
    """HTTP backend failed after exhausting its retry budget."""


class ReplayMiss(HarnessSearchError):
    """Replay backend has no further logged response for this stream."""


class MockMiss(HarnessSearchError):
    """No mock rule matched and no default output is configured."""


# --- harness protocol ---------------------------------------------------


class HarnessProtocolError(HarnessSearchError):
    """A harness violated the wire protocol or its lifecycle contract.

    `reason` is a short machine-readable tag: one of
    "timeout", "malformed_message", "crashed", "protocol".
    """

    def __init__(self, message: str, reason: str = "protocol"):
        super().__init__(message)
        self.reason = reason


class HarnessCrashed(HarnessSearchError):
    """A harness failed during evaluation (after passing validation)."""


# --- datasets -----------------------------------------------------------


class SchemaError(HarnessSearchError):
    """A dataset file is missing a mapped column or field."""


class DuplicateId(HarnessSearchError):
    """A dataset contains the same example id twice."""


# --- retrieval ----------------------------------------------------------


class EmptyQuery(HarnessSearchError):
    """A search was issued with a query that yields no tokens."""


class InvalidK(HarnessSearchError):
    """top-k retrieval requested with k <= 0."""


class EmptyCorpus(HarnessSearchError):
    """No corpus entries remain after filtering."""


# --- search loop --------------------------------------------------------


class ProposerFailed(HarnessSearchError):
    """The proposer command exited nonzero or timed out."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


class SeedFailure(HarnessSearchError):
    """A seed harness failed to evaluate; the search cannot start."""
