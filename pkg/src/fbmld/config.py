"""Numeric tolerances and shared defaults, surfaced as one config structure."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Knobs for the numerical kernels.

    The defaults are the documented contract; tests pin behaviour against
    them.  Construct a modified copy with ``dataclasses.replace`` if a
    workflow needs different settings.
    """

    # hypergeometric series: relative truncation threshold and term cap
    series_rel_tol: float = 1e-14
    series_max_terms: int = 100_000
    # Cholesky jitter schedule: initial value, escalation factor, ceiling
    jitter_init: float = 1e-12
    jitter_factor: float = 10.0
    jitter_max: float = 1e-8
    # Euler solver aborts when any state component exceeds this magnitude
    overflow_guard: float = 1e12
    # exact O(n^2) Holder scan switches to strided subsampling above this
    holder_scan_limit: int = 4096


DEFAULT_TOLERANCES = Tolerances()

MAX_DIM = 4          # fBm components are sampled independently; d <= 4
MAX_CHOLESKY_STEPS = 4096   # O(n^3) factorization budget
