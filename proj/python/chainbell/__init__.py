"""Chained Bell inequalities: bounds, measurement search and NPA randomness certification."""

from ._chainbell import (
    ChainbellError,
    __version__,
    bell_bound,
    certify_noisy_singlet,
    certify_violation,
    classical_bound,
    gram,
    run_experiment,
    search_max_violation,
    sigma_max,
    tightness,
    tsirelson_bound,
    werner_witness_threshold,
)

__all__ = [
    "ChainbellError",
    "__version__",
    "bell_bound",
    "certify_noisy_singlet",
    "certify_violation",
    "classical_bound",
    "gram",
    "run_experiment",
    "search_max_violation",
    "sigma_max",
    "tightness",
    "tsirelson_bound",
    "werner_witness_threshold",
]
