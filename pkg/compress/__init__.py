# Compression package initialization
from compress.export import EquivalenceReport, equivalence_check, strip_and_rewire
from compress.accounting import (
    LayerRow,
    PruneReport,
    count_macs,
    count_params,
    prune_report,
    summarize,
    time_generation,
    total_params,
)

__all__ = [
    "EquivalenceReport",
    "equivalence_check",
    "strip_and_rewire",
    "LayerRow",
    "PruneReport",
    "count_macs",
    "count_params",
    "prune_report",
    "summarize",
    "time_generation",
    "total_params",
]
