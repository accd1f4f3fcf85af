"""Questionnaire rating-influence pipeline, bound from the Rust core.

The heavy lifting (parsing, statistics, encoding, training, reporting)
lives in the compiled extension; this package only re-exports it.
"""

from ._native import (
    DEFAULT_GROUPINGS_JSON,
    Cohort,
    Grouping,
    analyze,
    anova_one_way,
    decode_pgm,
    encode_profile,
    kendall_tau_b,
    kruskal_wallis,
    network_audit,
    render_report_files,
    train,
    wilcoxon_rank_sum,
)

__all__ = [
    "DEFAULT_GROUPINGS_JSON",
    "Cohort",
    "Grouping",
    "analyze",
    "anova_one_way",
    "decode_pgm",
    "encode_profile",
    "kendall_tau_b",
    "kruskal_wallis",
    "network_audit",
    "render_report_files",
    "train",
    "wilcoxon_rank_sum",
]
