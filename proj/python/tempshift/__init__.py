"""Temporal shift tuple mining, template search and masked prompt generation."""

from ._tempshift import (
    ConfigError,
    ExternalOracle,
    FormatError,
    LikelihoodOracle,
    NGramLM,
    OracleError,
    Template,
    TempshiftError,
    builtin_templates,
    context_score,
    diversity,
    generate_prompts,
    load_embeddings,
    make_instances,
    pmi,
    render_report,
    run_pipeline,
    save_embeddings,
    search_templates,
    tokenize,
)

__all__ = [
    "ConfigError",
    "ExternalOracle",
    "FormatError",
    "LikelihoodOracle",
    "NGramLM",
    "OracleError",
    "Template",
    "TempshiftError",
    "builtin_templates",
    "context_score",
    "diversity",
    "generate_prompts",
    "load_embeddings",
    "make_instances",
    "pmi",
    "render_report",
    "run_pipeline",
    "save_embeddings",
    "search_templates",
    "tokenize",
]
