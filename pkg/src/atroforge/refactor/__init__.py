"""Correspondence-driven program rewriting and the repair driver."""
from .repair import (
    RepairReport, RepairResult, post_process, preprocess_split, repair, try_logging,
    try_merging, try_redirect, try_repair,
)
from .rewrite import (
    LOGGER, REDIRECT, RefactorError, RefactorState, RewriteUndefined, Step,
    intro_field, intro_schema, intro_vc, make_logging_schema, merge_commands,
    redirect_where, replay, rewrite_command,
)

__all__ = [
    "RepairReport", "RepairResult", "post_process", "preprocess_split", "repair",
    "try_logging", "try_merging", "try_redirect", "try_repair", "LOGGER", "REDIRECT",
    "RefactorError", "RefactorState", "RewriteUndefined", "Step", "intro_field",
    "intro_schema", "intro_vc", "make_logging_schema", "merge_commands",
    "redirect_where", "replay", "rewrite_command",
]
