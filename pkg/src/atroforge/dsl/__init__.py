"""The database-program language: AST, parser, printer and helpers."""
from .ast import *  # noqa: F401,F403
from .parser import Diagnostic, ParseError, parse_program, tokenize
from .printer import command_str, expr_str, pretty_print, where_str
from .walk import DesugarError, desugar_insert, fields_of_where

__all__ = [
    "Diagnostic", "ParseError", "parse_program", "tokenize", "pretty_print",
    "command_str", "expr_str", "where_str", "desugar_insert", "fields_of_where",
    "DesugarError",
]
