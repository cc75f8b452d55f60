"""Exploration bounds shared by the interpreter, detector and refinement checker."""
from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional, Tuple

ENV_VAR = "ATROFORGE_BOUNDS"


class BoundsError(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    instances: int = 2
    key_domain: int = 2
    args: Tuple[int, ...] = (0, 1)
    max_views_per_step: int = 8
    max_steps: int = 64
    schedule_cap: int = 20000
    # per-schema key-domain overrides, e.g. domain.STUDENT=3
    domains: Tuple[Tuple[str, int], ...] = ()

    def __post_init__(self):
        for name in ("instances", "key_domain", "max_views_per_step", "max_steps", "schedule_cap"):
            if getattr(self, name) < 1:
                raise BoundsError(f"bound '{name}' must be positive")
        if not self.args:
            raise BoundsError("argument domain is empty")

    def domain_for(self, schema) -> int:
        over = dict(self.domains)
        if schema.name in over:
            return over[schema.name]
        if schema.key_domain is not None:
            return schema.key_domain
        return self.key_domain

    def with_domains(self, extra: Dict[str, int]) -> "Bounds":
        merged = dict(self.domains)
        merged.update(extra)
        return replace(self, domains=tuple(sorted(merged.items())))

    def to_json(self) -> dict:
        return {
            "instances": self.instances,
            "key_domain": self.key_domain,
            "args": list(self.args),
            "max_views_per_step": self.max_views_per_step,
            "max_steps": self.max_steps,
            "schedule_cap": self.schedule_cap,
            "domains": {k: v for k, v in self.domains},
        }

    def __str__(self):
        parts = [f"instances={self.instances}", f"key_domain={self.key_domain}",
                 f"args={_args_str(self.args)}", f"max_views_per_step={self.max_views_per_step}",
                 f"max_steps={self.max_steps}", f"schedule_cap={self.schedule_cap}"]
        parts += [f"domain.{k}={v}" for k, v in self.domains]
        return ",".join(parts)


def _args_str(args):
    lo, hi = min(args), max(args)
    if list(args) == list(range(lo, hi + 1)):
        return f"{lo}..{hi}"
    return "|".join(map(str, args))


def _parse_args(text: str) -> Tuple[int, ...]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise BoundsError(f"empty argument range '{text}'")
        return tuple(range(lo, hi + 1))
    return tuple(int(x) for x in text.split("|"))


_INT_KEYS = {f.name for f in fields(Bounds)} - {"args", "domains"}


def parse_bounds(text: Optional[str], base: Optional[Bounds] = None) -> Bounds:
    """Parse ``k=v[,k=v...]`` on top of ``base`` (defaults if None).

    Keys are the field names of ``Bounds``; ``args`` takes ``lo..hi`` or
    ``a|b|c``; ``domain.NAME=n`` overrides one schema's key domain.
    """
    b = base or Bounds()
    if not text:
        return b
    updates, domains = {}, {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise BoundsError(f"malformed bound '{item}' (expected key=value)")
        key, value = (s.strip() for s in item.split("=", 1))
        try:
            if key == "args":
                updates["args"] = _parse_args(value)
            elif key.startswith("domain."):
                domains[key[len("domain."):]] = int(value)
            elif key in _INT_KEYS:
                updates[key] = int(value)
            else:
                raise BoundsError(f"unknown bound '{key}'")
        except ValueError as exc:
            if isinstance(exc, BoundsError):
                raise
            raise BoundsError(f"bad value for bound '{key}': {value!r}") from None
    b = replace(b, **updates)
    return b.with_domains(domains) if domains else b


def bounds_from_env(text: Optional[str] = None) -> Bounds:
    """Defaults, then ``$ATROFORGE_BOUNDS``, then ``text``."""
    base = parse_bounds(os.environ.get(ENV_VAR))
    return parse_bounds(text, base)
