"""Detect serializability anomalies in small database programs and repair
them by refactoring the schema."""
from importlib import resources

__version__ = "0.1.0"


def bundled(name: str) -> str:
    """Text of a file shipped in the package's ``data`` directory."""
    return resources.files(__name__).joinpath("data", name).read_text(encoding="utf-8")
