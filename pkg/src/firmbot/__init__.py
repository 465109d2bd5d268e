"""firmbot: a self-hosted retrieval-based dialogue engine for law-firm bots."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def fixture_path(name: str = "") -> Path:
    """Path to a bundled fixture file (or the fixture directory)."""
    base = resources.files(__name__) / "fixture"
    return Path(str(base / name if name else base))
