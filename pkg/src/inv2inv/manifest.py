"""Flat ``key = value`` manifests recording everything needed to replay a run."""

from __future__ import annotations

import platform
from collections.abc import Mapping
from pathlib import Path

from . import __version__
from .errors import FormatError
from .tensorio import file_digest

HEADER = "# inv2inv manifest"


def write_manifest(path, entries: Mapping[str, str]) -> None:
    lines = [HEADER]
    for key, value in entries.items():
        value = str(value)
        if "\n" in value or "\n" in key or "=" in key:
            raise FormatError(f"manifest entry {key!r} cannot be stored on one line")
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def run_manifest(config_items, config_hash: str, inputs: Mapping[str, Path],
                 outputs: Mapping[str, Path], timings: Mapping[str, float],
                 extra: Mapping[str, str] | None = None) -> dict[str, str]:
    """Assemble the manifest entries for one sampler run.

    Input and output files are listed by path with their SHA-256 digests so a
    replay can check that it read the same bytes and wrote the same bytes.
    """
    m = {"tool": "inv2inv", "version": __version__, "python": platform.python_version(),
         "config.hash": config_hash}
    for key, value in config_items:
        m[f"config.{key}"] = value
    for name, p in inputs.items():
        m[f"input.{name}"] = str(p)
        m[f"input.{name}.sha256"] = file_digest(p)
    for name, p in outputs.items():
        m[f"output.{name}"] = str(p)
        m[f"output.{name}.sha256"] = file_digest(p)
    for name, secs in timings.items():
        m[f"timing.{name}"] = f"{secs:.6f}"
    m.update(extra or {})
    return m


def section(manifest: Mapping[str, str], prefix: str) -> dict[str, str]:
    """Entries under ``prefix.`` with the prefix stripped (digest keys excluded)."""
    p = prefix + "."
    return {k[len(p):]: v for k, v in manifest.items()
            if k.startswith(p) and not k.endswith(".sha256")}
