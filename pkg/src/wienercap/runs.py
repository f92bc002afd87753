"""Run directories, manifests and deterministic CSV/JSON writers."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__

SCHEMA_VERSION = 1
OUT_ENV = "WIENERCAP_OUT"
DEFAULT_OUT = "runs"


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def fresh_run_dir(root: Path, command: str, digest: str) -> Path:
    """``root/<command>-<hash12>-<NNN>``; never reuses an existing directory."""
    root.mkdir(parents=True, exist_ok=True)
    stem = f"{command}-{digest[:12]}"
    for i in range(1, 10_000):
        path = root / f"{stem}-{i:03d}"
        try:
            path.mkdir()
        except FileExistsError:
            continue
        return path
    raise RuntimeError(f"too many runs named {stem} in {root}")


def fmt(x: Any) -> str:
    """Round-trippable text for numbers, plain text otherwise."""
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, float):
        return repr(x)
    if hasattr(x, "item"):
        return fmt(x.item())
    return str(x)


class Run:
    """One invocation: owns a fresh directory and writes its manifest once."""

    def __init__(self, root: Path, config: dict, runtime: dict | None = None):
        self.config = config
        self.digest = config_hash(config)
        self.dir = fresh_run_dir(Path(root), config["command"], self.digest)
        self.runtime = runtime or {}
        self.timings: dict[str, float] = {}
        self.outputs: list[str] = []
        self._closed = False

    @contextmanager
    def timed(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 6)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        self.outputs.append(name)
        return path

    def write_json(self, name: str, obj: Any) -> Path:
        path = self.dir / name
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self.outputs.append(name)
        return path

    def close(self, status: str = "ok") -> Path:
        if self._closed:
            raise RuntimeError("manifest already written")
        self._closed = True
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "tool": "wienercap",
            "version": __version__,
            "config": self.config,
            "config_hash": self.digest,
            "seed": self.config.get("seed"),
            "runtime": self.runtime,
            "timings": self.timings,
            "outputs": sorted(self.outputs),
            "status": status,
        }
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def load_config(path: str | Path) -> dict:
    """Accept a bare config or a manifest (whose ``config`` is used)."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    if "schema_version" in data:
        if data["schema_version"] != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {data['schema_version']}")
        if config_hash(data["config"]) != data.get("config_hash"):
            raise ValueError("manifest hash does not match its config")
        data = data["config"]
    if "command" not in data:
        raise ValueError("config lacks a 'command' field")
    return data
