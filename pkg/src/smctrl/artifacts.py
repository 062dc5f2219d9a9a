# -*- coding: utf-8 -*-
"""Output files and the run manifests written next to them. See README.md."""

import csv
import hashlib
import json
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from smctrl.config import config_hash
from smctrl.schemas import EstimateDocument, RunManifestDocument

PathLike = Union[str, Path]


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def versions() -> Dict[str, str]:
    """Interpreter and library versions recorded in manifests."""
    found = {"python": platform.python_version()}
    for name in ("smctrl", "numpy", "scipy", "pydantic"):
        try:
            found[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            found[name] = "unknown"
    return found


def manifest_path(output: PathLike) -> Path:
    output = Path(output)
    return output.with_name(f"{output.name}.manifest.json")


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_manifest(
    output: PathLike,
    subcommand: str,
    arguments: Dict[str, Any],
    inputs: Sequence[PathLike] = (),
    seed: Optional[int] = None,
) -> Path:
    """Write `<output>.manifest.json` with input hashes, seed, versions and the config hash."""
    doc = RunManifestDocument(
        subcommand=subcommand,
        arguments=arguments,
        inputs={str(p): sha256_file(p) for p in inputs},
        outputs=[str(output)],
        seed=seed,
        versions=versions(),
        config_hash=config_hash({"subcommand": subcommand, **arguments}),
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    return write_json(manifest_path(output), doc.model_dump())


def write_rows_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write a CSV table; floats use repr so values round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
            count += 1
    return count


def write_estimate(path: PathLike, estimates: List[Dict[str, Any]], seed: int, arguments: Dict[str, Any]) -> Path:
    """estimate.json: a single estimate object, or a list when several methods ran."""
    digest = config_hash(arguments)
    docs = [
        EstimateDocument(**{**e, "seed": seed, "config_hash": digest}).model_dump() for e in estimates
    ]
    payload: Any = docs[0] if len(docs) == 1 else {"estimates": docs, "config_hash": digest}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
