"""Seeded, hashed, persisted experiment results."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .observables import TimeAverageSeries

VERDICTS = ("pass", "fail", "inconclusive")
# excluded from the integrity digest and from reproducibility comparisons
VOLATILE = ("wall_time", "record_digest")


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    return obj


def canonical(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(name: str, config: dict) -> str:
    return hashlib.sha256(canonical({"name": name, "config": config}).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    name: str
    config: dict
    seed: int
    verdict: str
    evidence: dict
    outputs: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    wall_time: float = 0.0
    code_version: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValidationError(f"verdict must be one of {VERDICTS}")

    @property
    def hash(self) -> str:
        return config_hash(self.name, self.config)

    def body(self) -> dict:
        return jsonable({
            "name": self.name,
            "config": self.config,
            "seed": self.seed,
            "config_hash": self.hash,
            "verdict": self.verdict,
            "evidence": self.evidence,
            "outputs": self.outputs,
            "series": {k: f"{self.hash}.{k}.csv" for k in sorted(self.series)},
            "code_version": self.code_version,
        })

    def to_json(self) -> str:
        doc = self.body()
        doc["record_digest"] = hashlib.sha256(canonical(doc).encode()).hexdigest()
        doc["wall_time"] = round(float(self.wall_time), 6)
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def save(self, root) -> Path:
        """Write ``root/<name>/<hash>.json`` plus sibling series CSVs, each atomically."""
        folder = Path(root) / self.name
        folder.mkdir(parents=True, exist_ok=True)
        for key, s in sorted(self.series.items()):
            _atomic_write(folder / f"{self.hash}.{key}.csv", _series_text(s))
        path = folder / f"{self.hash}.json"
        _atomic_write(path, self.to_json())
        return path


def _series_text(s: TimeAverageSeries) -> str:
    import io

    buf = io.StringIO()
    s.to_csv(buf)
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_record(path) -> dict:
    """Parse and integrity-check a persisted record; raises ValidationError when corrupt."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"unreadable record: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("record is not a JSON object")
    required = ("name", "config", "seed", "config_hash", "verdict", "evidence", "record_digest")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ValidationError(f"record lacks {missing}")
    body = {k: v for k, v in doc.items() if k not in VOLATILE}
    if hashlib.sha256(canonical(body).encode()).hexdigest() != doc["record_digest"]:
        raise ValidationError("record digest mismatch")
    if config_hash(doc["name"], doc["config"]) != doc["config_hash"]:
        raise ValidationError("config hash mismatch")
    if doc["verdict"] not in VERDICTS:
        raise ValidationError("unknown verdict")
    return doc


def summarize(run_dir) -> tuple[list[str], bool]:
    """One line per record, ordered by hash; second value is False if any is corrupt."""
    root = Path(run_dir)
    if not root.exists():
        raise ValidationError(f"no such run directory {run_dir}")
    rows, ok = [], True
    for path in sorted(root.rglob("*.json")):
        try:
            doc = load_record(path)
        except ValidationError as exc:
            ok = False
            rows.append((path.stem, f"{path.stem}\t{path.parent.name}\tcorrupt\t{exc}"))
            continue
        key = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(doc["evidence"].items())
                        if isinstance(v, (int, float, bool)) and not isinstance(v, list))
        rows.append((doc["config_hash"], f"{doc['config_hash']}\t{doc['name']}\t{doc['verdict']}\t{key}"))
    rows.sort(key=lambda r: r[0])
    return [r[1] for r in rows], ok


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
