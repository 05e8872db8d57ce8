from __future__ import annotations

import json

import pytest

from intermittency_lab.errors import ValidationError
from intermittency_lab.records import RunRecord, config_hash, load_record, summarize


def _rec(name="demo", x=1, verdict="pass"):
    return RunRecord(name, {"x": x}, 0, verdict, {"score": 0.5, "ok": True})


def test_hash_depends_on_config_only():
    assert _rec().hash == _rec(verdict="fail").hash
    assert _rec(x=2).hash != _rec().hash
    assert config_hash("a", {"k": 1}) != config_hash("b", {"k": 1})


def test_bad_verdict():
    with pytest.raises(ValidationError):
        _rec(verdict="maybe")


def test_save_load_and_tamper(tmp_path):
    path = _rec().save(tmp_path)
    assert path == tmp_path / "demo" / f"{_rec().hash}.json"
    assert load_record(path)["evidence"]["score"] == 0.5
    doc = json.loads(path.read_text())
    doc["evidence"]["score"] = 0.9
    path.write_text(json.dumps(doc))
    with pytest.raises(ValidationError):
        load_record(path)


def test_summary_sorted_and_corrupt(tmp_path):
    assert summarize(tmp_path) == ([], True)
    a, b = _rec(x=1).save(tmp_path), _rec(x=2).save(tmp_path)
    lines, ok = summarize(tmp_path)
    assert ok and len(lines) == 2
    assert [l.split("\t")[0] for l in lines] == sorted(p.stem for p in (a, b))
    a.write_text("{")
    lines, ok = summarize(tmp_path)
    assert not ok and any("corrupt" in l for l in lines)
