"""Run-directory persistence: atomic artifact writes, status markers, resume.

Every artifact embeds the config fingerprint and master seed — JSON files at
the top level, JSONL files via a leading header line. Writes go through a
temp file plus rename so interrupted runs never leave half-written artifacts,
and resume only ever consumes completed phases.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

CONFIG_JSON = "config.json"
STATUS_JSON = "status.json"
SEEDS_JSON = "adversarial_seeds.json"
FAILURE_MODES_JSON = "failure_modes.json"
PHASE1_LOG = "phase1_log.jsonl"
PHASE2_LOG = "phase2_log.jsonl"
REPORT_JSON = "report.json"
METRICS_SAMPLES = "metrics_samples.jsonl"
REPORT_CSV = "report.csv"
PHASE1_TRACE_CSV = "phase1_trace.csv"
PHASE2_TRACE_CSV = "phase2_trace.csv"
ADVERSARY_SET = "adversary_set.jsonl"
CURRICULUM_REPORT = "curriculum_report.json"

_STATUS_FLAGS = ("phase1_done", "phase2_done", "metrics_done")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl_file(path: str | Path, header: dict, records: list[dict]) -> None:
    """Header-then-records JSONL at an arbitrary path (atomic)."""
    lines = [json.dumps({"type": "header", **header}, sort_keys=True)]
    lines.extend(json.dumps(rec, sort_keys=True) for rec in records)
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


class RunDirectory:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    def file(self, name: str) -> Path:
        return self.path / name

    def exists(self, name: str) -> bool:
        return self.file(name).is_file()

    # -- json ----------------------------------------------------------

    def write_json(self, name: str, payload: dict) -> None:
        _atomic_write_text(self.file(name), json.dumps(payload, sort_keys=True, indent=1) + "\n")

    def read_json(self, name: str) -> dict:
        with open(self.file(name), encoding="utf-8") as fh:
            return json.load(fh)

    # -- jsonl ----------------------------------------------------------

    def write_jsonl(self, name: str, header: dict, records: list[dict]) -> None:
        write_jsonl_file(self.file(name), header, records)

    def read_jsonl(self, name: str) -> tuple[dict, list[dict]]:
        header: dict = {}
        records: list[dict] = []
        with open(self.file(name), encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if i == 0 and obj.get("type") == "header":
                    header = obj
                else:
                    records.append(obj)
        return header, records

    # -- csv --------------------------------------------------------------

    def write_csv(self, name: str, columns: list[str], rows: list[list]) -> None:
        def cell(v) -> str:
            if v is None:
                return ""
            if isinstance(v, bool):
                return "true" if v else "false"
            return repr(v) if isinstance(v, float) else str(v)

        lines = [",".join(columns)]
        lines.extend(",".join(cell(v) for v in row) for row in rows)
        _atomic_write_text(self.file(name), "\n".join(lines) + "\n")

    # -- status -----------------------------------------------------------

    def status(self) -> dict:
        if not self.exists(STATUS_JSON):
            return {flag: False for flag in _STATUS_FLAGS}
        stored = self.read_json(STATUS_JSON)
        return {flag: bool(stored.get(flag, False)) for flag in _STATUS_FLAGS}

    def mark(self, flag: str, header: dict | None = None) -> None:
        if flag not in _STATUS_FLAGS:
            raise ValueError(f"unknown status flag {flag!r}")
        stored = self.read_json(STATUS_JSON) if self.exists(STATUS_JSON) else {}
        stored.update(header or {})
        stored.update(self.status())
        stored[flag] = True
        self.write_json(STATUS_JSON, stored)
