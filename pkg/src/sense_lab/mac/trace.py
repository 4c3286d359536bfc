"""Frame trace with JSON-lines export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import FormatError
from ..io import atomic_write_text

FRAME_KINDS = (
    "Poll",
    "PollResponse",
    "SensingNDPA",
    "NDP_SI2SR",
    "NDP_SR2SI",
    "SensingTrigger",
    "ReportTrigger",
    "Report",
    "VariationReport",
    "BRP",
    "SyncPpdu",
    "Beacon",
    "SSW",
    "InfoRequest",
    "InfoResponse",
    "SbpRequest",
    "SbpResponse",
    "SbpReport",
    "Terminate",
)

BROADCAST = "broadcast"


@dataclass(frozen=True)
class TraceEntry:
    t_ns: int
    frame: str
    src: int
    dst: object
    exchange_id: int | None
    session_id: int | None
    dur_ns: int = 0
    tags: dict = field(default_factory=dict)

    @property
    def t(self) -> float:
        return self.t_ns / 1e9

    @property
    def end_ns(self) -> int:
        return self.t_ns + self.dur_ns

    def to_json(self) -> str:
        obj = {
            "t": self.t,
            "t_ns": self.t_ns,
            "frame": self.frame,
            "src": self.src,
            "dst": self.dst,
            "exchange_id": self.exchange_id,
            "session_id": self.session_id,
            "tags": dict(self.tags, dur_ns=self.dur_ns),
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class EventTrace:
    entries: list = field(default_factory=list)

    def append(self, entry: TraceEntry) -> None:
        if entry.frame not in FRAME_KINDS:
            raise FormatError(f"unknown frame kind {entry.frame!r}")
        self.entries.append(entry)

    def extend(self, other: "EventTrace") -> None:
        self.entries.extend(other.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def frames(self) -> list[str]:
        return [e.frame for e in self.entries]

    def gaps_ns(self) -> list[int]:
        """Idle time between the end of each frame and the start of the next."""
        return [b.t_ns - a.end_ns for a, b in zip(self.entries, self.entries[1:])]

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.entries)

    def write_jsonl(self, path: str | Path) -> Path:
        return atomic_write_text(path, self.to_jsonl())


def read_jsonl(path: str | Path) -> EventTrace:
    out = EventTrace()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        tags = dict(d.get("tags", {}))
        dur = int(tags.pop("dur_ns", 0))
        out.append(TraceEntry(int(d["t_ns"]), d["frame"], d["src"], d["dst"], d["exchange_id"], d["session_id"], dur, tags))
    return out
