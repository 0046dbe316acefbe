"""Run traces: an append-only event log with a JSON-lines disk format.

The first line of a trace file is a header record carrying the format
version and the run's seed; every following line is one event with at least
``time``, ``seq`` and ``kind``.  Event payloads are already JSON-shaped when
recorded, so serialization is a straight dump.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

TRACE_VERSION = 1


@dataclass(slots=True)
class TraceEvent:
    time: int
    seq: int
    kind: str
    node: int | None
    data: dict

    def to_json(self) -> str:
        rec = {"time": self.time, "seq": self.seq, "kind": self.kind}
        if self.node is not None:
            rec["node"] = self.node
        rec.update(self.data)
        return json.dumps(rec, sort_keys=True, separators=(",", ":"))


class Trace:
    def __init__(self, seed: int = 0, meta: dict | None = None):
        self.seed = seed
        self.meta = meta or {}
        self.events: list[TraceEvent] = []
        self._seq = 0

    def append(self, time: int, kind: str, node: int | None = None, **data) -> TraceEvent:
        ev = TraceEvent(time, self._seq, kind, node, data)
        self._seq += 1
        self.events.append(ev)
        return ev

    def iter_kind(self, kind: str):
        return (ev for ev in self.events if ev.kind == kind)

    # -- derived views used by the checkers ---------------------------------

    def ab_outputs(self) -> dict[int, list[TraceEvent]]:
        """Per-node totally ordered delivery events, in trace order."""
        out: dict[int, list[TraceEvent]] = {}
        for ev in self.iter_kind("ab_output"):
            out.setdefault(ev.node, []).append(ev)
        return out

    def sub_outputs(self) -> dict[tuple[int, str], TraceEvent]:
        """(node, instance) -> output event; write-once by construction."""
        return {(ev.node, ev.data["instance"]): ev for ev in self.iter_kind("sub_output")}

    def sub_inputs(self) -> dict[tuple[int, str], TraceEvent]:
        return {(ev.node, ev.data["instance"]): ev for ev in self.iter_kind("sub_input")}

    def advances(self) -> dict[int, list[TraceEvent]]:
        adv: dict[int, list[TraceEvent]] = {}
        for ev in self.iter_kind("advance"):
            adv.setdefault(ev.node, []).append(ev)
        return adv

    def current_round_at(self, node: int, when: int) -> int:
        """The node's round counter after all events at `when` are in."""
        best = 0
        for ev in self.iter_kind("advance"):
            if ev.node == node and ev.time <= when:
                best = max(best, ev.data["round"])
        return best

    # -- (de)serialization ---------------------------------------------------

    def to_jsonl(self) -> str:
        header = json.dumps({"kind": "trace_header", "version": TRACE_VERSION,
                             "seed": self.seed, **self.meta},
                            sort_keys=True, separators=(",", ":"))
        return "\n".join([header] + [ev.to_json() for ev in self.events]) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty trace")
        header = json.loads(lines[0])
        if header.get("kind") != "trace_header":
            raise ValueError("trace file lacks a header line")
        if header.get("version") != TRACE_VERSION:
            raise ValueError(f"unsupported trace version {header.get('version')}")
        meta = {k: v for k, v in header.items()
                if k not in ("kind", "version", "seed")}
        trace = cls(seed=header.get("seed", 0), meta=meta)
        for ln in lines[1:]:
            rec = json.loads(ln)
            time, seq = rec.pop("time"), rec.pop("seq")
            kind = rec.pop("kind")
            node = rec.pop("node", None)
            ev = TraceEvent(time, seq, kind, node, rec)
            trace.events.append(ev)
            trace._seq = max(trace._seq, seq + 1)
        return trace
