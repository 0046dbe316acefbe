"""Subprotocol instance plumbing shared by both broadcast backends.

A node runs one reliable-broadcast (RB) and one binary-agreement (WBA)
instance per round, created lazily.  The InstanceTable enforces the
write-once rules: at most one local input per instance, RB inputs only from
the designated proposer, WBA inputs only from validators, and a single
immutable output per instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

from .core import InternalInvariantError, Params, LeaderSchedule, is_validator


class Kind(str, Enum):
    RB = "rb"
    WBA = "wba"


@dataclass(frozen=True)
class InstanceKey:
    kind: Kind
    round: int

    def __str__(self) -> str:
        return f"{self.kind.value}/{self.round}"


def parse_key(text: str) -> InstanceKey:
    kind, _, rnd = text.partition("/")
    return InstanceKey(Kind(kind), int(rnd))


# Events fed to a backend state machine.

@dataclass(frozen=True)
class LocalInput:
    value: object


@dataclass(frozen=True)
class Recv:
    msg: object


# Actions a backend may emit.

@dataclass(frozen=True)
class SendAll:
    """Direct-send `msg` to every node, the sender included."""

    msg: object


@dataclass(frozen=True)
class GossipSend:
    """Flood `msg` through the gossip layer."""

    msg: object


@dataclass(frozen=True)
class Output:
    value: object


class Machine(Protocol):
    def step(self, event: object) -> list: ...


@dataclass
class _Slot:
    machine: Machine
    input_made: bool = False
    has_output: bool = False
    output: object = None


class InstanceTable:
    """Per-node registry of live subprotocol instances."""

    def __init__(self, params: Params, schedule: LeaderSchedule, self_id: int,
                 factory: Callable[[InstanceKey], Machine]):
        self.params = params
        self.schedule = schedule
        self.self_id = self_id
        self._factory = factory
        self._slots: dict[InstanceKey, _Slot] = {}

    def slot(self, key: InstanceKey) -> _Slot:
        s = self._slots.get(key)
        if s is None:
            s = _Slot(self._factory(key))
            self._slots[key] = s
        return s

    def input_made(self, key: InstanceKey) -> bool:
        s = self._slots.get(key)
        return s.input_made if s else False

    def submit_input(self, key: InstanceKey, value: object) -> list:
        """Feed a local input to an instance, once.

        Repeat inputs, RB inputs from anyone but the round's proposer, and
        WBA inputs from non-validators are ignored without side effects.
        """
        s = self.slot(key)
        if s.input_made:
            return []
        if key.kind is Kind.RB and self.schedule.leader_of(key.round) != self.self_id:
            return []
        if key.kind is Kind.WBA and not is_validator(self.self_id, self.params):
            return []
        s.input_made = True
        return s.machine.step(LocalInput(value))

    def record_output(self, key: InstanceKey, value: object) -> bool:
        """Store an instance's output; True only the first time.

        A conflicting second output would mean a backend broke its own
        write-once rule, so it raises instead of being smoothed over.
        """
        s = self.slot(key)
        if s.has_output:
            if s.output != value:
                raise InternalInvariantError(
                    f"{key} produced conflicting outputs {s.output!r} and {value!r}")
            return False
        s.has_output = True
        s.output = value
        return True

    def rb_output(self, rnd: int):
        s = self._slots.get(InstanceKey(Kind.RB, rnd))
        return s.output if s and s.has_output else None

    def wba_output(self, rnd: int):
        s = self._slots.get(InstanceKey(Kind.WBA, rnd))
        return s.output if s and s.has_output else None

    def rb_rounds_with_output(self) -> list[int]:
        return sorted(k.round for k, s in self._slots.items()
                      if k.kind is Kind.RB and s.has_output)
