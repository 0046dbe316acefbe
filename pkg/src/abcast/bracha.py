"""Direct-send broadcast backend with echo/ready amplification.

Both machines tally distinct validator senders per value.  Thresholds, for
quorum size Q = quorum_min_size(n, f):

  RB   echo(v)   own initial from the proposer, Q echoes, or f+1 readies
       ready(v)  Q echoes or f+1 readies
       output v  2f+1 readies
  WBA  vote(b)   own input, Q votes, or f+1 readies
       ready(b)  Q votes or f+1 readies
       output b  2f+1 readies

A correct node sends at most one echo (one vote) and one ready per instance,
so the send flags are instance-global rather than per-value.  A Byzantine
sender that backs two values is counted once in each value's tally; repeats
for the same value are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .core import Params, LeaderSchedule, is_validator
from .subproto import InstanceKey, Kind, LocalInput, Recv, SendAll, Output

INITIAL = "initial"
ECHO = "echo"
READY = "ready"
VOTE = "vote"


@dataclass(frozen=True)
class BrachaMsg:
    instance: InstanceKey
    kind: str
    payload: object
    sender: int


class BrachaRb:
    """One reliable-broadcast instance at one node."""

    def __init__(self, key: InstanceKey, params: Params, proposer: int, self_id: int):
        self.key = key
        self.params = params
        self.proposer = proposer
        self.self_id = self_id
        self.initial_seen: object = None
        self.has_initial = False
        self.sent_echo = False
        self.sent_ready = False
        self.delivered = False
        self.echoes: dict[object, set[int]] = {}
        self.readies: dict[object, set[int]] = {}

    def step(self, event: object) -> list:
        if isinstance(event, LocalInput):
            if self.self_id != self.proposer:
                return []
            return [SendAll(BrachaMsg(self.key, INITIAL, event.value, self.self_id))]
        assert isinstance(event, Recv)
        msg = event.msg
        if not isinstance(msg, BrachaMsg) or msg.instance != self.key:
            return []
        if msg.kind == INITIAL:
            if msg.sender != self.proposer or self.has_initial:
                return []
            self.has_initial = True
            self.initial_seen = msg.payload
            return self._fire(msg.payload)
        if msg.kind not in (ECHO, READY) or not is_validator(msg.sender, self.params):
            return []
        tally = self.echoes if msg.kind == ECHO else self.readies
        seen = tally.setdefault(msg.payload, set())
        if msg.sender in seen:
            return []
        seen.add(msg.sender)
        return self._fire(msg.payload)

    def _fire(self, v: object) -> list:
        q = self.params.quorum
        f = self.params.f
        echoes = len(self.echoes.get(v, ()))
        readies = len(self.readies.get(v, ()))
        out = []
        if (not self.sent_echo and is_validator(self.self_id, self.params)
                and ((self.has_initial and self.initial_seen == v)
                     or echoes >= q or readies >= f + 1)):
            self.sent_echo = True
            out.append(SendAll(BrachaMsg(self.key, ECHO, v, self.self_id)))
        if (not self.sent_ready and is_validator(self.self_id, self.params)
                and (echoes >= q or readies >= f + 1)):
            self.sent_ready = True
            out.append(SendAll(BrachaMsg(self.key, READY, v, self.self_id)))
        if not self.delivered and readies >= 2 * f + 1:
            self.delivered = True
            out.append(Output(v))
        return out


class BrachaWba:
    """One binary-agreement instance at one node; vote plays echo's role."""

    def __init__(self, key: InstanceKey, params: Params, self_id: int):
        self.key = key
        self.params = params
        self.self_id = self_id
        self.sent_vote = False
        self.sent_ready = False
        self.delivered = False
        self.votes: dict[int, set[int]] = {}
        self.readies: dict[int, set[int]] = {}

    def step(self, event: object) -> list:
        if isinstance(event, LocalInput):
            b = event.value
            if b not in (0, 1) or not is_validator(self.self_id, self.params):
                return []
            return self._fire(b, own_input=True)
        assert isinstance(event, Recv)
        msg = event.msg
        if not isinstance(msg, BrachaMsg) or msg.instance != self.key:
            return []
        if (msg.kind not in (VOTE, READY) or msg.payload not in (0, 1)
                or not is_validator(msg.sender, self.params)):
            return []
        tally = self.votes if msg.kind == VOTE else self.readies
        seen = tally.setdefault(msg.payload, set())
        if msg.sender in seen:
            return []
        seen.add(msg.sender)
        return self._fire(msg.payload)

    def _fire(self, b: int, own_input: bool = False) -> list:
        q = self.params.quorum
        f = self.params.f
        votes = len(self.votes.get(b, ()))
        readies = len(self.readies.get(b, ()))
        out = []
        if (not self.sent_vote and is_validator(self.self_id, self.params)
                and (own_input or votes >= q or readies >= f + 1)):
            self.sent_vote = True
            out.append(SendAll(BrachaMsg(self.key, VOTE, b, self.self_id)))
        if (not self.sent_ready and is_validator(self.self_id, self.params)
                and (votes >= q or readies >= f + 1)):
            self.sent_ready = True
            out.append(SendAll(BrachaMsg(self.key, READY, b, self.self_id)))
        if not self.delivered and readies >= 2 * f + 1:
            self.delivered = True
            out.append(Output(b))
        return out


def machine_factory(params: Params, schedule: LeaderSchedule,
                    self_id: int) -> Callable[[InstanceKey], object]:
    def make(key: InstanceKey):
        if key.kind is Kind.RB:
            return BrachaRb(key, params, schedule.leader_of(key.round), self_id)
        return BrachaWba(key, params, self_id)
    return make
