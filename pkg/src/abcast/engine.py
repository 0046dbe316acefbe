"""Round engine: turns per-round broadcast + binary agreement into a totally
ordered output sequence.

Each round r has one RB instance (the round's leader proposes a value plus a
parent round) and one WBA instance (commit the round, 1, or skip it, 0).  A
node finalizes round r's proposal, and transitively its ancestors, once r is
accepted in its view and WBA[r] = 1.  The single timer per node runs for
twice the assumed subprotocol delay; on expiry the node votes to skip the
round it is currently waiting on.

Definitions used throughout, all evaluated against this node's current view:

  skippable(r)      WBA[r] output 0
  fertile(r, s)     s may serve as round r's parent: for s = None every
                    round below r is skippable; for a numeric s, s < r,
                    every round strictly between is skippable, and s has an
                    accepted value
  accepted(r)       RB[r]'s output (v, s) such that fertile(r, s) holds
                    (and, when a validity predicate is configured, it passes
                    over the ancestor chain)

A value may appear twice on one chain: a leader whose only buffered value
already rides an undecided ancestor re-proposes it to drag that ancestor to
commitment.  Finalization outputs each value once, so delivered sequences
stay duplicate free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .core import InternalInvariantError, Params, LeaderSchedule
from .subproto import InstanceKey, Kind


@dataclass(frozen=True)
class Proposal:
    """An RB payload: a value and the round it chains from (None = genesis)."""

    value: object
    parent: int | None
    ts: int | None = None


# Actions handed back to the hosting node.

@dataclass(frozen=True)
class RestartTimer:
    delay: int


@dataclass(frozen=True)
class InputRb:
    round: int
    proposal: Proposal


@dataclass(frozen=True)
class InputWba:
    round: int
    bit: int


@dataclass(frozen=True)
class DeliverOutput:
    value: object


@dataclass(frozen=True)
class Wake:
    """Ask to be poked at an absolute time; used only by the delay gates."""

    at: int


ValidityPredicate = Callable[[Proposal, tuple[Proposal, ...]], bool]


def no_duplicate_ancestor(proposal: Proposal, ancestors: tuple[Proposal, ...]) -> bool:
    return all(proposal.value != a.value for a in ancestors)


@dataclass
class EngineOptions:
    queue_discipline: str = "fifo"          # or "lifo"
    spam_window: int = 100
    # Extra acceptance gate.  Off by default: a predicate that rejects
    # re-proposals can wedge the whole network once an undecided round pins
    # the fertile frontier above a value it carries.
    validity: Optional[ValidityPredicate] = None
    start_time: int | None = None           # gates, both disabled by default
    min_parent_delay: int | None = None

    def __post_init__(self) -> None:
        if self.queue_discipline not in ("fifo", "lifo"):
            raise ValueError(f"unknown queue discipline {self.queue_discipline!r}")


class Engine:
    """Per-node round engine.

    `view` is anything exposing rb_output(r), wba_output(r),
    input_made(key) and rb_rounds_with_output(), normally the node's
    InstanceTable.  Handlers return (actions, notes); notes are trace
    breadcrumbs like ("advance", r) or ("ab_output", value, r).
    """

    def __init__(self, params: Params, schedule: LeaderSchedule, self_id: int,
                 options: EngineOptions, view,
                 initial_inputs: tuple = ()):
        self.params = params
        self.schedule = schedule
        self.self_id = self_id
        self.options = options
        self.view = view
        self.current = 0
        self.undecided_round = 0
        self.inputs: list = list(initial_inputs)
        self.output_log: list = []
        self._output_set: set = set()
        self._proposed_rounds: set[int] = set()

    @property
    def timer_delay(self) -> int:
        return 2 * self.params.sub_delay

    # -- handlers ----------------------------------------------------------

    def start(self, now: int):
        actions, notes = self._conditions(now)
        return [RestartTimer(self.timer_delay)] + actions, notes

    def on_input(self, value: object) -> None:
        """Enqueue a value; the conditions run on the next timer/output."""
        if value in self._output_set:
            return
        if self.options.queue_discipline == "lifo":
            self.inputs.insert(0, value)
        else:
            self.inputs.append(value)

    def on_timeout(self, now: int):
        actions = []
        key = InstanceKey(Kind.WBA, self.current)
        if not self.view.input_made(key):
            actions.append(InputWba(self.current, 0))
        more, notes = self._conditions(now)
        return actions + more, notes

    def on_subproto_output(self, now: int):
        return self._conditions(now)

    # -- derived predicates -------------------------------------------------

    def _skippable(self, r: int) -> bool:
        return self.view.wba_output(r) == 0

    def fertile(self, r: int, parent: int | None, memo: dict | None = None) -> bool:
        if memo is None:
            memo = {}
        if parent is None:
            return all(self._skippable(t) for t in range(r))
        if not 0 <= parent < r:
            return False
        if not all(self._skippable(u) for u in range(parent + 1, r)):
            return False
        return self.accepted(parent, memo) is not None

    def accepted(self, r: int, memo: dict | None = None) -> Proposal | None:
        """RB[r]'s output if it is fertile and valid in this view, else None."""
        if memo is None:
            memo = {}
        if r in memo:
            return memo[r]
        memo[r] = None          # cuts accidental cycles; rounds only decrease
        prop = self.view.rb_output(r)
        if prop is None or not self.fertile(r, prop.parent, memo):
            return None
        if self.options.validity is not None:
            if not self.options.validity(prop, self._ancestors(prop)):
                return None
        memo[r] = prop
        return prop

    def _ancestors(self, prop: Proposal) -> tuple[Proposal, ...]:
        chain = []
        p = prop.parent
        while p is not None:
            ap = self.view.rb_output(p)
            if ap is None:
                raise InternalInvariantError(f"fertile parent {p} lacks an RB output")
            chain.append(ap)
            p = ap.parent
        return tuple(chain)

    # -- finalization --------------------------------------------------------

    def finalize_chain(self, r: int) -> list:
        """Deliver round r's value and any undecided ancestors, lowest first.

        Mutates the output log and removes delivered values from the input
        buffer; the caller is responsible for bumping undecided_round.
        """
        return [value for value, _ in self._finalize_pairs(r)]

    def _finalize_pairs(self, r: int) -> list[tuple[object, int]]:
        pairs: list[tuple[object, int]] = []

        def walk(rr: int) -> None:
            prop = self.view.rb_output(rr)
            if prop is None:
                raise InternalInvariantError(f"finalizing round {rr} without an RB output")
            if prop.parent is not None and prop.parent >= self.undecided_round:
                walk(prop.parent)
            pairs.append((prop.value, rr))

        walk(r)
        delivered: list[tuple[object, int]] = []
        for value, rr in pairs:
            if value in self.inputs:
                self.inputs.remove(value)
            if value in self._output_set:
                continue
            self.output_log.append(value)
            self._output_set.add(value)
            delivered.append((value, rr))
        return delivered

    # -- the condition fixpoint ----------------------------------------------

    def _advance_gate(self, now: int, memo: dict) -> tuple[bool, int | None]:
        """Optional minimum-delay gates; open unless configured."""
        wake = None
        opts = self.options
        if opts.start_time is not None and now < opts.start_time:
            wake = opts.start_time
        if opts.min_parent_delay is not None:
            newest = None
            for r in self.view.rb_rounds_with_output():
                prop = self.accepted(r, memo)
                if prop is not None and prop.ts is not None:
                    newest = prop.ts if newest is None else max(newest, prop.ts)
            if newest is not None and now < newest + opts.min_parent_delay:
                t = newest + opts.min_parent_delay
                wake = t if wake is None else max(wake, t)
        return wake is None, wake

    def _pick_proposal(self, r: int, now: int, memo: dict) -> Proposal | None:
        """Head of the buffer under the highest fertile parent.

        A configured validity predicate narrows the search: acceptance would
        reject anything it fails, so the leader walks lower fertile rounds and
        later buffer entries looking for a pair the predicate admits rather
        than burn its slot on a doomed proposal.
        """
        if not self.inputs:
            return None
        ts = now if self.options.min_parent_delay is not None else None
        parents: list[int | None] = [s for s in range(r - 1, -1, -1)
                                     if self.fertile(r, s, memo)]
        if self.fertile(r, None, memo):
            parents.append(None)
        if not parents:
            return None
        if self.options.validity is None:
            return Proposal(self.inputs[0], parents[0], ts)
        for parent in parents:
            if parent is None:
                chain: tuple[Proposal, ...] = ()
            else:
                parent_prop = self.accepted(parent, memo)
                assert parent_prop is not None
                chain = (parent_prop,) + self._ancestors(parent_prop)
            for value in self.inputs:
                cand = Proposal(value, parent, ts)
                if self.options.validity(cand, chain):
                    return cand
        return None

    def _conditions(self, now: int):
        actions: list = []
        notes: list = []
        wba_emitted: set[int] = set()
        progress = True
        while progress:
            progress = False
            memo: dict = {}

            # 1. move past rounds that have an RB output or were skipped
            while (self.view.rb_output(self.current) is not None
                   or self._skippable(self.current)):
                ok, wake = self._advance_gate(now, memo)
                if not ok:
                    if wake is not None and Wake(wake) not in actions:
                        actions.append(Wake(wake))
                    break
                self.current += 1
                actions.append(RestartTimer(self.timer_delay))
                notes.append(("advance", self.current))
                progress = True

            # 2. propose when leading the current round
            r = self.current
            if (self.schedule.leader_of(r) == self.self_id
                    and r not in self._proposed_rounds
                    and not self.view.input_made(InstanceKey(Kind.RB, r))):
                prop = self._pick_proposal(r, now, memo)
                if prop is not None:
                    self._proposed_rounds.add(r)
                    actions.append(InputRb(r, prop))
                    notes.append(("propose", r, prop))

            # 3. vote to commit every accepted round
            for s in self.view.rb_rounds_with_output():
                if s in wba_emitted or self.view.input_made(InstanceKey(Kind.WBA, s)):
                    continue
                if self.accepted(s, memo) is not None:
                    wba_emitted.add(s)
                    actions.append(InputWba(s, 1))

            # 4. finalize the lowest committed, accepted, undecided round
            for s in self.view.rb_rounds_with_output():
                if s < self.undecided_round or self.view.wba_output(s) != 1:
                    continue
                if self.accepted(s, memo) is None:
                    continue
                for value, rr in self._finalize_pairs(s):
                    actions.append(DeliverOutput(value))
                    notes.append(("ab_output", value, rr))
                notes.append(("finalize", s))
                self.undecided_round = s + 1
                progress = True
                break

        return actions, notes
