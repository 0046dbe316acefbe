"""Deterministic partial-synchrony simulator.

Time is integer ticks.  A message sent at t to another node is delivered at

    min(t + d_pre, max(t, gst) + d_post)

where d_pre is bounded by pre_gst_max_delay and d_post by the post-GST hop
bound (delta for direct sends, the relay latency for gossip hops).  Under
the "fixed" law both take their bounds; under "uniform" both are drawn from
the run's seeded RNG per (message, recipient).  A node's messages to itself
are delivered with zero delay inside the same dispatch, which is what lets
a validator count itself in its own quorum tallies.

Everything (event ordering, delay draws, gossip relays, adversary moves)
is a pure function of the run configuration and seed, so a rerun yields a
byte-identical trace.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from heapq import heappush, heappop

from .core import ConfigError, Params, LeaderSchedule, is_validator
from .subproto import (InstanceKey, Kind, InstanceTable, LocalInput, Recv,
                       SendAll, GossipSend, Output, parse_key)
from . import bracha as bracha_mod
from . import gossip as gossip_mod
from .engine import (Engine, EngineOptions, Proposal, RestartTimer, InputRb,
                     InputWba, DeliverOutput, Wake)
from .gossip import SignatureScheme, SignedMsg, make_signed
from .bracha import BrachaMsg
from .trace import Trace


# -- adversary specifications -----------------------------------------------

@dataclass
class CrashSpec:
    """Behaves correctly, then stops completely at `at`."""
    node: int
    at: int = 0


@dataclass
class SilentLeaderSpec:
    """Sends nothing, ever."""
    node: int


@dataclass
class PartitionValue:
    nodes: tuple
    value: object
    parent: object = "bot"      # "bot", "prev", or an explicit round


@dataclass
class EquivocatingProposerSpec:
    """Proposes a different (value, parent) to each recipient partition in
    every round it leads."""
    node: int
    partitions: tuple


@dataclass
class FlipVoterSpec:
    """Votes a configured bit per round (default: round parity); with
    `equivocate` it backs both bits, split across recipients."""
    node: int
    bits: dict = field(default_factory=dict)
    equivocate: bool = False


@dataclass
class ScriptedSpec:
    """Replays a fixed list of timed sends; see ScriptedDriver for the
    entry format."""
    node: int
    script: tuple = ()


@dataclass
class RunConfig:
    params: Params
    schedule: LeaderSchedule
    backend: str = "bracha"                  # or "gossip"
    digest_mode: bool = False
    seed: int = 0
    horizon: int = 1000
    pre_gst_max_delay: int = 5
    delay_law: str = "fixed"                 # or "uniform"
    gossip_relay_latency: int = 1
    extra_nodes: int = 0                     # observers beyond the n validators
    adversaries: tuple = ()
    injections: tuple = ()                   # (time, node, value)
    options: EngineOptions = field(default_factory=EngineOptions)
    mode: str = "engine"                     # "raw" runs bare instances, no engine
    raw_inputs: tuple = ()                   # (time, node, "rb/0", value)


def _encode_value(v):
    if isinstance(v, Proposal):
        return {"value": _encode_value(v.value), "parent": v.parent, "ts": v.ts}
    return v


def _encode_msg(msg) -> dict:
    if isinstance(msg, BrachaMsg):
        return {"instance": str(msg.instance), "mkind": msg.kind,
                "payload": _encode_value(msg.payload), "from": msg.sender}
    assert isinstance(msg, SignedMsg)
    return {"instance": str(msg.instance), "mkind": msg.kind,
            "payload": _encode_value(msg.payload), "from": msg.signer}


class _NodeRuntime:
    """The full correct-node stack: instance table, engine, timer, queues."""

    def __init__(self, sim: "Simulation", node: int, initial_inputs: tuple = ()):
        self.sim = sim
        self.node = node
        cfg = sim.cfg
        self.table = InstanceTable(cfg.params, cfg.schedule, node, sim.factory_for(node))
        if cfg.mode == "engine":
            self.engine = Engine(cfg.params, cfg.schedule, node, cfg.options,
                                 self.table, initial_inputs)
        else:
            self.engine = None
        self.timer_gen = 0
        self.work: deque = deque()
        self.engine_queued = False
        self.held: list = []                 # spam-window buffer, arrival order
        self.delivered: list = []            # (value, time)

    # -- entry points (each pumps to quiescence) -----------------------------

    def on_start(self, now: int) -> None:
        if self.engine is None:
            return
        acts, notes = self.engine.start(now)
        self._apply_engine(now, acts, notes)
        self._pump(now)

    def on_deliver(self, now: int, msg) -> None:
        if self.engine is not None:
            window = self.engine.current + self.sim.cfg.options.spam_window
            if msg.instance.round > window:
                self.held.append(msg)
                return
        self.work.append(("recv", msg))
        self._pump(now)

    def on_timer(self, now: int, gen: int) -> None:
        if gen != self.timer_gen:
            self.sim.trace.append(now, "timer_stale", self.node, generation=gen)
            return
        self.sim.trace.append(now, "timer_fire", self.node, generation=gen)
        self.work.append(("timeout",))
        self._pump(now)

    def on_inject(self, now: int, value) -> None:
        if self.engine is not None:
            self.engine.on_input(value)

    def on_wake(self, now: int) -> None:
        self._queue_engine_pass()
        self._pump(now)

    def on_raw_input(self, now: int, key: InstanceKey, value) -> None:
        self.work.append(("subinput", key, value))
        self._pump(now)

    # -- internals ------------------------------------------------------------

    def _queue_engine_pass(self) -> None:
        if self.engine is not None and not self.engine_queued:
            self.engine_queued = True
            self.work.append(("engine",))

    def _pump(self, now: int) -> None:
        while self.work:
            item = self.work.popleft()
            tag = item[0]
            if tag == "recv":
                msg = item[1]
                machine = self.table.slot(msg.instance).machine
                self._apply_backend(now, msg.instance, machine.step(Recv(msg)))
            elif tag == "subinput":
                _, key, value = item
                before = self.table.input_made(key)
                acts = self.table.submit_input(key, value)
                if not before and self.table.input_made(key):
                    self.sim.trace.append(now, "sub_input", self.node,
                                          instance=str(key), value=_encode_value(value))
                self._apply_backend(now, key, acts)
            elif tag == "timeout":
                acts, notes = self.engine.on_timeout(now)
                self._apply_engine(now, acts, notes)
            elif tag == "engine":
                self.engine_queued = False
                acts, notes = self.engine.on_subproto_output(now)
                self._apply_engine(now, acts, notes)

    def _apply_backend(self, now: int, key: InstanceKey, acts: list) -> None:
        for a in acts:
            if isinstance(a, SendAll):
                self.sim.trace.append(now, "send", self.node, **_encode_msg(a.msg), to="all")
                self.sim.broadcast(self.node, a.msg, now)
                self.work.append(("recv", a.msg))
            elif isinstance(a, GossipSend):
                self.sim.trace.append(now, "gossip", self.node, **_encode_msg(a.msg))
                self.sim.gossip_from(self.node, a.msg, now)
                self.work.append(("recv", a.msg))
            elif isinstance(a, Output):
                if self.table.record_output(key, a.value):
                    self.sim.trace.append(now, "sub_output", self.node,
                                          instance=str(key), value=_encode_value(a.value))
                    self._queue_engine_pass()

    def _apply_engine(self, now: int, acts: list, notes: list) -> None:
        for note in notes:
            if note[0] == "advance":
                self.sim.trace.append(now, "advance", self.node, round=note[1])
            elif note[0] == "propose":
                self.sim.trace.append(now, "propose", self.node, round=note[1],
                                      payload=_encode_value(note[2]))
            elif note[0] == "ab_output":
                self.sim.trace.append(now, "ab_output", self.node,
                                      value=_encode_value(note[1]), round=note[2],
                                      position=len(self.delivered))
                self.delivered.append((note[1], now))
            elif note[0] == "finalize":
                self.sim.trace.append(now, "finalize", self.node, round=note[1])
        for a in acts:
            if isinstance(a, RestartTimer):
                self.timer_gen += 1
                self.sim.set_timer(self.node, self.timer_gen, now + a.delay, now)
            elif isinstance(a, InputRb):
                self.work.append(("subinput", InstanceKey(Kind.RB, a.round), a.proposal))
            elif isinstance(a, InputWba):
                self.work.append(("subinput", InstanceKey(Kind.WBA, a.round), a.bit))
            elif isinstance(a, DeliverOutput):
                pass                         # the ab_output note already recorded it
            elif isinstance(a, Wake):
                self.sim.set_wake(self.node, a.at)
        if self.held and self.engine is not None:
            window = self.engine.current + self.sim.cfg.options.spam_window
            ready = [m for m in self.held if m.instance.round <= window]
            if ready:
                self.held = [m for m in self.held if m.instance.round > window]
                for m in ready:
                    self.work.append(("recv", m))


class AdversaryApi:
    """What a faulty node's driver may do at one dispatch."""

    def __init__(self, sim: "Simulation", node: int, now: int):
        self.sim = sim
        self.node = node
        self.now = now
        self.params = sim.cfg.params
        self.schedule = sim.cfg.schedule

    def leader_of(self, rnd: int) -> int:
        return self.schedule.leader_of(rnd)

    def send(self, to: int, msg) -> None:
        self.sim.trace.append(self.now, "send", self.node, **_encode_msg(msg), to=[to])
        self.sim.schedule_direct(to, msg, self.now)

    def send_all(self, msg) -> None:
        self.sim.trace.append(self.now, "send", self.node, **_encode_msg(msg), to="all")
        self.sim.broadcast(self.node, msg, self.now)

    def gossip(self, msg, targets=None) -> None:
        self.sim.trace.append(self.now, "gossip", self.node, **_encode_msg(msg))
        self.sim.gossip_from(self.node, msg, self.now, targets)

    def signed(self, instance: InstanceKey, kind: str, payload) -> SignedMsg:
        # Drivers can only produce signatures for their own identity.
        return make_signed(self.sim.scheme, self.node, instance, kind, payload)


class Driver:
    def __init__(self, node: int):
        self.node = node

    def on_start(self, api: AdversaryApi) -> None: ...
    def on_deliver(self, api: AdversaryApi, msg) -> None: ...
    def on_script(self, api: AdversaryApi, entry: dict) -> None: ...


class SilentLeaderDriver(Driver):
    pass


class EquivocatingProposerDriver(Driver):
    def __init__(self, spec: EquivocatingProposerSpec, backend: str):
        super().__init__(spec.node)
        self.spec = spec
        self.backend = backend
        self.done: set[int] = set()

    def on_start(self, api: AdversaryApi) -> None:
        period = len(api.schedule.order) if api.schedule.order else api.params.n
        for r in range(period):
            if api.leader_of(r) == self.node:
                self._equivocate(api, r)
                break

    def on_deliver(self, api: AdversaryApi, msg) -> None:
        r = msg.instance.round
        if api.leader_of(r) == self.node and r not in self.done:
            self._equivocate(api, r)

    def _equivocate(self, api: AdversaryApi, r: int) -> None:
        self.done.add(r)
        key = InstanceKey(Kind.RB, r)
        for part in self.spec.partitions:
            if part.parent == "prev":
                parent = r - 1 if r > 0 else None
            elif part.parent in ("bot", None):
                parent = None
            else:
                parent = int(part.parent)
            prop = Proposal(part.value, parent)
            if self.backend == "bracha":
                for to in part.nodes:
                    api.send(to, BrachaMsg(key, bracha_mod.INITIAL, prop, self.node))
            else:
                api.gossip(api.signed(key, gossip_mod.INITIAL, prop),
                           targets=tuple(part.nodes))


class FlipVoterDriver(Driver):
    def __init__(self, spec: FlipVoterSpec, backend: str):
        super().__init__(spec.node)
        self.spec = spec
        self.backend = backend
        self.done: set[int] = set()

    def on_deliver(self, api: AdversaryApi, msg) -> None:
        key = msg.instance
        if key.kind is not Kind.WBA or key.round in self.done:
            return
        self.done.add(key.round)
        bit = self.spec.bits.get(key.round, key.round % 2)
        if self.backend == "bracha":
            if self.spec.equivocate:
                for to in range(api.params.n):
                    b = bit if to % 2 == 0 else 1 - bit
                    api.send(to, BrachaMsg(key, bracha_mod.VOTE, b, self.node))
                    api.send(to, BrachaMsg(key, bracha_mod.READY, b, self.node))
            else:
                api.send_all(BrachaMsg(key, bracha_mod.VOTE, bit, self.node))
                api.send_all(BrachaMsg(key, bracha_mod.READY, bit, self.node))
        else:
            api.gossip(api.signed(key, gossip_mod.VOTE, bit))
            if self.spec.equivocate:
                api.gossip(api.signed(key, gossip_mod.VOTE, 1 - bit))


class ScriptedDriver(Driver):
    """Entries: {"time": T, "op": "send"|"gossip", "to": "all"|[ids],
    "instance": "rb/1", "mkind": "initial", "payload": ..., "forge_signer": id?}.

    RB payloads are {"value": v, "parent": p} dicts; WBA payloads are bits.
    """

    def __init__(self, spec: ScriptedSpec, backend: str):
        super().__init__(spec.node)
        self.spec = spec
        self.backend = backend

    def on_script(self, api: AdversaryApi, entry: dict) -> None:
        key = parse_key(entry["instance"])
        payload = entry.get("payload")
        if key.kind is Kind.RB and isinstance(payload, dict):
            payload = Proposal(payload["value"], payload.get("parent"),
                               payload.get("ts"))
        if self.backend == "bracha":
            msg = BrachaMsg(key, entry["mkind"], payload, self.node)
        else:
            forged = entry.get("forge_signer")
            if forged is not None:
                honest = api.signed(key, entry["mkind"], payload)
                msg = SignedMsg(key, entry["mkind"], payload, forged, honest.sig)
            else:
                msg = api.signed(key, entry["mkind"], payload)
        to = entry.get("to", "all")
        if self.backend == "gossip":
            targets = None if to == "all" else tuple(to)
            api.gossip(msg, targets)
        elif to == "all":
            api.send_all(msg)
        else:
            for t in to:
                api.send(t, msg)


def _build_driver(spec, backend: str) -> Driver | None:
    """Several specs may target one node; their drivers stack, which is how
    a single faulty validator combines behaviours."""
    if isinstance(spec, SilentLeaderSpec):
        return SilentLeaderDriver(spec.node)
    if isinstance(spec, EquivocatingProposerSpec):
        return EquivocatingProposerDriver(spec, backend)
    if isinstance(spec, FlipVoterSpec):
        return FlipVoterDriver(spec, backend)
    if isinstance(spec, ScriptedSpec):
        return ScriptedDriver(spec, backend)
    if isinstance(spec, CrashSpec):
        return None                          # crash keeps the correct stack
    raise ConfigError(f"unknown adversary spec {spec!r}")


class Simulation:
    def __init__(self, cfg: RunConfig):
        if cfg.backend not in ("bracha", "gossip"):
            raise ConfigError(f"unknown backend {cfg.backend!r}")
        if cfg.delay_law not in ("fixed", "uniform"):
            raise ConfigError(f"unknown delay law {cfg.delay_law!r}")
        if cfg.pre_gst_max_delay < 1:
            raise ConfigError("pre_gst_max_delay must be >= 1 (and finite)")
        if cfg.mode not in ("engine", "raw"):
            raise ConfigError(f"unknown mode {cfg.mode!r}")
        self.cfg = cfg
        self.total = cfg.params.n + cfg.extra_nodes
        faulty = [a.node for a in cfg.adversaries]
        if len(set(faulty)) > cfg.params.f:
            raise ConfigError(
                f"{len(set(faulty))} faulty nodes exceeds the bound f={cfg.params.f}")
        for node in faulty:
            if not 0 <= node < self.total:
                raise ConfigError(f"adversary node {node} out of range")
        for t, node, _ in cfg.injections:
            if not 0 <= node < self.total:
                raise ConfigError(f"injection targets unknown node {node}")
            if t > cfg.horizon:
                raise ConfigError(f"injection at {t} lies beyond the horizon")

        self.rng = random.Random(cfg.seed)
        self.trace = Trace(cfg.seed, meta={
            "backend": cfg.backend, "mode": cfg.mode, "n": cfg.params.n,
            "f": cfg.params.f, "gst": cfg.params.gst, "horizon": cfg.horizon})
        self.queue: list = []
        self.seq = 0
        self.scheme = SignatureScheme(cfg.seed, cfg.params.n)
        self.gossip_seen: list[set] = [set() for _ in range(self.total)]

        self.crash_at: dict[int, int] = {}
        self.crashed_noted: set[int] = set()
        self.drivers: dict[int, list[Driver]] = {}
        for spec in cfg.adversaries:
            if isinstance(spec, CrashSpec):
                self.crash_at[spec.node] = spec.at
            else:
                drv = _build_driver(spec, cfg.backend)
                self.drivers.setdefault(spec.node, []).append(drv)

        preseed: dict[int, list] = {}
        for t, node, value in cfg.injections:
            if t <= 0 and node not in self.drivers:
                preseed.setdefault(node, []).append(value)

        self.runtimes: dict[int, _NodeRuntime] = {}
        for node in range(self.total):
            if node in self.drivers:
                continue
            self.runtimes[node] = _NodeRuntime(self, node,
                                               tuple(preseed.get(node, ())))

    # -- scheduling primitives -------------------------------------------------

    def _push(self, time: int, payload: tuple) -> None:
        heappush(self.queue, (time, self.seq, payload))
        self.seq += 1

    def _delivery_time(self, now: int, post_bound: int) -> int:
        cfg = self.cfg
        gst = cfg.params.gst
        if cfg.delay_law == "fixed":
            d_pre, d_post = cfg.pre_gst_max_delay, post_bound
        else:
            d_pre = self.rng.randint(1, cfg.pre_gst_max_delay)
            d_post = self.rng.randint(1, post_bound)
        return min(now + d_pre, max(now, gst) + d_post)

    def schedule_direct(self, to: int, msg, now: int) -> None:
        at = self._delivery_time(now, self.cfg.params.delta)
        self._push(at, ("deliver", to, msg))

    def broadcast(self, sender: int, msg, now: int) -> None:
        for to in range(self.total):
            if to != sender:
                self.schedule_direct(to, msg, now)

    def gossip_from(self, origin: int, msg, now: int, targets=None) -> None:
        self.gossip_seen[origin].add(msg)
        for to in (targets if targets is not None else range(self.total)):
            if to != origin:
                at = self._delivery_time(now, self.cfg.gossip_relay_latency)
                self._push(at, ("gossip_deliver", to, msg))

    def set_timer(self, node: int, gen: int, fire_at: int, now: int) -> None:
        self.trace.append(now, "timer_set", node, generation=gen, fire_at=fire_at)
        self._push(fire_at, ("timer", node, gen))

    def set_wake(self, node: int, at: int) -> None:
        self._push(at, ("wake", node))

    def factory_for(self, node: int):
        cfg = self.cfg
        if cfg.backend == "bracha":
            return bracha_mod.machine_factory(cfg.params, cfg.schedule, node)
        return gossip_mod.machine_factory(cfg.params, cfg.schedule, node,
                                          self.scheme, cfg.digest_mode)

    # -- main loop ---------------------------------------------------------------

    def _crashed(self, node: int, now: int) -> bool:
        at = self.crash_at.get(node)
        if at is None or now < at:
            return False
        if node not in self.crashed_noted:
            self.crashed_noted.add(node)
            self.trace.append(now, "crash", node)
        return True

    def run(self) -> Trace:
        cfg = self.cfg
        for node in range(self.total):
            self._push(0, ("start", node))
        for t, node, value in cfg.injections:
            if t > 0 or node in self.drivers:
                self._push(max(t, 0), ("inject", node, value))
        for t, node, key_text, value in cfg.raw_inputs:
            self._push(t, ("rawinput", node, parse_key(key_text), value))
        for node, drivers in self.drivers.items():
            for drv in drivers:
                if isinstance(drv, ScriptedDriver):
                    for entry in drv.spec.script:
                        self._push(entry["time"], ("script", node, entry))

        while self.queue:
            now, _, ev = heappop(self.queue)
            if now > cfg.horizon:
                break
            self._dispatch(now, ev)
        return self.trace

    def _dispatch(self, now: int, ev: tuple) -> None:
        tag = ev[0]
        if tag == "start":
            node = ev[1]
            if node in self.drivers:
                api = AdversaryApi(self, node, now)
                for drv in self.drivers[node]:
                    drv.on_start(api)
            elif not self._crashed(node, now):
                rt = self.runtimes[node]
                preseeded = list(rt.engine.inputs) if rt.engine else []
                for value in preseeded:
                    self.trace.append(now, "inject", node, value=_encode_value(value))
                self.trace.append(now, "start", node)
                rt.on_start(now)
        elif tag == "deliver":
            _, to, msg = ev
            if to in self.drivers:
                self.trace.append(now, "deliver", to, **_encode_msg(msg))
                api = AdversaryApi(self, to, now)
                for drv in self.drivers[to]:
                    drv.on_deliver(api, msg)
            elif not self._crashed(to, now):
                self.trace.append(now, "deliver", to, **_encode_msg(msg))
                self.runtimes[to].on_deliver(now, msg)
        elif tag == "gossip_deliver":
            _, to, msg = ev
            if msg in self.gossip_seen[to]:
                return
            self.gossip_seen[to].add(msg)
            self.trace.append(now, "deliver", to, **_encode_msg(msg), gossip=1)
            if to in self.drivers:
                api = AdversaryApi(self, to, now)
                for drv in self.drivers[to]:
                    drv.on_deliver(api, msg)
            elif not self._crashed(to, now):
                # first receipt at a live correct node: relay to everyone
                for other in range(self.total):
                    if other != to:
                        at = self._delivery_time(now, self.cfg.gossip_relay_latency)
                        self._push(at, ("gossip_deliver", other, msg))
                self.runtimes[to].on_deliver(now, msg)
        elif tag == "timer":
            _, node, gen = ev
            if node in self.runtimes and not self._crashed(node, now):
                self.runtimes[node].on_timer(now, gen)
        elif tag == "inject":
            _, node, value = ev
            self.trace.append(now, "inject", node, value=_encode_value(value))
            if node in self.runtimes and not self._crashed(node, now):
                self.runtimes[node].on_inject(now, value)
        elif tag == "wake":
            _, node = ev
            if node in self.runtimes and not self._crashed(node, now):
                self.runtimes[node].on_wake(now)
        elif tag == "rawinput":
            _, node, key, value = ev
            if node in self.runtimes and not self._crashed(node, now):
                self.runtimes[node].on_raw_input(now, key, value)
        elif tag == "script":
            _, node, entry = ev
            api = AdversaryApi(self, node, now)
            for drv in self.drivers[node]:
                if isinstance(drv, ScriptedDriver):
                    drv.on_script(api, entry)


def run(cfg: RunConfig) -> Trace:
    return Simulation(cfg).run()
