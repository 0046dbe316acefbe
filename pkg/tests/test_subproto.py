import pytest

from abcast.core import InternalInvariantError, LeaderSchedule, Params
from abcast.subproto import (
    InstanceKey,
    InstanceTable,
    Kind,
    LocalInput,
    parse_key,
)

PARAMS = Params(n=4, f=1, delta=2, gst=0, sub_delay=6)
SCHED = LeaderSchedule(4)


class RecorderMachine:
    def __init__(self):
        self.events = []

    def step(self, event):
        self.events.append(event)
        return [("stepped", event)]


def make_table(self_id=0):
    machines = {}

    def factory(key):
        machines[key] = RecorderMachine()
        return machines[key]

    return InstanceTable(PARAMS, SCHED, self_id, factory), machines


def test_key_string_round_trip():
    key = InstanceKey(Kind.RB, 3)
    assert str(key) == "rb/3"
    assert parse_key("rb/3") == key
    assert parse_key("wba/0") == InstanceKey(Kind.WBA, 0)


def test_submit_input_once():
    table, machines = make_table(self_id=0)
    key = InstanceKey(Kind.RB, 0)
    out = table.submit_input(key, "a")
    assert out == [("stepped", LocalInput("a"))]
    assert table.input_made(key)
    assert table.submit_input(key, "b") == []
    assert machines[key].events == [LocalInput("a")]


def test_rb_input_requires_proposer():
    table, machines = make_table(self_id=0)
    key = InstanceKey(Kind.RB, 1)
    assert table.submit_input(key, "a") == []
    assert machines[key].events == []
    assert not table.input_made(key)


def test_wba_input_requires_validator():
    table, machines = make_table(self_id=4)
    key = InstanceKey(Kind.WBA, 0)
    assert table.submit_input(key, 1) == []
    assert machines[key].events == []


def test_record_output_write_once():
    table, _ = make_table()
    key = InstanceKey(Kind.WBA, 2)
    assert table.record_output(key, 1) is True
    assert table.record_output(key, 1) is False
    with pytest.raises(InternalInvariantError):
        table.record_output(key, 0)
    assert table.wba_output(2) == 1


def test_output_views():
    table, _ = make_table()
    assert table.rb_output(0) is None
    assert table.wba_output(0) is None
    table.record_output(InstanceKey(Kind.RB, 4), ("v", None))
    table.record_output(InstanceKey(Kind.RB, 1), ("w", 0))
    assert table.rb_output(4) == ("v", None)
    assert table.rb_rounds_with_output() == [1, 4]
    # A slot that exists but has not produced output is not listed.
    table.slot(InstanceKey(Kind.RB, 7))
    assert table.rb_rounds_with_output() == [1, 4]
    assert table.rb_output(7) is None
