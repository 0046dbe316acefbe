from abcast.core import LeaderSchedule, Params
from abcast.gossip import (
    ECHO,
    INITIAL,
    VOTE,
    GossipRb,
    GossipWba,
    SignatureScheme,
    SignedMsg,
    digest,
    machine_factory,
    make_signed,
    signed_payload,
)
from abcast.subproto import GossipSend, InstanceKey, Kind, LocalInput, Output, Recv

PARAMS = Params(n=4, f=1, delta=2, gst=0, sub_delay=6)
RB_KEY = InstanceKey(Kind.RB, 0)
WBA_KEY = InstanceKey(Kind.WBA, 0)
SCHEME = SignatureScheme(seed=0, n=5)


def rb_at(self_id, proposer=0, digest_mode=False):
    return GossipRb(RB_KEY, PARAMS, proposer, self_id, SCHEME, digest_mode)


def wba_at(self_id):
    return GossipWba(WBA_KEY, PARAMS, self_id, SCHEME)


def echo(signer, value, digest_mode=False):
    payload = digest(value) if digest_mode else value
    return make_signed(SCHEME, signer, RB_KEY, ECHO, payload)


def test_sign_verify_round_trip():
    payload = signed_payload(RB_KEY, ECHO, "a")
    sig = SCHEME.sign(2, payload)
    assert SCHEME.verify(2, payload, sig)
    assert not SCHEME.verify(1, payload, sig)
    assert not SCHEME.verify(2, payload + b"x", sig)
    assert not SCHEME.verify(9, payload, sig)


def test_signature_binds_instance_and_kind():
    vote_sig = SCHEME.sign(1, signed_payload(WBA_KEY, VOTE, 1))
    other_round = InstanceKey(Kind.WBA, 3)
    assert not SCHEME.verify(1, signed_payload(other_round, VOTE, 1), vote_sig)
    assert not SCHEME.verify(1, signed_payload(WBA_KEY, ECHO, 1), vote_sig)


def test_digest_is_stable():
    assert digest({"b": 1, "a": 2}) == digest({"a": 2, "b": 1})
    assert digest("a") != digest("b")


def test_initial_triggers_signed_echo():
    m = rb_at(1)
    out = m.step(Recv(make_signed(SCHEME, 0, RB_KEY, INITIAL, "a")))
    assert out == [GossipSend(make_signed(SCHEME, 1, RB_KEY, ECHO, "a"))]
    assert rb_at(1).step(LocalInput("a")) == []
    proposer = rb_at(0)
    out = proposer.step(LocalInput("a"))
    assert out == [GossipSend(make_signed(SCHEME, 0, RB_KEY, INITIAL, "a"))]


def test_forged_signature_rejected_and_counted():
    m = rb_at(1)
    good = make_signed(SCHEME, 2, RB_KEY, ECHO, "a")
    forged = SignedMsg(RB_KEY, ECHO, "a", 3, good.sig)
    assert m.step(Recv(forged)) == []
    assert m.invalid_sigs == 1
    assert m.echo_signers == {}


def test_quorum_of_echo_signers_outputs():
    m = rb_at(3)
    m.step(Recv(echo(0, "a")))
    m.step(Recv(echo(1, "a")))
    out = m.step(Recv(echo(2, "a")))
    assert out == [Output("a")]
    assert m.step(Recv(echo(3, "a"))) == []


def test_echo_equivocation_kept_as_evidence_not_tallied():
    m = rb_at(3)
    m.step(Recv(echo(0, "a")))
    m.step(Recv(echo(0, "b")))
    assert m.echo_signers["a"] == {0}
    assert "b" not in m.echo_signers
    assert m.equivocations == {0: ["b"]}
    m.step(Recv(echo(1, "a")))
    assert m.step(Recv(echo(0, "a"))) == []
    assert len(m.echo_signers["a"]) == 2


def test_observer_echo_not_counted():
    m = rb_at(3)
    m.step(Recv(echo(0, "a")))
    m.step(Recv(echo(4, "a")))
    assert m.echo_signers["a"] == {0}


def test_digest_mode_waits_for_initial():
    m = rb_at(3, digest_mode=True)
    m.step(Recv(echo(0, "a", digest_mode=True)))
    m.step(Recv(echo(1, "a", digest_mode=True)))
    # Quorum of digest echoes alone cannot reconstruct the value.
    assert m.step(Recv(echo(2, "a", digest_mode=True))) == []
    assert not m.delivered
    out = m.step(Recv(make_signed(SCHEME, 0, RB_KEY, INITIAL, "a")))
    assert Output("a") in out
    assert m.delivered


def test_digest_mode_initial_first():
    m = rb_at(3, digest_mode=True)
    m.step(Recv(make_signed(SCHEME, 0, RB_KEY, INITIAL, "a")))
    m.step(Recv(echo(0, "a", digest_mode=True)))
    m.step(Recv(echo(1, "a", digest_mode=True)))
    out = m.step(Recv(echo(2, "a", digest_mode=True)))
    assert out == [Output("a")]


def test_digest_mode_mismatched_initial_never_outputs():
    m = rb_at(3, digest_mode=True)
    m.step(Recv(make_signed(SCHEME, 0, RB_KEY, INITIAL, "z")))
    m.step(Recv(echo(0, "a", digest_mode=True)))
    m.step(Recv(echo(1, "a", digest_mode=True)))
    assert m.step(Recv(echo(2, "a", digest_mode=True))) == []
    assert not m.delivered


def test_initial_equivocation_evidence():
    m = rb_at(3)
    m.step(Recv(make_signed(SCHEME, 0, RB_KEY, INITIAL, "a")))
    m.step(Recv(make_signed(SCHEME, 0, RB_KEY, INITIAL, "b")))
    assert m.equivocations == {0: ["b"]}
    assert m.initial_value == "a"


def test_wba_vote_once_and_quorum_output():
    m = wba_at(3)
    out = m.step(LocalInput(1))
    assert out == [GossipSend(make_signed(SCHEME, 3, WBA_KEY, VOTE, 1))]
    assert m.step(LocalInput(1)) == []
    m.step(Recv(make_signed(SCHEME, 0, WBA_KEY, VOTE, 1)))
    m.step(Recv(make_signed(SCHEME, 1, WBA_KEY, VOTE, 1)))
    out = m.step(Recv(make_signed(SCHEME, 2, WBA_KEY, VOTE, 1)))
    assert out == [Output(1)]


def test_wba_split_votes_never_output():
    m = wba_at(3)
    m.step(Recv(make_signed(SCHEME, 0, WBA_KEY, VOTE, 0)))
    m.step(Recv(make_signed(SCHEME, 1, WBA_KEY, VOTE, 0)))
    m.step(Recv(make_signed(SCHEME, 2, WBA_KEY, VOTE, 1)))
    m.step(Recv(make_signed(SCHEME, 3, WBA_KEY, VOTE, 1)))
    assert not m.delivered
    assert m.vote_signers == {0: {0, 1}, 1: {2, 3}}


def test_wba_vote_equivocation_first_counts():
    m = wba_at(3)
    m.step(Recv(make_signed(SCHEME, 0, WBA_KEY, VOTE, 0)))
    m.step(Recv(make_signed(SCHEME, 0, WBA_KEY, VOTE, 1)))
    assert m.vote_signers == {0: {0}}
    assert m.equivocations == {0: [1]}


def test_wba_forged_vote_rejected():
    m = wba_at(3)
    good = make_signed(SCHEME, 0, WBA_KEY, VOTE, 1)
    m.step(Recv(SignedMsg(WBA_KEY, VOTE, 1, 1, good.sig)))
    assert m.invalid_sigs == 1
    assert m.vote_signers == {}


def test_factory_builds_both_kinds():
    make = machine_factory(PARAMS, LeaderSchedule(4), 2, SCHEME, digest_mode=True)
    rb = make(InstanceKey(Kind.RB, 6))
    assert isinstance(rb, GossipRb)
    assert rb.proposer == 2 and rb.digest_mode
    assert isinstance(make(InstanceKey(Kind.WBA, 6)), GossipWba)
