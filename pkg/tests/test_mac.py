import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mac_scenarios as sc
from sense_lab.csi_codec import CsiMatrix
from sense_lab.errors import (
    ConfigurationError,
    ConflictError,
    FormatError,
    NegotiationError,
    NotFoundError,
    ProtocolError,
    RoleError,
)
from sense_lab.mac import (
    DMG_SIFS_NS,
    SIFS_NS,
    DmgBurstSchedule,
    EventTrace,
    SensingEngine,
    SessionAttrs,
    StaProfile,
    TraceEntry,
    never,
    read_jsonl,
    select_reporters,
)


@pytest.mark.parametrize("name", sorted(sc.GOLDEN))
def test_golden_trace(name):
    want = (sc.FIXTURES / f"{name}.jsonl").read_text(encoding="utf-8")
    assert sc.GOLDEN[name]().to_jsonl() == want


@pytest.mark.parametrize("name", sorted(sc.GOLDEN))
def test_jsonl_round_trip(name, tmp_path):
    trace = sc.GOLDEN[name]()
    path = trace.write_jsonl(tmp_path / "t.jsonl")
    assert read_jsonl(path).to_jsonl() == trace.to_jsonl()


def test_trace_rejects_unknown_frame():
    with pytest.raises(FormatError):
        EventTrace().append(TraceEntry(0, "Hello", 0, 1, None, None))


# --- capabilities and sessions --------------------------------------------


def test_capabilities():
    eng = SensingEngine([StaProfile(0, is_ap=True, dmg_capable=True), StaProfile(1), StaProfile(2, tx_capable=False), StaProfile(3, tx_capable=False)])
    assert eng.exchange_capabilities(0, 1).responder_roles == {"tx", "rx"}
    assert not eng.exchange_capabilities(0, 1).dmg
    with pytest.raises(NegotiationError):
        eng.exchange_capabilities(2, 3)


def test_sessions_coexist_and_terminate():
    eng = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,)))
    eng.setup_session(SessionAttrs(2, 0, (1,)))
    eng.run_tb_exchange(1)
    r2 = eng.run_tb_exchange(2)
    before = list(eng.records[2])
    assert eng.terminate_session(1)["released"]
    with pytest.raises(ProtocolError):
        eng.run_tb_exchange(1)
    assert eng.records[2] == before and eng.sessions[2].session_id == 2
    assert eng.run_tb_exchange(2).exchange_id == r2.exchange_id + 1
    assert eng.trace.entries[-len(eng.records[2][-1].trace) - 1].frame == "Terminate"


def test_session_errors():
    eng = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1, tx_capable=False)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,), roles={1: "rx"}))
    with pytest.raises(ConflictError):
        eng.setup_session(SessionAttrs(1, 0, (1,), roles={1: "rx"}))
    with pytest.raises(ConfigurationError):
        eng.setup_session(SessionAttrs(2, 0, (1,), roles={1: "both"}))
    with pytest.raises(NotFoundError):
        eng.terminate_session(99)
    eng2 = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1)])
    with pytest.raises(NegotiationError):
        eng2.setup_session(SessionAttrs(1, 0, (1,)))


# --- trigger-based ----------------------------------------------------------


def test_tb_five_sta_example():
    eng, rec = sc.tb_five_sta()
    assert rec.phases_executed == ["polling", "ndpa_sounding", "tf_sounding", "reporting"]
    assert all(5 not in (e.src, e.dst) for e in rec.trace)
    assert sorted({m.sta_id for m in rec.measurements if m.direction == "SI2SR"}) == [3, 4]
    assert sorted({m.tx_sta for m in rec.measurements if m.direction == "SR2SI"}) == [1, 2]
    assert set(rec.trace.gaps_ns()) == {SIFS_NS}


def test_tb_non_ap_initiator():
    eng = SensingEngine([StaProfile(0), StaProfile(1)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,)))
    with pytest.raises(RoleError):
        eng.run_tb_exchange(1)


def test_tb_no_responses_polling_only():
    eng = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1, responsiveness=never)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,)))
    rec = eng.run_tb_exchange(1)
    assert rec.phases_executed == ["polling"]
    assert rec.errors


def test_tb_phase_plan_validation():
    eng, _ = sc.tb_five_sta()
    with pytest.raises(ConfigurationError):
        eng.run_tb_exchange(1, ["reporting", "polling"])
    with pytest.raises(ConfigurationError):
        eng.run_tb_exchange(1, ["beamforming"])


def test_delayed_reporting_carries_previous_exchange():
    eng = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,), roles={1: "rx"}, reporting="delayed"))
    first = eng.run_tb_exchange(1)
    assert "reporting" not in first.phases_executed
    second = eng.run_tb_exchange(1, ["polling", "reporting"])
    assert [(r.source, r.exchange_id) for r in second.reports] == [(1, first.exchange_id)]


def test_delayed_reporting_aggregates_sessions():
    eng = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1)])
    eng.exchange_capabilities(0, 1)
    for sid in (1, 2):
        eng.setup_session(SessionAttrs(sid, 0, (1,), roles={1: "rx"}, reporting="delayed"))
    eng.run_tb_exchange(1)
    eng.run_tb_exchange(2)
    rec = eng.run_tb_exchange(1, ["polling", "reporting"], aggregate_sessions=[2])
    report = [e for e in rec.trace if e.frame == "Report"][0]
    assert report.tags["items"] == [[1, 1], [2, 1]]


# --- threshold reporting ----------------------------------------------------


def test_threshold_equality_boundary():
    eng, (first, second), v, th = sc.threshold_reporting()
    assert first.reporters() == [1, 2, 3]  # no previous CSI: variation 1.0
    assert second.reporters() == [1, 3]
    assert v[1] == th[1]


def test_threshold_selection_example():
    assert select_reporters({"A": 0.3, "B": 0.4}, {"A": 0.2, "B": 0.5}) == ["A"]
    assert select_reporters({"A": 0.0, "B": 0.0}, {"A": 0.1, "B": 0.2}) == []


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.integers(1, 8), st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1))
def test_threshold_set_equality(d):
    v = {k: a for k, (a, _) in d.items()}
    th = {k: b for k, (_, b) in d.items()}
    assert set(select_reporters(v, th)) == {k for k in d if v[k] >= th[k]}


def test_static_channel_gives_empty_measurement_subphase():
    eng = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1, csi_threshold=0.1)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,), roles={1: "rx"}, reporting="threshold"))
    eng.run_tb_exchange(1)
    rec = eng.run_tb_exchange(1)
    assert rec.reporters("variation") == [1] and rec.reporters() == []


def test_threshold_needs_tx_capable_initiator():
    eng = SensingEngine([StaProfile(0, is_ap=True, tx_capable=False), StaProfile(1)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,), roles={1: "tx"}, reporting="threshold"))
    rec = eng.run_tb_exchange(1, ["polling", "tf_sounding"])
    with pytest.raises(RoleError):
        eng.run_threshold_reporting(1, rec)


# --- non-trigger-based ------------------------------------------------------


def test_non_tb_both():
    eng, rec = sc.non_tb("both")
    frames = rec.trace.frames()
    assert frames == ["SensingNDPA", "NDP_SI2SR", "NDP_SR2SI", "Report"]
    assert not any(e.tags.get("min_length") for e in rec.trace)
    assert {m.direction for m in rec.measurements} == {"SI2SR", "SR2SI"}
    assert set(rec.trace.gaps_ns()) == {SIFS_NS}


def test_non_tb_tx_role_tags_sr2si_min_length():
    eng, rec = sc.non_tb("tx")
    tagged = [e.frame for e in rec.trace if e.tags.get("min_length")]
    assert tagged == ["NDP_SR2SI"]
    assert [m.direction for m in rec.measurements] == ["SI2SR"]


def test_non_tb_rx_role_tags_si2sr_min_length():
    eng, rec = sc.non_tb("rx")
    tagged = [e.frame for e in rec.trace if e.tags.get("min_length")]
    assert tagged == ["NDP_SI2SR"]
    assert "Report" not in rec.trace.frames()


def test_non_tb_ap_initiator():
    eng = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1, is_ap=True)])
    eng.exchange_capabilities(0, 1)
    eng.setup_session(SessionAttrs(1, 0, (1,)))
    with pytest.raises(RoleError):
        eng.run_non_tb_exchange(1)


# --- DMG ------------------------------------------------------------------


def test_bistatic_rx_initiator_has_no_reporting():
    _, recs = sc.bistatic("rx_initiator")
    assert "reporting" not in recs[0].phases_executed
    _, recs = sc.bistatic("tx_initiator")
    assert "reporting" in recs[0].phases_executed


@pytest.mark.parametrize("n", [2, 3, 8])
def test_multistatic_sync_fields_and_report_order(n):
    _, recs = sc.multistatic(n)
    rec = recs[0]
    assert len(rec.ppdu.fields_named("sync")) == n
    assert rec.reporters() == list(range(1, n + 1))
    assert [e.src for e in rec.trace if e.frame == "Report"] == list(range(1, n + 1))


def test_multistatic_needs_two_responders():
    eng = sc.dmg_engine(1)
    with pytest.raises(RoleError):
        eng.run_dmg_burst(1, "multistatic", DmgBurstSchedule(1, 1e-3, 2e-3))


def test_dmg_burst_timing_exact():
    eng, recs, sched = sc.dmg_bursts()
    assert len(recs) == 12
    t0 = 10_000_000
    for r in recs:
        assert r.start_ns == t0 + r.burst_index * 2_000_000 + r.exchange_index * 250_000
        assert r.trace.entries[0].t_ns == r.start_ns


def test_dmg_sifs():
    _, recs = sc.multistatic(2)
    assert set(recs[0].trace.gaps_ns()) == {DMG_SIFS_NS}


def test_dmg_requires_capability():
    eng = SensingEngine([StaProfile(0, is_ap=True)])
    eng.setup_session(SessionAttrs(1, 0, ()))
    with pytest.raises(RoleError):
        eng.run_dmg_burst(1, "monostatic", DmgBurstSchedule(1, 1e-3, 2e-3))


@pytest.mark.parametrize(
    "kind,variant",
    [("coord_monostatic", "sequential"), ("coord_monostatic", "simultaneous"), ("coord_bistatic", None), ("passive", "beacon"), ("passive", "abft")],
)
def test_other_dmg_types_run(kind, variant):
    eng = sc.dmg_engine(2)
    recs = eng.run_dmg_burst(1, kind, DmgBurstSchedule(2, 1e-3, 3e-3), variant=variant)
    assert len(recs) == 2
    assert "sounding" in recs[0].phases_executed


def test_exchange_longer_than_intra_interval():
    eng = sc.dmg_engine(8)
    with pytest.raises(ProtocolError):
        eng.run_dmg_burst(1, "multistatic", DmgBurstSchedule(2, 10e-6, 1e-3))


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        DmgBurstSchedule(4, 2e-3, 1e-3)


def test_channel_hook_receives_context():
    seen = []

    def hook(ctx):
        seen.append((ctx.tx_sta, ctx.rx_sta, ctx.direction))
        return CsiMatrix(np.ones(8))

    eng = sc.dmg_engine(1)
    eng.run_dmg_burst(1, "bistatic", DmgBurstSchedule(1, 1e-3, 2e-3), hook)
    assert seen == [(0, 1, "SI2SR")]


# --- sensing by proxy -------------------------------------------------------


def test_sbp_forwarding_conservation():
    eng, res = sc.sbp(join=True, n_exchanges=2)
    collected = [(r.source, r.session_id, r.exchange_id) for rec in res.records for r in rec.reports if r.kind == "measurement"]
    forwarded = [(r.source, r.session_id, r.exchange_id) for r in res.forwarded]
    assert forwarded == collected and len(forwarded) == 6
    assert 1 in {r.source for r in res.forwarded}
    sbp_reports = [e for e in res.trace if e.frame == "SbpReport"]
    assert len(sbp_reports) == len(forwarded)
    assert res.trace.frames()[-1] == "Terminate"


def test_sbp_denied():
    eng = SensingEngine([StaProfile(0, is_ap=True), StaProfile(1), StaProfile(2)])
    res = eng.run_sbp(1, 0, (2,), session_id=3)
    assert not res.accepted
    assert res.trace.frames() == ["SbpRequest", "SbpResponse"]
    assert 3 not in eng.sessions


def test_determinism():
    a = sc.tb_five_sta()[0].trace.to_jsonl()
    b = sc.tb_five_sta()[0].trace.to_jsonl()
    assert a == b
