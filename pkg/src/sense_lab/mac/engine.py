"""Deterministic sensing procedure engine.

Time is kept in integer nanoseconds.  The medium is ideal (no contention or
loss); within an exchange each frame starts exactly one SIFS after the
previous one ends.  Every frame is appended both to the exchange record's
trace and to the engine-wide trace.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..csi_codec import CsiMatrix, FeedbackReport, csi_variation, encode_feedback
from ..errors import (
    ConfigurationError,
    ConflictError,
    NegotiationError,
    NotFoundError,
    ProtocolError,
    RoleError,
)
from ..waveform import DMG_CHIP_RATE, PpduSpec, assemble_sensing_ppdu
from .trace import BROADCAST, EventTrace, TraceEntry
from .types import (
    DMG_TYPES,
    TB_PHASES,
    AgreedCapabilities,
    DmgBurstSchedule,
    ExchangeRecord,
    LinkContext,
    Measurement,
    ReportEntry,
    SbpResult,
    SessionAttrs,
    StaProfile,
)

SIFS_NS = 16_000
DMG_SIFS_NS = 3_000

AIRTIME_NS = {
    "Poll": 20_000,
    "PollResponse": 20_000,
    "SensingNDPA": 24_000,
    "NDP_SI2SR": 40_000,
    "NDP_SR2SI": 40_000,
    "SensingTrigger": 24_000,
    "ReportTrigger": 24_000,
    "Report": 60_000,
    "VariationReport": 20_000,
    "InfoRequest": 20_000,
    "InfoResponse": 20_000,
    "SbpRequest": 30_000,
    "SbpResponse": 20_000,
    "SbpReport": 60_000,
    "Terminate": 20_000,
}

DMG_AIRTIME_NS = {
    "Poll": 2_000,
    "PollResponse": 2_000,
    "ReportTrigger": 2_000,
    "Report": 5_000,
    "BRP": 4_000,
    "Beacon": 2_000,
    "SSW": 1_000,
    "InfoRequest": 2_000,
    "InfoResponse": 2_000,
}

#: Airtime of a minimum-length NDP.
NDP_MIN_NS = 16_000

ChannelHook = Callable[[LinkContext], object]


def flat_channel_hook(ctx: LinkContext) -> CsiMatrix:
    """Stand-in channel: a flat 64-subcarrier CFR."""
    return CsiMatrix(np.ones(64, dtype=complex))


def select_reporters(variations: Mapping[int, float], thresholds: Mapping[int, float]) -> list[int]:
    """Responders whose CSI variation reaches their threshold (inclusive)."""
    return [sta for sta, v in variations.items() if v >= thresholds[sta]]


class _Cursor:
    """Places frames back to back, one SIFS apart."""

    def __init__(self, engine: "SensingEngine", record: ExchangeRecord, start_ns: int, sifs_ns: int, table: dict):
        self.engine = engine
        self.record = record
        self.next_ns = start_ns
        self.sifs_ns = sifs_ns
        self.table = table
        self.last_end_ns = start_ns

    def send(self, frame: str, src: int, dst, dur_ns: int | None = None, at_ns: int | None = None, **tags) -> TraceEntry:
        t = self.next_ns if at_ns is None else at_ns
        dur = self.table[frame] if dur_ns is None else int(dur_ns)
        e = TraceEntry(t, frame, src, dst, self.record.exchange_id or None, self.record.session_id, dur, tags)
        self.record.trace.append(e)
        self.engine.trace.append(e)
        self.last_end_ns = max(self.last_end_ns, e.end_ns)
        self.next_ns = self.last_end_ns + self.sifs_ns
        return e


class SensingEngine:
    """Runs capability exchange, sessions and measurement exchanges.

    Parameters
    ----------
    profiles : iterable of StaProfile
        Stations known to the engine.
    sifs_ns, dmg_sifs_ns : int
        Interframe spaces for sub-7 GHz and DMG exchanges.
    ndp_min_ns : int
        Airtime of a minimum-length NDP.
    """

    def __init__(
        self,
        profiles: Iterable[StaProfile],
        sifs_ns: int = SIFS_NS,
        dmg_sifs_ns: int = DMG_SIFS_NS,
        ndp_min_ns: int = NDP_MIN_NS,
        airtime_ns: Mapping[str, int] | None = None,
        dmg_airtime_ns: Mapping[str, int] | None = None,
    ):
        self.profiles: dict[int, StaProfile] = {}
        for p in profiles:
            if p.sta_id in self.profiles:
                raise ConflictError(f"STA {p.sta_id} registered twice")
            self.profiles[p.sta_id] = p
        self.sifs_ns = int(sifs_ns)
        self.dmg_sifs_ns = int(dmg_sifs_ns)
        self.ndp_min_ns = int(ndp_min_ns)
        self.airtime = dict(AIRTIME_NS, **(airtime_ns or {}))
        self.dmg_airtime = dict(DMG_AIRTIME_NS, **(dmg_airtime_ns or {}))
        self.capabilities: dict[tuple[int, int], AgreedCapabilities] = {}
        self.sessions: dict[int, SessionAttrs] = {}
        self.records: dict[int, list[ExchangeRecord]] = {}
        self.terminated: set[int] = set()
        self.trace = EventTrace()
        self.now_ns = 0
        self._next_start: dict[int, int] = {}
        self._last_csi: dict[tuple[int, int, str], CsiMatrix] = {}
        self._pending: dict[tuple[int, int], list[Measurement]] = {}

    # ------------------------------------------------------------------
    # capabilities and sessions

    def profile(self, sta: int) -> StaProfile:
        try:
            return self.profiles[sta]
        except KeyError:
            raise NotFoundError(f"STA {sta} is not registered") from None

    def exchange_capabilities(self, initiator: int, responder: int) -> AgreedCapabilities:
        i, r = self.profile(initiator), self.profile(responder)
        roles = set()
        if i.tx_capable and r.rx_capable:
            roles.add("rx")
        if r.tx_capable and i.rx_capable:
            roles.add("tx")
        if not roles:
            raise NegotiationError(f"STA {initiator} and STA {responder} share no sounding direction")
        agreed = AgreedCapabilities(initiator, responder, frozenset(roles), i.dmg_capable and r.dmg_capable)
        self.capabilities[(initiator, responder)] = agreed
        return agreed

    def setup_session(self, attrs: SessionAttrs) -> SessionAttrs:
        if attrs.session_id in self.sessions or attrs.session_id in self.terminated:
            raise ConflictError(f"session id {attrs.session_id} is already in use")
        self.profile(attrs.initiator)
        for r in attrs.responders:
            self.profile(r)
            agreed = self.capabilities.get((attrs.initiator, r))
            if agreed is None:
                raise NegotiationError(f"capabilities of STA {attrs.initiator} and STA {r} were not exchanged")
            if not agreed.allows(attrs.role(r)):
                raise ConfigurationError(
                    f"role {attrs.role(r)!r} for STA {r} exceeds agreed roles {sorted(agreed.responder_roles)}"
                )
        self.sessions[attrs.session_id] = attrs
        self.records[attrs.session_id] = []
        self._next_start[attrs.session_id] = self.now_ns
        return attrs

    def terminate_session(self, session_id: int) -> dict:
        attrs = self._session(session_id)
        rec = ExchangeRecord(0, session_id)
        start = self.now_ns + self.sifs_ns if len(self.trace) else self.now_ns
        cur = _Cursor(self, rec, start, self.sifs_ns, self.airtime)
        cur.send("Terminate", attrs.initiator, BROADCAST, responders=list(attrs.responders))
        self.now_ns = cur.last_end_ns
        del self.sessions[session_id]
        self.terminated.add(session_id)
        for key in [k for k in self._pending if k[0] == session_id]:
            del self._pending[key]
        return {"session_id": session_id, "released": True, "exchanges": len(self.records[session_id])}

    def _session(self, session_id: int) -> SessionAttrs:
        if session_id in self.terminated:
            raise ProtocolError(f"session {session_id} has been terminated")
        try:
            return self.sessions[session_id]
        except KeyError:
            raise NotFoundError(f"no session with id {session_id}") from None

    def _new_record(self, session_id: int, start_ns: int) -> ExchangeRecord:
        recs = self.records[session_id]
        rec = ExchangeRecord(len(recs) + 1, session_id, start_ns=start_ns)
        recs.append(rec)
        return rec

    def _finish(self, session_id: int, cur: _Cursor) -> None:
        self.now_ns = max(self.now_ns, cur.last_end_ns)

    # ------------------------------------------------------------------
    # measurement helpers

    def _measure(self, rec: ExchangeRecord, hook: ChannelHook, tx: int, rx: int, direction: str, t_ns: int, **ctx) -> Measurement:
        link = LinkContext(rec.session_id, rec.exchange_id, tx, rx, direction, t_ns / 1e9, rec.burst_index, rec.exchange_index, **ctx)
        data = hook(link)
        m = Measurement(rx, tx, direction, data, t_ns / 1e9, rec.session_id, rec.exchange_id)
        rec.measurements.append(m)
        return m

    @staticmethod
    def _as_csi(data) -> CsiMatrix | None:
        if isinstance(data, CsiMatrix):
            return data
        if isinstance(data, np.ndarray) and data.size:
            return CsiMatrix(np.fft.fft(data, axis=0))
        return None

    def _encode(self, attrs: SessionAttrs, m: Measurement) -> FeedbackReport | None:
        csi = self._as_csi(m.data)
        if csi is None or attrs.quant is None and attrs.report_type != "tcir":
            return None
        if attrs.report_type == "tcir":
            return encode_feedback(csi, "tcir", attrs.quant, attrs.tap_count or csi.n_subcarriers)
        return encode_feedback(csi, attrs.report_type, attrs.quant)

    # ------------------------------------------------------------------
    # trigger-based exchange

    def run_tb_exchange(
        self,
        session_id: int,
        phase_plan: Sequence[str] = TB_PHASES,
        hook: ChannelHook | None = None,
        aggregate_sessions: Sequence[int] = (),
        thresholds: Mapping[int, float] | None = None,
    ) -> ExchangeRecord:
        """One trigger-based measurement exchange driven by an AP initiator.

        Sounding phases run only when a polled responder of the matching role
        answered.  Without a polling phase, availability still follows each
        responder's responsiveness schedule.
        """
        attrs = self._session(session_id)
        ap = self.profile(attrs.initiator)
        if not ap.is_ap:
            raise RoleError(f"trigger-based exchanges need an AP initiator; STA {ap.sta_id} is not an AP")
        plan = list(phase_plan)
        if not plan:
            raise ConfigurationError("phase plan is empty")
        if any(p not in TB_PHASES for p in plan) or plan != sorted(plan, key=TB_PHASES.index) or len(set(plan)) != len(plan):
            raise ConfigurationError(f"phase plan {plan} must be an ordered subset of {list(TB_PHASES)}")
        hook = hook or flat_channel_hook
        start = max(self.now_ns, self._next_start[session_id])
        rec = self._new_record(session_id, start)
        rec.exchange_index = rec.exchange_id
        cur = _Cursor(self, rec, start, self.sifs_ns, self.airtime)
        k = rec.exchange_id
        responsive = [r for r in attrs.responders if self.profile(r).responsiveness(k)]

        if "polling" in plan:
            rec.phases_executed.append("polling")
            cur.send("Poll", ap.sta_id, BROADCAST, polled=list(attrs.responders))
            for r in responsive:
                cur.send("PollResponse", r, ap.sta_id)
        rx_set = [r for r in responsive if attrs.role(r) in ("rx", "both")]
        tx_set = [r for r in responsive if attrs.role(r) in ("tx", "both")]

        if "ndpa_sounding" in plan and rx_set:
            rec.phases_executed.append("ndpa_sounding")
            cur.send("SensingNDPA", ap.sta_id, BROADCAST, sta_list=rx_set)
            ndp = cur.send("NDP_SI2SR", ap.sta_id, BROADCAST)
            for r in rx_set:
                self._measure(rec, hook, ap.sta_id, r, "SI2SR", ndp.t_ns)
        if "tf_sounding" in plan and tx_set:
            rec.phases_executed.append("tf_sounding")
            cur.send("SensingTrigger", ap.sta_id, BROADCAST, sta_list=tx_set)
            for r in tx_set:
                ndp = cur.send("NDP_SR2SI", r, ap.sta_id)
                self._measure(rec, hook, r, ap.sta_id, "SR2SI", ndp.t_ns)

        if "reporting" in plan:
            self._reporting(attrs, rec, cur, aggregate_sessions, thresholds)
        self._next_start[session_id] = start + round(attrs.schedule * 1e9)
        self._finish(session_id, cur)
        return rec

    def _reporting(self, attrs, rec, cur, aggregate_sessions, thresholds):
        current = [m for m in rec.measurements if m.direction == "SI2SR"]
        if attrs.reporting == "threshold":
            self._threshold(attrs, rec, cur, thresholds)
            return
        if attrs.reporting == "immediate":
            if not current:
                rec.errors.append("reporting phase skipped: no responder measurement in this exchange")
                return
            rec.phases_executed.append("reporting")
            cur.send("ReportTrigger", attrs.initiator, BROADCAST, sta_list=[m.sta_id for m in current])
            for m in current:
                rep = self._encode(attrs, m)
                cur.send("Report", m.sta_id, attrs.initiator, items=[[attrs.session_id, m.exchange_id]])
                rec.reports.append(ReportEntry(m.sta_id, attrs.session_id, m.exchange_id, "measurement", rep))
            return
        # delayed: report what earlier exchanges queued, then queue this one
        sessions = [attrs.session_id] + [s for s in aggregate_sessions if s != attrs.session_id]
        for s in sessions[1:]:
            self._session(s)
        by_sta: dict[int, list[Measurement]] = {}
        for r in attrs.responders:
            for s in sessions:
                by_sta.setdefault(r, []).extend(self._pending.pop((s, r), []))
        by_sta = {r: ms for r, ms in by_sta.items() if ms}
        if by_sta:
            rec.phases_executed.append("reporting")
            cur.send("ReportTrigger", attrs.initiator, BROADCAST, sta_list=list(by_sta))
            for r, ms in by_sta.items():
                items = [[m.session_id, m.exchange_id] for m in ms]
                cur.send("Report", r, attrs.initiator, items=items, delayed=True)
                for m in ms:
                    rep = self._encode(self.sessions[m.session_id], m)
                    rec.reports.append(ReportEntry(r, m.session_id, m.exchange_id, "measurement", rep))
        else:
            rec.errors.append("reporting phase skipped: no earlier measurement pending")
        for m in current:
            self._pending.setdefault((attrs.session_id, m.sta_id), []).append(m)

    def _threshold(self, attrs, rec, cur, thresholds) -> list[int]:
        if not self.profile(attrs.initiator).tx_capable:
            raise RoleError(f"threshold reporting needs a sensing TX initiator; STA {attrs.initiator} cannot transmit")
        current = [m for m in rec.measurements if m.direction == "SI2SR"]
        if not current:
            rec.errors.append("reporting phase skipped: no responder measurement in this exchange")
            return []
        rec.phases_executed.append("reporting")
        variations: dict[int, float] = {}
        for m in current:
            key = (attrs.session_id, m.sta_id, m.direction)
            csi = self._as_csi(m.data)
            prev = self._last_csi.get(key)
            # Without a previous measurement the variation is maximal.
            variations[m.sta_id] = 1.0 if prev is None or csi is None else csi_variation(csi, prev)
            if csi is not None:
                self._last_csi[key] = csi
        th = {s: (thresholds[s] if thresholds and s in thresholds else self.profile(s).csi_threshold) for s in variations}
        cur.send("ReportTrigger", attrs.initiator, BROADCAST, subphase="variation", sta_list=list(variations))
        for sta, v in variations.items():
            cur.send("VariationReport", sta, attrs.initiator, variation=v)
            rec.reports.append(ReportEntry(sta, attrs.session_id, rec.exchange_id, "variation", None, v))
        chosen = select_reporters(variations, th)
        if chosen:
            cur.send("ReportTrigger", attrs.initiator, BROADCAST, subphase="measurement", sta_list=chosen)
            for m in current:
                if m.sta_id in chosen:
                    cur.send("Report", m.sta_id, attrs.initiator, items=[[attrs.session_id, m.exchange_id]])
                    rec.reports.append(ReportEntry(m.sta_id, attrs.session_id, m.exchange_id, "measurement", self._encode(attrs, m)))
        return chosen

    def run_threshold_reporting(self, session_id: int, record: ExchangeRecord, thresholds: Mapping[int, float] | None = None) -> list[int]:
        """Two-subphase threshold reporting appended to ``record``.

        Every measuring responder sends its CSI variation; those whose
        variation is at least their threshold then send measurement reports.
        Returns the reporting responders.
        """
        attrs = self._session(session_id)
        start = (record.trace.entries[-1].end_ns + self.sifs_ns) if len(record.trace) else max(self.now_ns, record.start_ns)
        cur = _Cursor(self, record, start, self.sifs_ns, self.airtime)
        chosen = self._threshold(attrs, record, cur, thresholds)
        self._finish(session_id, cur)
        return chosen

    # ------------------------------------------------------------------
    # non-trigger-based exchange

    def run_non_tb_exchange(self, session_id: int, initiator_role: str = "both", hook: ChannelHook | None = None) -> ExchangeRecord:
        """NDPA, then SI2SR and SR2SI NDPs, then the SI2SR feedback if any.

        The NDP whose measurement nobody needs is sent at minimum length.
        """
        attrs = self._session(session_id)
        init = self.profile(attrs.initiator)
        if init.is_ap:
            raise RoleError(f"non-trigger-based exchanges need a non-AP initiator; STA {init.sta_id} is an AP")
        if len(attrs.responders) != 1 or not self.profile(attrs.responders[0]).is_ap:
            raise RoleError("non-trigger-based exchanges need exactly one AP responder")
        if initiator_role not in ("tx", "rx", "both"):
            raise ConfigurationError(f"initiator_role must be tx, rx or both, got {initiator_role!r}")
        ap = attrs.responders[0]
        agreed = self.capabilities[(init.sta_id, ap)]
        need = {"tx": "rx", "rx": "tx", "both": "both"}[initiator_role]
        if not agreed.allows(need):
            raise RoleError(f"initiator role {initiator_role!r} is not supported by the agreed capabilities")
        hook = hook or flat_channel_hook
        start = max(self.now_ns, self._next_start[session_id])
        rec = self._new_record(session_id, start)
        rec.exchange_index = rec.exchange_id
        cur = _Cursor(self, rec, start, self.sifs_ns, self.airtime)
        i_tx = initiator_role in ("tx", "both")
        i_rx = initiator_role in ("rx", "both")

        rec.phases_executed.append("ndpa_sounding")
        cur.send("SensingNDPA", init.sta_id, ap)
        si2sr = cur.send("NDP_SI2SR", init.sta_id, ap, **({} if i_tx else {"min_length": True}), dur_ns=None if i_tx else self.ndp_min_ns)
        if i_tx:
            self._measure(rec, hook, init.sta_id, ap, "SI2SR", si2sr.t_ns)
        sr2si = cur.send("NDP_SR2SI", ap, init.sta_id, **({} if i_rx else {"min_length": True}), dur_ns=None if i_rx else self.ndp_min_ns)
        if i_rx:
            self._measure(rec, hook, ap, init.sta_id, "SR2SI", sr2si.t_ns)
        if i_tx:
            rec.phases_executed.append("reporting")
            m = rec.measured_by(ap)[0]
            cur.send("Report", ap, init.sta_id, items=[[session_id, rec.exchange_id]])
            rec.reports.append(ReportEntry(ap, session_id, rec.exchange_id, "measurement", self._encode(attrs, m)))
        self._next_start[session_id] = start + round(attrs.schedule * 1e9)
        self._finish(session_id, cur)
        return rec

    # ------------------------------------------------------------------
    # DMG bursts

    def run_dmg_burst(
        self,
        session_id: int,
        exchange_type: str,
        schedule: DmgBurstSchedule,
        hook: ChannelHook | None = None,
        variant: str | None = None,
        t0: float | None = None,
        n_directions: int = 4,
        ap_location: Sequence[float] = (0.0, 0.0, 0.0),
    ) -> list[ExchangeRecord]:
        """Run ``n_bursts x n_exchanges`` DMG exchanges of one type.

        Exchange e of burst b starts at ``t0 + b*inter + e*intra`` exactly.

        Variants: ``bistatic`` takes ``"tx_initiator"`` (default) or
        ``"rx_initiator"``; ``coord_monostatic`` takes ``"sequential"``
        (default) or ``"simultaneous"``; ``passive`` takes ``"beacon"``
        (default) or ``"abft"``.
        """
        attrs = self._session(session_id)
        if exchange_type not in DMG_TYPES:
            raise ConfigurationError(f"unknown DMG exchange type {exchange_type!r}")
        self._check_dmg(attrs, exchange_type, variant)
        hook = hook or flat_channel_hook
        t0_ns = max(self.now_ns, self._next_start[session_id]) if t0 is None else round(t0 * 1e9)
        intra_ns = round(schedule.intra_burst_interval * 1e9)
        out = []
        for b, e, off in schedule.offsets_ns():
            start = t0_ns + off
            rec = self._new_record(session_id, start)
            rec.burst_index, rec.exchange_index = b, e
            cur = _Cursor(self, rec, start, self.dmg_sifs_ns, self.dmg_airtime)
            runner = getattr(self, f"_dmg_{exchange_type}")
            runner(attrs, rec, cur, hook, variant, n_directions=n_directions, ap_location=tuple(ap_location))
            if cur.last_end_ns > start + intra_ns and schedule.n_exchanges > 1:
                raise ProtocolError(
                    f"exchange {rec.exchange_id} lasts {cur.last_end_ns - start} ns, longer than the intra-burst interval"
                )
            self._finish(session_id, cur)
            out.append(rec)
        last_burst_start = t0_ns + (schedule.n_bursts - 1) * round(schedule.inter_burst_interval * 1e9)
        self._next_start[session_id] = max(self.now_ns, last_burst_start + round(schedule.inter_burst_interval * 1e9))
        return out

    def _check_dmg(self, attrs: SessionAttrs, kind: str, variant: str | None) -> None:
        stas = [attrs.initiator, *attrs.responders]
        for s in stas:
            if not self.profile(s).dmg_capable:
                raise RoleError(f"STA {s} is not DMG capable")
        n = len(attrs.responders)
        init = self.profile(attrs.initiator)
        if kind == "monostatic":
            if not (init.tx_capable and init.rx_capable):
                raise RoleError("monostatic sensing needs an initiator that both transmits and receives")
        elif kind == "bistatic":
            if n != 1:
                raise RoleError(f"bistatic sensing needs exactly one responder, got {n}")
            v = variant or "tx_initiator"
            if v not in ("tx_initiator", "rx_initiator"):
                raise ConfigurationError(f"unknown bistatic variant {v!r}")
            need = "rx" if v == "tx_initiator" else "tx"
            if not self.capabilities[(attrs.initiator, attrs.responders[0])].allows(need):
                raise RoleError(f"bistatic {v} needs the responder in role {need!r}")
        elif kind == "multistatic":
            if not 2 <= n <= 8:
                raise RoleError(f"multistatic sensing needs 2..8 responders, got {n}")
            if not init.tx_capable:
                raise RoleError("multistatic sensing needs a transmitting initiator")
            for r in attrs.responders:
                if not self.profile(r).rx_capable:
                    raise RoleError(f"multistatic responder STA {r} cannot receive")
        elif kind in ("coord_monostatic", "coord_bistatic"):
            if n < 1:
                raise RoleError(f"{kind} needs at least one responder")
            for r in attrs.responders:
                p = self.profile(r)
                if kind == "coord_monostatic" and not (p.tx_capable and p.rx_capable):
                    raise RoleError(f"STA {r} cannot self-sound")
                if kind == "coord_bistatic" and not p.rx_capable:
                    raise RoleError(f"STA {r} cannot receive")
        elif kind == "passive":
            if not init.is_ap:
                raise RoleError("passive sensing is initiated by the AP that sweeps beacons")
            if (variant or "beacon") not in ("beacon", "abft"):
                raise ConfigurationError(f"unknown passive variant {variant!r}")

    def _brp_ppdu(self, p_count: int = 1, m_count: int = 2):
        spec = PpduSpec("brp_with_trn", p_count=p_count, m_count=m_count, awv_schedule=tuple(f"awv{i}" for i in range(m_count)))
        return assemble_sensing_ppdu(spec, sample_rate=DMG_CHIP_RATE)

    def _dmg_monostatic(self, attrs, rec, cur, hook, variant, **_):
        rec.phases_executed.append("sounding")
        ppdu = self._brp_ppdu()
        e = cur.send("BRP", attrs.initiator, attrs.initiator, trn="P1M2", self_sounding=True)
        rec.ppdu = ppdu
        self._measure(rec, hook, attrs.initiator, attrs.initiator, "mono", e.t_ns, ppdu=ppdu)

    def _dmg_bistatic(self, attrs, rec, cur, hook, variant, **_):
        v = variant or "tx_initiator"
        i, r = attrs.initiator, attrs.responders[0]
        ppdu = self._brp_ppdu()
        rec.ppdu = ppdu
        rec.phases_executed.append("initiation")
        cur.send("Poll", i, r, variant=v)
        cur.send("PollResponse", r, i)
        rec.phases_executed.append("sounding")
        if v == "tx_initiator":
            e = cur.send("BRP", i, r, trn="P1M2")
            m = self._measure(rec, hook, i, r, "SI2SR", e.t_ns, ppdu=ppdu)
            rec.phases_executed.append("reporting")
            cur.send("BRP", r, i, feedback=True)
            rec.reports.append(ReportEntry(r, attrs.session_id, rec.exchange_id, "measurement", self._encode(attrs, m)))
        else:
            e = cur.send("BRP", r, i, trn="P1M2")
            self._measure(rec, hook, r, i, "SR2SI", e.t_ns, ppdu=ppdu)

    def _dmg_multistatic(self, attrs, rec, cur, hook, variant, **_):
        i, resp = attrs.initiator, list(attrs.responders)
        rec.phases_executed.append("initiation")
        cur.send("Poll", i, BROADCAST, polled=resp)
        for r in resp:
            cur.send("PollResponse", r, i)
        rec.phases_executed.append("sounding")
        sync_idx = tuple(range(1, len(resp) + 1))
        spec = PpduSpec("multistatic_sensing", p_count=len(resp), m_count=0, sync_sta_indices=sync_idx)
        ppdu = assemble_sensing_ppdu(spec, tx_sta_index=i, sample_rate=DMG_CHIP_RATE)
        rec.ppdu = ppdu
        dur = int(np.ceil(len(ppdu.sequence) / DMG_CHIP_RATE * 1e9))
        e = cur.send("SyncPpdu", i, BROADCAST, dur_ns=dur, sync_fields=len(ppdu.fields_named("sync")), sync_map={str(r): k for r, k in zip(resp, sync_idx)})
        ms = [self._measure(rec, hook, i, r, "SI2SR", e.t_ns, ppdu=ppdu) for r in resp]
        rec.phases_executed.append("reporting")
        for r, m in zip(resp, ms):
            cur.send("ReportTrigger", i, r, order=resp.index(r) + 1)
            cur.send("Report", r, i, items=[[attrs.session_id, rec.exchange_id]])
            rec.reports.append(ReportEntry(r, attrs.session_id, rec.exchange_id, "measurement", self._encode(attrs, m)))

    def _dmg_coord_monostatic(self, attrs, rec, cur, hook, variant, **_):
        v = variant or "sequential"
        if v not in ("sequential", "simultaneous"):
            raise ConfigurationError(f"unknown coord_monostatic variant {v!r}")
        i, resp = attrs.initiator, list(attrs.responders)
        rec.phases_executed.append("initiation")
        schedule = {str(r): f"beam{k}" for k, r in enumerate(resp)}
        cur.send("Poll", i, BROADCAST, beam_schedule=schedule)
        for r in resp:
            cur.send("PollResponse", r, i)
        rec.phases_executed.append("sounding")
        ppdu = self._brp_ppdu()
        rec.ppdu = ppdu
        ms = []
        if v == "sequential":
            for r in resp:
                e = cur.send("BRP", r, r, self_sounding=True, beam=schedule[str(r)])
                ms.append(self._measure(rec, hook, r, r, "mono", e.t_ns, ppdu=ppdu))
        else:
            at = cur.next_ns
            for r in resp:
                e = cur.send("BRP", r, r, at_ns=at, self_sounding=True, beam=schedule[str(r)])
                ms.append(self._measure(rec, hook, r, r, "mono", e.t_ns, ppdu=ppdu))
        rec.phases_executed.append("reporting")
        for r, m in zip(resp, ms):
            cur.send("ReportTrigger", i, r)
            cur.send("Report", r, i, items=[[attrs.session_id, rec.exchange_id]])
            rec.reports.append(ReportEntry(r, attrs.session_id, rec.exchange_id, "measurement", self._encode(attrs, m)))

    def _dmg_coord_bistatic(self, attrs, rec, cur, hook, variant, **_):
        i, resp = attrs.initiator, list(attrs.responders)
        rec.phases_executed.append("initiation")
        cur.send("Poll", i, BROADCAST, polled=resp)
        for r in resp:
            cur.send("PollResponse", r, i)
        rec.phases_executed.append("sounding")
        ppdu = self._brp_ppdu()
        rec.ppdu = ppdu
        ms = []
        for r in resp:
            e = cur.send("BRP", i, r, trn="P1M2")
            ms.append(self._measure(rec, hook, i, r, "SI2SR", e.t_ns, ppdu=ppdu))
        rec.phases_executed.append("reporting")
        for r, m in zip(resp, ms):
            cur.send("ReportTrigger", i, r)
            cur.send("Report", r, i, items=[[attrs.session_id, rec.exchange_id]])
            rec.reports.append(ReportEntry(r, attrs.session_id, rec.exchange_id, "measurement", self._encode(attrs, m)))

    def _dmg_passive(self, attrs, rec, cur, hook, variant, n_directions=4, ap_location=(0.0, 0.0, 0.0)):
        v = variant or "beacon"
        ap, stas = attrs.initiator, list(attrs.responders)
        dirs = list(range(n_directions))
        rec.phases_executed.append("sounding")
        if v == "beacon":
            for d in dirs:
                e = cur.send("Beacon", ap, BROADCAST, direction=d)
                for s in stas:
                    self._measure(rec, hook, ap, s, f"beacon:{d}", e.t_ns)
        else:
            for s in stas:
                for d in dirs:
                    e = cur.send("SSW", s, ap, direction=d)
                    self._measure(rec, hook, s, ap, f"ssw:{d}", e.t_ns)
        rec.phases_executed.append("reporting")
        for s in stas:
            cur.send("InfoRequest", s, ap)
            cur.send("InfoResponse", ap, s, beacon_directions=dirs, ap_location=list(ap_location))

    # ------------------------------------------------------------------
    # sensing by proxy

    def run_sbp(
        self,
        initiator: int,
        proxy: int,
        responders: Sequence[int],
        session_id: int,
        n_exchanges: int = 1,
        join_as_responder: bool = False,
        accept: bool | None = None,
        hook: ChannelHook | None = None,
        phase_plan: Sequence[str] = TB_PHASES,
        **attrs_kwargs,
    ) -> SbpResult:
        """Ask ``proxy`` to sense on the initiator's behalf and forward reports.

        The proxy accepts when it is SBP capable (or ``accept`` overrides).
        When accepted it runs ``n_exchanges`` trigger-based exchanges with the
        responders (plus the initiator when ``join_as_responder``), forwards
        every collected measurement report in an SbpReport and terminates
        the session.
        """
        ini, px = self.profile(initiator), self.profile(proxy)
        if ini.is_ap:
            raise RoleError("the SBP initiator must be a non-AP STA")
        if not px.is_ap:
            raise RoleError(f"SBP proxy STA {proxy} is not an AP")
        sbp_trace = EventTrace()
        head = ExchangeRecord(0, session_id)
        cur = _Cursor(self, head, self.now_ns, self.sifs_ns, self.airtime)
        cur.send("SbpRequest", initiator, proxy, responders=list(responders), join=join_as_responder)
        ok = px.sbp_capable if accept is None else bool(accept)
        cur.send("SbpResponse", proxy, initiator, accepted=ok)
        self.now_ns = cur.last_end_ns
        sbp_trace.extend(head.trace)
        if not ok:
            return SbpResult(False, None, [], [], sbp_trace)

        members = list(responders) + ([initiator] if join_as_responder else [])
        for r in members:
            self.exchange_capabilities(proxy, r)
        self.setup_session(SessionAttrs(session_id, proxy, tuple(members), **attrs_kwargs))
        records = []
        for _ in range(n_exchanges):
            rec = self.run_tb_exchange(session_id, phase_plan, hook)
            records.append(rec)
            sbp_trace.extend(rec.trace)
        collected = [r for rec in records for r in rec.reports if r.kind == "measurement"]
        fwd = ExchangeRecord(0, session_id)
        cur = _Cursor(self, fwd, self.now_ns + self.sifs_ns, self.sifs_ns, self.airtime)
        forwarded = []
        for r in collected:
            cur.send("SbpReport", proxy, initiator, source=r.source, items=[[r.session_id, r.exchange_id]])
            forwarded.append(replace(r))
        self.now_ns = max(self.now_ns, cur.last_end_ns)
        sbp_trace.extend(fwd.trace)
        n_before = len(self.trace)
        self.terminate_session(session_id)
        sbp_trace.entries.extend(self.trace.entries[n_before:])
        return SbpResult(True, session_id, records, forwarded, sbp_trace)
