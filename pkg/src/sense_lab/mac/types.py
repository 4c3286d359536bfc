"""Station profiles, session attributes, schedules and exchange records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from ..csi_codec import FeedbackReport, QuantConfig
from ..errors import ConfigurationError
from .trace import EventTrace

ROLES = ("tx", "rx", "both")
REPORTING_MODES = ("immediate", "delayed", "threshold")
TB_PHASES = ("polling", "ndpa_sounding", "tf_sounding", "reporting")
DMG_TYPES = ("monostatic", "bistatic", "multistatic", "coord_monostatic", "coord_bistatic", "passive")


def always(_index: int) -> bool:
    return True


def never(_index: int) -> bool:
    return False


@dataclass(frozen=True)
class StaProfile:
    """A station taking part in sensing.

    ``responsiveness`` maps the exchange index (1-based, per session) to
    whether the station answers a poll in that exchange.
    """

    sta_id: int
    mac_address: str = ""
    identifier: str = ""
    is_ap: bool = False
    tx_capable: bool = True
    rx_capable: bool = True
    dmg_capable: bool = False
    sbp_capable: bool = False
    responsiveness: Callable[[int], bool] = always
    csi_threshold: float = 0.0

    def __post_init__(self):
        if not (self.tx_capable or self.rx_capable):
            raise ConfigurationError(f"STA {self.sta_id} can neither transmit nor receive sensing PPDUs")
        if not 0.0 <= self.csi_threshold <= 1.0:
            raise ConfigurationError(f"STA {self.sta_id} csi_threshold must lie in [0, 1]")
        if not self.mac_address:
            object.__setattr__(self, "mac_address", f"02:00:00:00:00:{self.sta_id:02x}")
        if not self.identifier:
            object.__setattr__(self, "identifier", f"AID {self.sta_id}")


@dataclass(frozen=True)
class AgreedCapabilities:
    """Result of a capability exchange.

    ``responder_roles`` holds the sensing roles the responder may take with
    this initiator: ``"rx"`` needs initiator TX and responder RX, ``"tx"``
    needs responder TX and initiator RX.
    """

    initiator: int
    responder: int
    responder_roles: frozenset
    dmg: bool

    def allows(self, role: str) -> bool:
        need = {"tx": {"tx"}, "rx": {"rx"}, "both": {"tx", "rx"}}[role]
        return need <= self.responder_roles


@dataclass(frozen=True)
class SessionAttrs:
    session_id: int
    initiator: int
    responders: tuple[int, ...]
    roles: dict = field(default_factory=dict)
    report_type: str = "full_csi"
    reporting: str = "immediate"
    schedule: float = 0.1
    quant: QuantConfig | None = field(default_factory=lambda: QuantConfig("simplified_linear", n_b=8))
    tap_count: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "responders", tuple(int(r) for r in self.responders))
        roles = {int(k): v for k, v in dict(self.roles).items()}
        for r in self.responders:
            roles.setdefault(r, "both")
        object.__setattr__(self, "roles", roles)
        if len(set(self.responders)) != len(self.responders):
            raise ConfigurationError(f"session {self.session_id} lists a responder twice")
        if self.initiator in self.responders:
            raise ConfigurationError(f"session {self.session_id}: the initiator cannot also be a responder")
        bad = {k: v for k, v in roles.items() if v not in ROLES}
        if bad:
            raise ConfigurationError(f"session {self.session_id}: invalid roles {bad}")
        if self.reporting not in REPORTING_MODES:
            raise ConfigurationError(f"unknown reporting mode {self.reporting!r}")
        if self.schedule < 0:
            raise ConfigurationError("schedule must be nonnegative")

    def role(self, sta: int) -> str:
        return self.roles[sta]


@dataclass(frozen=True)
class DmgBurstSchedule:
    n_exchanges: int
    intra_burst_interval: float
    inter_burst_interval: float
    n_bursts: int = 1

    def __post_init__(self):
        if self.n_exchanges < 1 or self.n_bursts < 1:
            raise ConfigurationError("a burst schedule needs at least one exchange and one burst")
        if not 0 < self.intra_burst_interval < self.inter_burst_interval:
            raise ConfigurationError(
                f"need 0 < intra ({self.intra_burst_interval}) < inter ({self.inter_burst_interval})"
            )

    def offsets_ns(self) -> list[tuple[int, int, int]]:
        """(burst, exchange, offset ns) for every scheduled exchange."""
        intra = round(self.intra_burst_interval * 1e9)
        inter = round(self.inter_burst_interval * 1e9)
        return [(b, e, b * inter + e * intra) for b in range(self.n_bursts) for e in range(self.n_exchanges)]


@dataclass(frozen=True)
class LinkContext:
    """Arguments handed to a channel hook for one sounding."""

    session_id: int
    exchange_id: int
    tx_sta: int
    rx_sta: int
    direction: str
    time: float
    burst_index: int = 0
    exchange_index: int = 0
    ppdu: object = None


@dataclass(frozen=True, eq=False)
class Measurement:
    sta_id: int
    tx_sta: int
    direction: str
    data: object
    time: float
    session_id: int
    exchange_id: int


@dataclass(frozen=True, eq=False)
class ReportEntry:
    """One report: a measurement report or a CSI-variation value."""

    source: int
    session_id: int
    exchange_id: int
    kind: str = "measurement"
    report: FeedbackReport | None = None
    value: float | None = None


@dataclass(eq=False)
class ExchangeRecord:
    exchange_id: int
    session_id: int
    phases_executed: list = field(default_factory=list)
    measurements: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    trace: EventTrace = field(default_factory=EventTrace)
    start_ns: int = 0
    burst_index: int = 0
    exchange_index: int = 0
    ppdu: object = None
    errors: list = field(default_factory=list)

    @property
    def start_time(self) -> float:
        return self.start_ns / 1e9

    def measured_by(self, sta: int) -> list[Measurement]:
        return [m for m in self.measurements if m.sta_id == sta]

    def reporters(self, kind: str = "measurement") -> list[int]:
        return [r.source for r in self.reports if r.kind == kind]


@dataclass(eq=False)
class SbpResult:
    accepted: bool
    session_id: int | None
    records: list
    forwarded: list
    trace: EventTrace
