"""Sensing MAC procedures on an ideal, contention-free medium."""

from .engine import (
    DMG_SIFS_NS,
    SIFS_NS,
    SensingEngine,
    flat_channel_hook,
    select_reporters,
)
from .trace import BROADCAST, FRAME_KINDS, EventTrace, TraceEntry, read_jsonl
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
    always,
    never,
)

__all__ = [
    "BROADCAST",
    "DMG_SIFS_NS",
    "DMG_TYPES",
    "FRAME_KINDS",
    "SIFS_NS",
    "TB_PHASES",
    "AgreedCapabilities",
    "DmgBurstSchedule",
    "EventTrace",
    "ExchangeRecord",
    "LinkContext",
    "Measurement",
    "ReportEntry",
    "SbpResult",
    "SensingEngine",
    "SessionAttrs",
    "StaProfile",
    "TraceEntry",
    "always",
    "flat_channel_hook",
    "never",
    "read_jsonl",
    "select_reporters",
]
