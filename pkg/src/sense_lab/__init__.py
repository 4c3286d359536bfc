"""Link-level toolkit for WLAN sensing.

Modules: ``waveform`` (Golay, CE and Sync sequences, sensing PPDUs),
``ambiguity`` (AAF/CAF and low-ambiguity-zone metrics), ``csi_codec`` (CSI
quantizers and feedback reports), ``channel`` (indoor image-method channel),
``mac`` (sensing procedures and frame traces), ``estimation`` (range-Doppler
maps, CFAR, RMSE harness) and ``cli``.
"""

from .errors import (
    ConfigurationError,
    ConflictError,
    DegenerateInputError,
    FormatError,
    NegotiationError,
    NotFoundError,
    OutOfRangeError,
    ProtocolError,
    RoleError,
    SenseLabError,
    StructuralError,
    ValidationError,
)

__all__ = [
    "ConfigurationError",
    "ConflictError",
    "DegenerateInputError",
    "FormatError",
    "NegotiationError",
    "NotFoundError",
    "OutOfRangeError",
    "ProtocolError",
    "RoleError",
    "SenseLabError",
    "StructuralError",
    "ValidationError",
]
