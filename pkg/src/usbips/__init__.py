"""usbips: desk-scale USB intrusion prevention.

A simulated host bus feeds a client pipeline -- device classification,
allowlist access control, behavior-based detection for HID, storage, and
network devices -- reporting into a central management server.  Scenario
files replay attack/defense experiments deterministically; see README.md.
"""

__version__ = "0.1.0"

from .devices import BusType, DeviceClass, DeviceInfo, RawDescriptor, classify, decode

__all__ = [
    "BusType",
    "DeviceClass",
    "DeviceInfo",
    "RawDescriptor",
    "classify",
    "decode",
    "__version__",
]
