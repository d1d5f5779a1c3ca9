"""Shared fixtures: reference descriptors and small builders used across
the suite."""

from __future__ import annotations

import pytest

from usbips.bus import SimDevice, SimHost
from usbips.devices import (
    GUID_HID,
    GUID_NET,
    GUID_VOLUME,
    BusType,
    ClassGuid,
    InterfaceFunction,
    RawDescriptor,
)
from usbips.logs import AuditLog, tick_timestamp

JETFLASH_SERIAL = "USBSTOR\\Disk&Ven_JetFlash&Prod_Transcend_16GB&Rev_1.00\\2576240093&0"


def interface(guid: str, index: int = 0) -> InterfaceFunction:
    return InterfaceFunction(ClassGuid(guid), index)


def jetflash_descriptor(drive_letter: str = "F:\\") -> RawDescriptor:
    """The 16 GB flash drive every allowlist scenario keys on."""
    return RawDescriptor(
        interfaces=(interface(GUID_VOLUME),),
        bus_type=BusType.USB,
        vendor_id="JetFlash",
        product_id="Transcend_16GB",
        product_rev="1.00",
        serial_number="2576240093",
        volume_name="TRANSCEND",
        volume_serial="7039-3413",
        volume_fs="FAT32",
        drive_letter=drive_letter,
        description="USB flash drive",
        full_serial=JETFLASH_SERIAL,
    )


def keyboard_descriptor(serial: str = "KB001", vendor: str = "Cherry") -> RawDescriptor:
    return RawDescriptor(
        interfaces=(interface(GUID_HID),),
        bus_type=BusType.USB,
        vendor_id=vendor,
        product_id="MX-Board",
        product_rev="2.0",
        serial_number=serial,
        description="USB keyboard",
        full_serial=f"USB\\VID_{vendor}&PID_MXBOARD\\{serial}",
    )


def badusb_descriptor(serial: str = "DUCKY01") -> RawDescriptor:
    """Composite masquerade device: storage plus keyboard interfaces."""
    return RawDescriptor(
        interfaces=(interface(GUID_VOLUME, 0), interface(GUID_HID, 1)),
        bus_type=BusType.USB,
        vendor_id="Generic",
        product_id="Flash_Disk",
        product_rev="8.07",
        serial_number=serial,
        volume_serial="1111-2222",
        drive_letter="G:\\",
        full_serial=f"USBSTOR\\Disk&Ven_Generic&Prod_Flash_Disk&Rev_8.07\\{serial}&0",
    )


def wifi_descriptor(serial: str = "WIFI01") -> RawDescriptor:
    return RawDescriptor(
        interfaces=(interface(GUID_NET),),
        bus_type=BusType.USB,
        vendor_id="ASUS",
        product_id="USB-N10",
        product_rev="1.0",
        serial_number=serial,
        description="Wireless adapter",
        full_serial=f"USB\\VID_ASUS&PID_N10\\{serial}",
    )


@pytest.fixture
def host() -> SimHost:
    return SimHost()


@pytest.fixture
def audit(host) -> AuditLog:
    return AuditLog("client-a", clock=lambda: tick_timestamp(host.clock))


def make_device(descriptor: RawDescriptor, script=(), label="dev", adapter=None) -> SimDevice:
    return SimDevice(descriptor=descriptor, script=tuple(script), label=label, adapter=adapter)
