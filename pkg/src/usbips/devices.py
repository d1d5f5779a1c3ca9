"""Device identity: raw bus descriptors, decoding, and interest-class mapping.

A device presents a :class:`RawDescriptor` on the simulated bus.  ``decode``
turns it into an immutable :class:`DeviceInfo` whose ``device_key`` is the
canonical identity every other module keys on.  Classification maps each
interface GUID onto one of four interest classes; unmapped GUIDs fall back
to ``OTHER_USB`` so the mapping is total.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from enum import Enum

from .errors import FieldTooLong, MalformedDescriptor


class DeviceClass(Enum):
    """The four device categories the detectors care about."""

    HID = "hid"
    STORAGE = "storage"
    NETWORK = "network"
    OTHER_USB = "other_usb"


class BusType(Enum):
    USB = "usb"
    IEEE1394 = "ieee1394"
    CDROM = "cdrom"
    UNKNOWN = "unknown"


# Interface-class GUIDs registered for device notifications.
GUID_HID = "4d1e55b2-f16f-11cf-88cb-001111000030"
GUID_VOLUME = "53f5630d-b6bf-11d0-94f2-00a0c91efb8b"
GUID_NET = "cac88484-7515-4c03-82e6-71a87abac361"
GUID_USB_DEVICE = "a5dcbf10-6530-11d2-901f-00c04fb951ed"

#: GUID -> interest class.  Extra categories can be layered on top via the
#: ``guid_map`` argument of :func:`classify` without touching this table.
DEFAULT_GUID_CLASSES: dict[str, DeviceClass] = {
    GUID_HID: DeviceClass.HID,
    GUID_VOLUME: DeviceClass.STORAGE,
    GUID_NET: DeviceClass.NETWORK,
    GUID_USB_DEVICE: DeviceClass.OTHER_USB,
}

#: Reserved separator for canonical device keys; rejected in descriptor
#: strings, so keys are unambiguous.
KEY_SEPARATOR = "\x1f"
MAX_DEVICE_KEY = 256

# Buffer caps for descriptor string fields.
FIELD_CAPS = {
    "vendor_id": 64,
    "product_id": 64,
    "product_rev": 64,
    "serial_number": 64,
    "volume_name": 64,
    "volume_serial": 32,
    "volume_fs": 10,
    "drive_letter": 32,
    "description": 512,
    "full_serial": 512,
}

_BUS_SUFFIX = {
    BusType.USB: "USB Device",
    BusType.IEEE1394: "IEEE 1394 Device",
    BusType.CDROM: "CD-ROM Device",
    BusType.UNKNOWN: "SCSI Device",
}


def normalize_guid(text: str) -> str:
    """Canonical lowercase hex-grouped form; accepts optional braces."""
    try:
        return str(uuid.UUID(text.strip().strip("{}")))
    except (ValueError, AttributeError) as exc:
        raise MalformedDescriptor(f"not a GUID: {text!r}") from exc


@dataclass(frozen=True)
class ClassGuid:
    """128-bit interface-class identifier in canonical text form."""

    value: str

    def __post_init__(self):
        object.__setattr__(self, "value", normalize_guid(self.value))

    def device_class(self, guid_map: dict[str, DeviceClass] | None = None) -> DeviceClass:
        table = DEFAULT_GUID_CLASSES if guid_map is None else guid_map
        return table.get(self.value, DeviceClass.OTHER_USB)


@dataclass(frozen=True)
class InterfaceFunction:
    """One function of a (possibly composite) device."""

    class_guid: ClassGuid
    function_index: int = 0


@dataclass(frozen=True)
class RawDescriptor:
    """Identity data as presented on the bus, before decoding.

    Construction is permissive; ``decode`` enforces the invariants so tests
    and the simulator can build malformed descriptors on purpose.
    """

    interfaces: tuple[InterfaceFunction, ...] = ()
    bus_type: BusType = BusType.USB
    vendor_id: str = ""
    product_id: str = ""
    product_rev: str = ""
    serial_number: str = ""
    volume_name: str = ""
    volume_serial: str = ""
    volume_fs: str = ""
    drive_letter: str = ""
    description: str = ""
    full_serial: str = ""

    def __post_init__(self):
        object.__setattr__(self, "interfaces", tuple(self.interfaces))


@dataclass(frozen=True)
class DeviceInfo:
    """Decoded, validated device identity."""

    classes: frozenset[DeviceClass]
    device_key: str
    device_name: str
    bus_type: BusType
    vendor_id: str
    product_id: str
    product_rev: str
    serial_number: str
    volume_name: str = ""
    volume_serial: str = ""
    volume_fs: str = ""
    drive_letter: str = ""
    description: str = ""
    full_serial: str = ""

    def is_usb_device(self) -> bool:
        return self.bus_type is BusType.USB

    def raw_equivalent(self) -> RawDescriptor:
        """Rebuild a descriptor that decodes to the same fields."""
        guid_of = {
            DeviceClass.HID: GUID_HID,
            DeviceClass.STORAGE: GUID_VOLUME,
            DeviceClass.NETWORK: GUID_NET,
            DeviceClass.OTHER_USB: GUID_USB_DEVICE,
        }
        interfaces = tuple(
            InterfaceFunction(ClassGuid(guid_of[c]), i)
            for i, c in enumerate(sorted(self.classes, key=lambda c: c.value))
        )
        return RawDescriptor(
            interfaces=interfaces,
            bus_type=self.bus_type,
            vendor_id=self.vendor_id,
            product_id=self.product_id,
            product_rev=self.product_rev,
            serial_number=self.serial_number,
            volume_name=self.volume_name,
            volume_serial=self.volume_serial,
            volume_fs=self.volume_fs,
            drive_letter=self.drive_letter,
            description=self.description,
            full_serial=self.full_serial,
        )


def _trim(value: str) -> str:
    # Trailing-NUL padding trim is the only string normalization applied.
    return value.rstrip("\x00")


def _check_field(name: str, value: str) -> str:
    value = _trim(value)
    cap = FIELD_CAPS[name]
    if len(value) > cap:
        raise FieldTooLong(f"{name} is {len(value)} chars, cap {cap}")
    if any(ch < " " for ch in value):
        raise MalformedDescriptor(f"{name} contains control characters")
    return value


def classify(
    desc: RawDescriptor, guid_map: dict[str, DeviceClass] | None = None
) -> frozenset[DeviceClass]:
    """Union of per-interface class mappings; never empty."""
    if not desc.interfaces:
        raise MalformedDescriptor("descriptor exposes no interfaces")
    return frozenset(itf.class_guid.device_class(guid_map) for itf in desc.interfaces)


def make_device_key(
    bus_type: BusType,
    vendor_id: str,
    product_id: str,
    product_rev: str,
    serial_number: str,
) -> str:
    """Canonical identity: the five identity fields joined by a reserved
    separator.  Equal keys iff the five fields are equal."""
    key = KEY_SEPARATOR.join(
        [bus_type.value, vendor_id, product_id, product_rev, serial_number]
    )
    if len(key) > MAX_DEVICE_KEY:
        raise FieldTooLong(f"device key is {len(key)} chars, cap {MAX_DEVICE_KEY}")
    return key


def bus_key(desc: RawDescriptor) -> str:
    """Lenient identity for bus bookkeeping; unlike ``make_device_key`` this
    never rejects, so even malformed devices can be attached and unplugged.
    Agrees with ``decode(desc).device_key`` whenever decoding succeeds."""
    return KEY_SEPARATOR.join(
        [
            desc.bus_type.value,
            _trim(desc.vendor_id),
            _trim(desc.product_id),
            _trim(desc.product_rev),
            _trim(desc.serial_number),
        ]
    )


def _display_name(desc: RawDescriptor) -> str:
    parts = [p for p in (desc.vendor_id, desc.product_id, desc.product_rev) if p]
    parts.append(_BUS_SUFFIX[desc.bus_type])
    return " ".join(parts)


def decode(
    desc: RawDescriptor, guid_map: dict[str, DeviceClass] | None = None
) -> DeviceInfo:
    """Decode a raw descriptor into device information strings.

    Fields are copied verbatim apart from trailing-padding trim.  Raises
    ``MalformedDescriptor`` for a USB-bus device with an empty serial and
    ``FieldTooLong`` for any over-length field.
    """
    fields = {name: _check_field(name, getattr(desc, name)) for name in FIELD_CAPS}
    if desc.bus_type is BusType.USB and not fields["serial_number"]:
        raise MalformedDescriptor("USB device presented an empty serial number")
    classes = classify(desc, guid_map)
    key = make_device_key(
        desc.bus_type,
        fields["vendor_id"],
        fields["product_id"],
        fields["product_rev"],
        fields["serial_number"],
    )
    return DeviceInfo(
        classes=classes,
        device_key=key,
        device_name=_display_name(desc),
        bus_type=desc.bus_type,
        **fields,
    )


def usbstor_path(vendor: str, product: str, rev: str, serial: str, instance: int = 0) -> str:
    """Build a bus-qualified serial path in the registry style used by the
    allowlist tables, e.g. ``USBSTOR\\Disk&Ven_X&Prod_Y&Rev_1.00\\123&0``."""
    middle = f"Disk&Ven_{vendor}&Prod_{product}"
    if rev:
        middle += f"&Rev_{rev}"
    return f"USBSTOR\\{middle}\\{serial}&{instance}"


# --- JSON forms (scenario files and log payloads) -------------------------

def descriptor_to_json(desc: RawDescriptor) -> dict:
    doc: dict = {
        "interfaces": [
            {"class_guid": i.class_guid.value, "function_index": i.function_index}
            for i in desc.interfaces
        ],
        "bus_type": desc.bus_type.value,
    }
    for name in FIELD_CAPS:
        doc[name] = getattr(desc, name)
    return doc


def descriptor_from_json(doc: dict) -> RawDescriptor:
    try:
        interfaces = tuple(
            InterfaceFunction(ClassGuid(i["class_guid"]), int(i.get("function_index", n)))
            for n, i in enumerate(doc["interfaces"])
        )
        bus = BusType(doc.get("bus_type", "usb"))
    except (KeyError, TypeError) as exc:
        raise MalformedDescriptor(f"bad descriptor document: {exc}") from exc
    strings = {name: str(doc.get(name, "")) for name in FIELD_CAPS}
    return RawDescriptor(interfaces=interfaces, bus_type=bus, **strings)


def info_to_json(info: DeviceInfo) -> dict:
    return {
        "classes": sorted(c.value for c in info.classes),
        "device_key": info.device_key,
        "device_name": info.device_name,
        "bus_type": info.bus_type.value,
        "vendor_id": info.vendor_id,
        "product_id": info.product_id,
        "product_rev": info.product_rev,
        "serial_number": info.serial_number,
        "volume_name": info.volume_name,
        "volume_serial": info.volume_serial,
        "volume_fs": info.volume_fs,
        "drive_letter": info.drive_letter,
        "description": info.description,
        "full_serial": info.full_serial,
    }


def info_from_json(doc: dict) -> DeviceInfo:
    return DeviceInfo(
        classes=frozenset(DeviceClass(c) for c in doc["classes"]),
        device_key=doc["device_key"],
        device_name=doc["device_name"],
        bus_type=BusType(doc["bus_type"]),
        vendor_id=doc["vendor_id"],
        product_id=doc["product_id"],
        product_rev=doc["product_rev"],
        serial_number=doc["serial_number"],
        volume_name=doc.get("volume_name", ""),
        volume_serial=doc.get("volume_serial", ""),
        volume_fs=doc.get("volume_fs", ""),
        drive_letter=doc.get("drive_letter", ""),
        description=doc.get("description", ""),
        full_serial=doc.get("full_serial", ""),
    )
