"""Simulated host bus: device enumeration, plug/unplug notifications, and
deterministic replay of scripted device behavior on a virtual clock.

All notifications are delivered synchronously to subscribers in attach
order, so the classifier always sees a device before any of its scripted
actions fire.  One tick is one simulated second.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Union

from .devices import DeviceClass, RawDescriptor, bus_key, classify
from .errors import AlreadyAttached, NotAttached, ScriptClassMismatch
from .net_guard import AdapterConfig


class AccessKind(Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"


@dataclass(frozen=True)
class Keystroke:
    symbol: str
    at: int


@dataclass(frozen=True)
class FileAccess:
    path: str
    kind: AccessKind
    process_name: str
    process_id: int
    process_path: str
    at: int


@dataclass(frozen=True)
class NetConfigChange:
    new_config: AdapterConfig
    at: int


@dataclass(frozen=True)
class DnsAnswer:
    query: str
    a_record: str
    cname: str
    at: int


BehaviorAction = Union[Keystroke, FileAccess, NetConfigChange, DnsAnswer]

_ACTION_REQUIRES = {
    Keystroke: DeviceClass.HID,
    FileAccess: DeviceClass.STORAGE,
    NetConfigChange: DeviceClass.NETWORK,
    DnsAnswer: DeviceClass.NETWORK,
}


def _validate_script(
    script: tuple[BehaviorAction, ...], classes: frozenset[DeviceClass], label: str
) -> None:
    last_at = 0
    for idx, action in enumerate(script):
        if action.at < 0:
            raise ScriptClassMismatch(f"{label}: action {idx} has negative tick")
        if action.at < last_at:
            raise ScriptClassMismatch(f"{label}: script not sorted by tick at index {idx}")
        last_at = action.at
        required = _ACTION_REQUIRES[type(action)]
        if required not in classes:
            raise ScriptClassMismatch(
                f"{label}: {type(action).__name__} requires class {required.value}"
            )
        if isinstance(action, Keystroke) and (
            len(action.symbol) != 1 or not action.symbol.isprintable()
        ):
            raise ScriptClassMismatch(f"{label}: keystroke symbol must be one printable char")


@dataclass(frozen=True)
class SimDevice:
    """A pluggable device: identity plus a timeline of scripted actions.

    Optional ``adapter`` is the initial configuration a network device
    brings up when mounted.
    """

    descriptor: RawDescriptor
    script: tuple[BehaviorAction, ...] = ()
    label: str = ""
    adapter: AdapterConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "script", tuple(self.script))
        _validate_script(self.script, classify(self.descriptor), self.label or "device")

    @property
    def device_key(self) -> str:
        return bus_key(self.descriptor)


def clone_from(
    src: SimDevice, script: list[BehaviorAction] | tuple[BehaviorAction, ...], label: str = ""
) -> SimDevice:
    """A descriptor-identical device with its own behavior; at the access
    control layer it is indistinguishable from *src*."""
    return replace(src, script=tuple(script), label=label or f"{src.label}-clone")


@dataclass(frozen=True)
class DeviceAttached:
    at: int
    device_key: str
    label: str
    descriptor: RawDescriptor
    #: Initial configuration a network device brings up when it enumerates.
    adapter: AdapterConfig | None = None


@dataclass(frozen=True)
class DeviceRemoved:
    at: int
    device_key: str
    label: str


@dataclass(frozen=True)
class ActionFired:
    at: int
    device_key: str
    label: str
    action: BehaviorAction


BusEvent = Union[DeviceAttached, DeviceRemoved, ActionFired]


@dataclass
class _Attachment:
    device: SimDevice
    order: int
    cursor: int = 0


class SimHost:
    """Single-owner simulated host controller.

    All mutation happens on the caller's thread; subscribers run inline.
    Tick hooks fire once per elapsed tick, after that tick's actions.
    """

    def __init__(self):
        self.clock = 0
        self.event_log: list[BusEvent] = []
        self.subscribers: list[Callable[[BusEvent], None]] = []
        self.tick_hooks: list[Callable[[int], None]] = []
        self.clients: dict[str, object] = {}
        self._attached: dict[str, _Attachment] = {}
        self._order = 0

    def subscribe(self, callback: Callable[[BusEvent], None]) -> None:
        self.subscribers.append(callback)

    def add_tick_hook(self, hook: Callable[[int], None]) -> None:
        self.tick_hooks.append(hook)

    def attached_keys(self) -> set[str]:
        return set(self._attached)

    def is_attached(self, device_key: str) -> bool:
        return device_key in self._attached

    def _emit(self, event: BusEvent) -> None:
        self.event_log.append(event)
        for callback in list(self.subscribers):
            callback(event)

    def plug(self, dev: SimDevice) -> DeviceAttached:
        key = dev.device_key
        if key in self._attached:
            raise AlreadyAttached(f"{dev.label or key} is already attached")
        self._order += 1
        self._attached[key] = _Attachment(device=dev, order=self._order)
        event = DeviceAttached(
            at=self.clock,
            device_key=key,
            label=dev.label,
            descriptor=dev.descriptor,
            adapter=dev.adapter,
        )
        self._emit(event)
        return event

    def unplug(self, device_key: str) -> None:
        attachment = self._attached.pop(device_key, None)
        if attachment is None:
            raise NotAttached(f"no attached device with key {device_key!r}")
        self._emit(
            DeviceRemoved(at=self.clock, device_key=device_key, label=attachment.device.label)
        )

    def step(self, until: int) -> list[ActionFired]:
        """Advance the clock, firing due actions in (tick, attach order,
        script order).  Actions of a device unplugged mid-step never fire."""
        if until < self.clock:
            raise ValueError(f"cannot step backwards: {until} < {self.clock}")
        fired: list[ActionFired] = []
        for tick in range(self.clock + 1, until + 1):
            self.clock = tick
            while True:
                best: tuple[tuple[int, int], str] | None = None
                for key, att in self._attached.items():
                    if att.cursor >= len(att.device.script):
                        continue
                    action = att.device.script[att.cursor]
                    if action.at > tick:
                        continue
                    rank = (action.at, att.order)
                    if best is None or rank < best[0]:
                        best = (rank, key)
                if best is None:
                    break
                att = self._attached[best[1]]
                action = att.device.script[att.cursor]
                att.cursor += 1
                event = ActionFired(
                    at=action.at,
                    device_key=best[1],
                    label=att.device.label,
                    action=action,
                )
                fired.append(event)
                self._emit(event)
            for hook in list(self.tick_hooks):
                hook(tick)
        return fired
