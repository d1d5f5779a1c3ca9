"""Keyboard gate: every newly detected keyboard must answer an eight-symbol
CAPTCHA before any keystroke is trusted.

While a challenge is active or the gate is locked out, no keystroke from
*any* keyboard reaches the application sink.  A single wrong symbol from
the challenged keyboard locks the gate until that device is removed; there
are no retries.  Keyboards detected mid-challenge queue behind the current
one and are challenged in arrival order.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .drbg import Drbg
from .errors import EntropyUnavailable, GateBusy, WrongDevice
from .logs import AuditLog, LogKind

#: Symbol alphabet for challenges: A-Z, a-z, 0-9 in that order.
ALPHABET = string.ascii_uppercase + string.ascii_lowercase + string.digits
SYMBOL_COUNT = 8


def generate_captcha(drbg: Drbg | None) -> str:
    """Draw exactly eight bytes and map each onto the 62-symbol alphabet."""
    if drbg is None:
        raise EntropyUnavailable("no random generator configured")
    try:
        raw = drbg.generate(SYMBOL_COUNT)
    except Exception as exc:
        raise EntropyUnavailable(str(exc)) from exc
    return "".join(ALPHABET[b % len(ALPHABET)] for b in raw)


class GateState(Enum):
    OPEN = "open"
    CHALLENGE = "challenge"
    LOCKED_OUT = "locked_out"


class FilterResult(Enum):
    DELIVER = "deliver"
    SWALLOW = "swallow"


@dataclass
class CaptchaChallenge:
    symbols: str
    issued_at: int
    target_key: str
    progress: int = 0


@dataclass(frozen=True)
class KeystrokeEvent:
    source_key: str
    symbol: str
    at: int


class KeyboardGate:
    """Host-wide keystroke gate; a single state machine owned by the
    client event loop."""

    def __init__(
        self,
        audit: AuditLog,
        drbg: Drbg,
        clock: Callable[[], int],
        is_attached: Callable[[str], bool] | None = None,
    ):
        self.audit = audit
        self.drbg = drbg
        self.clock = clock
        self.is_attached = is_attached or (lambda _key: True)
        self.state = GateState.OPEN
        self.challenge: CaptchaChallenge | None = None
        self.locked_target: str | None = None
        self.queue: list[str] = []

    def on_new_keyboard(self, device_key: str) -> None:
        """Challenge the keyboard, or queue it when a challenge is already
        active (``GateBusy``)."""
        if self.state is not GateState.OPEN:
            self.queue.append(device_key)
            raise GateBusy(f"challenge already active; queued {device_key!r}")
        self._issue_challenge(device_key)

    def _issue_challenge(self, device_key: str) -> None:
        self.challenge = CaptchaChallenge(
            symbols=generate_captcha(self.drbg),
            issued_at=self.clock(),
            target_key=device_key,
        )
        self.state = GateState.CHALLENGE
        # Challenge-display event: the CLI prompt and the server console
        # both consume this entry.
        self.audit.emit(
            LogKind.GATE_EVENT,
            {
                "event": "challenge_issued",
                "device_key": device_key,
                "symbols": self.challenge.symbols,
                "issued_at": self.challenge.issued_at,
            },
        )

    def filter_keystroke(self, ev: KeystrokeEvent) -> FilterResult:
        if self.state is GateState.OPEN:
            self.audit.emit(
                LogKind.GATE_EVENT,
                {"event": "keystroke", "device_key": ev.source_key, "symbol": ev.symbol},
            )
            return FilterResult.DELIVER

        if self.state is GateState.LOCKED_OUT:
            return FilterResult.SWALLOW

        challenge = self.challenge
        assert challenge is not None
        if ev.source_key != challenge.target_key:
            # Other keyboards stay blocked but cannot poison the challenge.
            return FilterResult.SWALLOW
        if ev.symbol == challenge.symbols[challenge.progress]:
            challenge.progress += 1
            if challenge.progress == SYMBOL_COUNT:
                self.state = GateState.OPEN
                self.challenge = None
                self.audit.emit(
                    LogKind.GATE_EVENT,
                    {"event": "challenge_passed", "device_key": ev.source_key},
                )
                self._drain_queue()
            return FilterResult.SWALLOW
        # Single-attempt policy: any wrong symbol from the target locks the
        # gate until the device is removed.
        self.state = GateState.LOCKED_OUT
        self.locked_target = challenge.target_key
        self.challenge = None
        self.audit.alarm(
            LogKind.GATE_EVENT,
            {
                "event": "challenge_failed",
                "device_key": ev.source_key,
                "expected_progress": challenge.progress,
                "got_symbol": ev.symbol,
            },
        )
        return FilterResult.SWALLOW

    def release_lockout(self, device_key: str) -> None:
        """Reopen the gate when the abnormal keyboard is removed."""
        if self.state is not GateState.LOCKED_OUT or self.locked_target != device_key:
            raise WrongDevice(f"{device_key!r} is not the lockout target")
        self.state = GateState.OPEN
        self.locked_target = None
        self.audit.emit(
            LogKind.GATE_EVENT, {"event": "lockout_released", "device_key": device_key}
        )
        self._drain_queue()

    def on_unplug(self, device_key: str) -> None:
        """Bus removal notification: releases a lockout held by this device,
        cancels a challenge bound to it, and drops it from the queue."""
        if device_key in self.queue:
            self.queue.remove(device_key)
        if self.state is GateState.LOCKED_OUT and self.locked_target == device_key:
            self.release_lockout(device_key)
            return
        if self.state is GateState.CHALLENGE and self.challenge is not None \
                and self.challenge.target_key == device_key:
            self.state = GateState.OPEN
            self.challenge = None
            self.audit.emit(
                LogKind.GATE_EVENT,
                {"event": "challenge_cancelled", "device_key": device_key},
            )
            self._drain_queue()

    def _drain_queue(self) -> None:
        while self.queue:
            key = self.queue.pop(0)
            if self.is_attached(key):
                self._issue_challenge(key)
                return
