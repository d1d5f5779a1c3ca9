"""Exception types shared across the client, server, and simulator."""


class UsbipsError(Exception):
    """Base class for every error raised by this package."""


class MalformedDescriptor(UsbipsError):
    """Descriptor violates a structural invariant (missing interface,
    empty USB serial, control characters in a string field)."""


class FieldTooLong(UsbipsError):
    """A descriptor string exceeds its buffer cap, or a canonical device
    key exceeds 256 characters.  Over-length input is an error, never a clip."""


class AlreadyAttached(UsbipsError):
    """plug() called for a device key that is already on the bus."""


class NotAttached(UsbipsError):
    """Operation names a device key that is not currently attached."""


class ScriptClassMismatch(UsbipsError):
    """A scripted action requires a device class the descriptor lacks.
    Detected when the device is built, not at replay time."""


class GateBusy(UsbipsError):
    """A CAPTCHA challenge is already active; the new keyboard was queued."""


class WrongDevice(UsbipsError):
    """Lockout release attempted for a device other than the lockout target."""


class EntropyUnavailable(UsbipsError):
    """The random generator could not produce challenge bytes."""


class DeciderTimeout(UsbipsError):
    """The user/operator decision callback did not answer; treated as refuse."""


class AlreadyRunning(UsbipsError):
    """A client with this id is already running on the host."""


class ServerUnreachable(UsbipsError):
    """The management server could not be reached; client stays offline."""


class ReferenceUnavailable(UsbipsError):
    """No reference resolver answered; the DNS verdict is deferred."""


class SnapshotMissing(UsbipsError):
    """Adapter was not present in the configuration snapshot; no restore."""


class RemediationFailed(UsbipsError):
    """The simulated file scheduled for deletion no longer exists."""


class StorageFailure(UsbipsError):
    """Durable store rejected a write; the whole batch is retried."""


class ValidationError(UsbipsError):
    """Payload violates a type invariant (wildcard placement, field length)."""


class VersionConflict(UsbipsError):
    """Versioned put raced with another writer; base version is stale."""


class NotFound(UsbipsError):
    """Unknown decision id or resource."""


class ScenarioInvalid(UsbipsError):
    """Scenario file failed validation; message carries field diagnostics."""
