"""Overhead benchmarks: simulated bulk-transfer throughput with detectors
off vs on, and event round-trip time through the network-detector path.

Absolute numbers are simulated-transfer units; only the monitored/baseline
ratio and the round-trip deltas are meaningful.
"""

from __future__ import annotations

import gc
import statistics
import time
from dataclasses import dataclass, field

import psutil

from .access_control import VersionedAllowlist, append
from .bus import AccessKind, ActionFired, FileAccess, SimHost
from .client import Client, ClientConfig
from .devices import decode
from .drbg import Drbg
from .net_guard import ReferenceResolver, ReferenceResolverSet
from .rules import BehaviorRuleSet, CaptchaPolicy
from .storage_guard import TargetPathSet

#: Enabled-detector rule set sized like a realistic deployment.
_BENCH_TARGETS = tuple(
    [f"C:\\Users\\staff{i}\\Documents\\Confidential" for i in range(8)] + ["F:\\secrets"]
)


@dataclass
class BenchReport:
    mode: str
    repetitions: int = 0
    volume_mb: float = 0.0
    baseline_throughput: float = 0.0
    monitored_throughput: float = 0.0
    ratio: float = 0.0
    cpu_samples: list[float] = field(default_factory=list)
    memory_samples: list[float] = field(default_factory=list)
    probes: int = 0
    rtt_min: float = 0.0
    rtt_max: float = 0.0
    rtt_avg: float = 0.0
    direct_avg: float = 0.0
    rtt_delta: float = 0.0

    def to_json(self) -> dict:
        doc = {"mode": self.mode}
        if self.mode == "throughput":
            doc.update(
                repetitions=self.repetitions,
                volume_mb=self.volume_mb,
                baseline_throughput=round(self.baseline_throughput, 2),
                monitored_throughput=round(self.monitored_throughput, 2),
                ratio=round(self.ratio, 4),
                cpu_samples=[round(s, 2) for s in self.cpu_samples],
                memory_samples=[round(s, 2) for s in self.memory_samples],
            )
        else:
            doc.update(
                probes=self.probes,
                rtt_min=round(self.rtt_min, 4),
                rtt_max=round(self.rtt_max, 4),
                rtt_avg=round(self.rtt_avg, 4),
                direct_avg=round(self.direct_avg, 4),
                rtt_delta=round(self.rtt_delta, 4),
            )
        return doc

    def render(self) -> str:
        if self.mode == "throughput":
            return "\n".join(
                [
                    f"throughput bench: {self.volume_mb:.0f} MB simulated, "
                    f"{self.repetitions} repetitions each mode",
                    f"  {'':<22}{'baseline':>12}{'monitored':>12}",
                    f"  {'throughput (MB/s)':<22}{self.baseline_throughput:>12.1f}"
                    f"{self.monitored_throughput:>12.1f}",
                    f"  monitored/baseline ratio: {self.ratio:.4f}",
                    f"  cpu samples (%): min {min(self.cpu_samples):.1f} "
                    f"max {max(self.cpu_samples):.1f}",
                    f"  memory samples (MB): min {min(self.memory_samples):.1f} "
                    f"max {max(self.memory_samples):.1f}",
                ]
            )
        return "\n".join(
            [
                f"rtt bench: {self.probes} probes through the network-detector path",
                f"  {'':<14}{'min':>10}{'max':>10}{'avg':>10}",
                f"  {'rtt (ms)':<14}{self.rtt_min:>10.4f}{self.rtt_max:>10.4f}"
                f"{self.rtt_avg:>10.4f}",
                f"  direct avg (ms): {self.direct_avg:.4f}",
                f"  monitored-vs-direct delta (ms): {self.rtt_delta:.4f}",
            ]
        )


def _flash_drive():
    from .devices import GUID_VOLUME, BusType, ClassGuid, InterfaceFunction, RawDescriptor

    return RawDescriptor(
        interfaces=(InterfaceFunction(ClassGuid(GUID_VOLUME)),),
        bus_type=BusType.USB,
        vendor_id="JetFlash",
        product_id="Transcend_16GB",
        product_rev="1.00",
        serial_number="2576240093",
        volume_serial="7039-3413",
        drive_letter="F:\\",
        full_serial="USBSTOR\\Disk&Ven_JetFlash&Prod_Transcend_16GB&Rev_1.00\\2576240093&0",
    )


def _bench_client(detectors_on: bool, seed: int) -> tuple[SimHost, Client, str]:
    """Client with an allowlisted flash drive mounted; detectors either
    armed with the bench rule set or switched off entirely."""
    from .bus import SimDevice

    host = SimHost()
    descriptor = _flash_drive()
    allowlist = append(decode(descriptor), VersionedAllowlist())
    rules = BehaviorRuleSet(
        target_paths=TargetPathSet(_BENCH_TARGETS if detectors_on else ()),
        resolvers=ReferenceResolverSet(
            (
                ReferenceResolver(
                    "bench", {"probe.example": (("10.0.0.1",), "probe.example")}
                ),
            )
        ),
        captcha=CaptchaPolicy(enabled=detectors_on),
        no_execute=detectors_on,
    )
    client = Client(
        ClientConfig(client_id="bench", heartbeat_interval=10_000, watchdog_interval=10_000),
        host,
        allowlist,
        rules,
        drbg=Drbg(seed=seed),
    ).start()
    client.detectors_enabled = detectors_on
    event = host.plug(SimDevice(descriptor=descriptor, label="bench-drive"))
    return host, client, event.device_key


def _transfer_once(
    client: Client, device_key: str, chunks: int, chunk_bytes: bytes, sink: memoryview
) -> tuple[float, float]:
    """One simulated bulk transfer: per chunk, copy the payload into the
    host-side sink (the simulated I/O) and push the write event through the
    routing pipeline.  Returns (elapsed wall seconds, cpu seconds)."""
    action_of = [
        FileAccess(
            path=f"F:\\bench\\chunk{i}.bin",
            kind=AccessKind.WRITE,
            process_name="explorer.exe",
            process_id=4242,
            process_path="C:\\Windows\\explorer.exe",
            at=i,
        )
        for i in range(chunks)
    ]
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        cpu_start = time.process_time()
        start = time.perf_counter()
        for i in range(chunks):
            sink[:] = chunk_bytes  # the simulated device-to-host copy
            client.on_bus_event(
                ActionFired(at=i, device_key=device_key, label="bench-drive", action=action_of[i])
            )
        elapsed = time.perf_counter() - start
        cpu = time.process_time() - cpu_start
    finally:
        if gc_was_enabled:
            gc.enable()
    return elapsed, cpu


def bench_throughput(
    volume_mb: int = 64, repetitions: int = 20, chunk_kb: int = 8192, seed: int = 1
) -> BenchReport:
    """Median throughput over *repetitions* runs per mode, detectors off
    (baseline) then on (monitored)."""
    chunk_bytes = b"\x00" * (chunk_kb * 1024)
    chunks = max(1, (volume_mb * 1024) // chunk_kb)
    process = psutil.Process()
    report = BenchReport(mode="throughput", repetitions=repetitions, volume_mb=volume_mb)
    throughputs: dict[bool, list[float]] = {False: [], True: []}
    sink = memoryview(bytearray(len(chunk_bytes)))
    clients = {}
    for detectors_on in (False, True):
        host, client, key = _bench_client(detectors_on, seed)
        clients[detectors_on] = (client, key)
        _transfer_once(client, key, min(chunks, 8), chunk_bytes, sink)  # warmup
    # Modes are interleaved so load drift on the machine hits both equally
    # and cancels out of the ratio.  CPU samples are cumulative utilization
    # over the monitored series; the process CPU clock is too coarse for
    # single repetitions.
    cpu_total = 0.0
    wall_total = 0.0
    for _ in range(repetitions):
        for detectors_on in (False, True):
            client, key = clients[detectors_on]
            elapsed, cpu = _transfer_once(client, key, chunks, chunk_bytes, sink)
            throughputs[detectors_on].append(volume_mb / elapsed)
            if detectors_on:
                cpu_total += cpu
                wall_total += elapsed
                report.cpu_samples.append(100.0 * cpu_total / max(wall_total, 1e-9))
                report.memory_samples.append(process.memory_info().rss / 1e6)
    report.baseline_throughput = statistics.median(throughputs[False])
    report.monitored_throughput = statistics.median(throughputs[True])
    report.ratio = report.monitored_throughput / report.baseline_throughput
    return report


def bench_rtt(probes: int = 1000, seed: int = 1) -> BenchReport:
    """Round-trip of one DNS answer through the monitored detector path,
    compared with a direct reference lookup."""
    host, client, _ = _bench_client(True, seed)
    from .bus import DnsAnswer, SimDevice
    from .devices import GUID_NET, ClassGuid, InterfaceFunction, RawDescriptor
    from .net_guard import AdapterConfig

    wifi = RawDescriptor(
        interfaces=(InterfaceFunction(ClassGuid(GUID_NET)),),
        vendor_id="ASUS",
        product_id="USB-N10",
        product_rev="1.0",
        serial_number="BENCHNET",
        full_serial="USB\\VID_ASUS&PID_USB-N10\\BENCHNET",
    )
    client.acl.allowlist = append(decode(wifi), client.acl.allowlist)
    adapter = AdapterConfig("bench0", "10.0.0.1", "10.0.0.1", "10.0.0.53", 3600)
    event = host.plug(SimDevice(descriptor=wifi, label="bench-wifi", adapter=adapter))
    key = event.device_key

    refs = client.net.resolvers
    monitored: list[float] = []
    direct: list[float] = []
    for i in range(probes):
        action = DnsAnswer(query="probe.example", a_record="10.0.0.1", cname="", at=i)
        start = time.perf_counter()
        client.on_bus_event(ActionFired(at=i, device_key=key, label="bench-wifi", action=action))
        monitored.append((time.perf_counter() - start) * 1000.0)
        start = time.perf_counter()
        refs.lookup("probe.example")
        direct.append((time.perf_counter() - start) * 1000.0)
    report = BenchReport(mode="rtt", probes=probes)
    report.rtt_min = min(monitored)
    report.rtt_max = max(monitored)
    report.rtt_avg = statistics.fmean(monitored)
    report.direct_avg = statistics.fmean(direct)
    report.rtt_delta = report.rtt_avg - report.direct_avg
    return report
