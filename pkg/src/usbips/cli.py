"""Command line: scenario runner, benchmarks, the management server, and a
standalone interactive client console.

    usbips run <scenario.json> [--console-seed N] [--report-out out.json]
    usbips bench throughput|rtt [...]
    usbips serve [--port N --token T --storage path]
    usbips client --scenario <file> [--server URL --token T]

Exit code 0 iff the scenario (or bench) passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import bench_rtt, bench_throughput
from .errors import UsbipsError
from .hid_gate import FilterResult, GateState, KeystrokeEvent
from .scenario import ScenarioRun, load_scenario
from .server import ManagementServer

#: Device key attributed to symbols typed at the local console while the
#: gate is open; during a challenge the console stands in for the
#: challenged keyboard (the prompt tells the user which one).
CONSOLE_KEY = "console-keyboard"


def feed_console_symbols(client, text: str) -> int:
    """Deliver typed symbols into the keystroke gate; returns how many
    reached the application sink."""
    delivered = 0
    for symbol in text:
        if client.gate.state is GateState.CHALLENGE:
            source = client.gate.challenge.target_key
        else:
            source = CONSOLE_KEY
        event = KeystrokeEvent(source_key=source, symbol=symbol, at=client.host.clock)
        if client.gate.filter_keystroke(event) is FilterResult.DELIVER:
            client.app_sink.append(event)
            delivered += 1
    return delivered


def prompt_for_challenge(client, input_fn=input, out=sys.stdout) -> None:
    """Interactive CAPTCHA entry; scripted runs replace this with scripted
    keystrokes."""
    while client.gate.state is GateState.CHALLENGE:
        challenge = client.gate.challenge
        out.write(
            f"\nNew keyboard detected ({challenge.target_key!r}).\n"
            f"Type this challenge on it to trust it: {challenge.symbols}\n> "
        )
        out.flush()
        try:
            line = input_fn()
        except EOFError:
            out.write("\n(no input; keystrokes stay blocked)\n")
            return
        feed_console_symbols(client, line.strip())
        if client.gate.state is GateState.OPEN:
            out.write("Challenge passed; keystrokes flow again.\n")
        elif client.gate.state is GateState.LOCKED_OUT:
            out.write(
                "Wrong symbol: all keyboards stay blocked until the "
                "challenged device is removed.\n"
            )
            return


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
        run = ScenarioRun(scenario, seed=args.console_seed, live_dns=args.live_dns)
        run.run_schedule()
        if args.interactive:
            prompt_for_challenge(run.client)
        report = run.report()
        run.close()
    except UsbipsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report.render())
    if args.report_out:
        Path(args.report_out).write_text(json.dumps(report.to_json(), indent=2) + "\n")
    return 0 if report.passed else 1


def _cmd_bench(args: argparse.Namespace) -> int:
    if args.mode == "throughput":
        report = bench_throughput(
            volume_mb=args.volume_mb, repetitions=args.reps, chunk_kb=args.chunk_kb
        )
    else:
        report = bench_rtt(probes=args.probes)
    print(report.render())
    if args.report_out:
        Path(args.report_out).write_text(json.dumps(report.to_json(), indent=2) + "\n")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .http_api import ApiServer

    settings = {
        "bind": args.bind,
        "port": args.port,
        "token": args.token,
        "storage": args.storage,
        "decision_timeout": args.decision_timeout,
    }
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(doc) - set(settings)
        if unknown:
            print(f"error: unknown server config keys: {sorted(unknown)}", file=sys.stderr)
            return 2
        settings.update(doc)
    mgmt = ManagementServer(
        storage_path=settings["storage"], decision_timeout=settings["decision_timeout"]
    )
    api = ApiServer(mgmt, bind=settings["bind"], port=int(settings["port"]),
                    token=settings["token"], verbose=args.verbose)
    print(f"listening on {api.address}", flush=True)
    try:
        api.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        api.close()
    return 0


_CLIENT_HELP = """commands:
  plug <label>        attach a device from the scenario library
  unplug <label>      remove it
  step <n>            advance the virtual clock n ticks
  type <text>         type at the console (answers an active challenge)
  decide <label> allow|block   resolve a pending device decision
  status              gate state, attached devices, pending decisions
  report              scenario expectations so far
  quit
"""


def _cmd_client(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.config:
        from .client import load_config

        scenario.client_config = load_config(args.config)
    transport = None
    if args.server:
        from .http_api import HttpTransport

        transport = HttpTransport(args.server, token=args.token)
    run = ScenarioRun(scenario, seed=args.console_seed, transport=transport)
    client = run.client
    print(f"standalone client {client.config.client_id!r}; devices: "
          f"{', '.join(sorted(scenario.devices))}")
    print(_CLIENT_HELP)
    while True:
        if client.gate.state is GateState.CHALLENGE:
            prompt_for_challenge(client)
        try:
            line = input("usbips> ").strip()
        except EOFError:
            break
        if not line:
            continue
        verb, _, rest = line.partition(" ")
        try:
            if verb == "quit":
                break
            elif verb == "plug":
                run.host.plug(scenario.devices[rest])
            elif verb == "unplug":
                run.host.unplug(scenario.devices[rest].device_key)
            elif verb == "step":
                run.host.step(run.host.clock + int(rest))
            elif verb == "type":
                delivered = feed_console_symbols(client, rest)
                print(f"{delivered}/{len(rest)} symbols delivered")
            elif verb == "decide":
                label, _, verdict = rest.partition(" ")
                key = scenario.devices[label].device_key
                client.acl.resolve_pending(key, accept=verdict.strip() == "allow")
            elif verb == "status":
                print(f"clock={run.host.clock} gate={client.gate.state.value}")
                print(f"attached: {sorted(run.host.attached_keys())}")
                print(f"pending: {sorted(client.acl.pending)}")
            elif verb == "report":
                print(run.report().render())
            else:
                print(_CLIENT_HELP)
        except (UsbipsError, KeyError, ValueError) as exc:
            print(f"error: {exc}")
    run.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="usbips", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="replay a scenario file deterministically")
    run.add_argument("scenario", help="path to the scenario JSON")
    run.add_argument("--console-seed", type=int, default=None,
                     help="override the random-generator seed")
    run.add_argument("--report-out", help="write the JSON report here")
    run.add_argument("--interactive", action="store_true",
                     help="prompt for CAPTCHA entry left pending by the schedule")
    run.add_argument("--live-dns", action="store_true",
                     help="also consult the real OS resolver (manual runs)")
    run.set_defaults(fn=_cmd_run)

    bench = sub.add_parser("bench", help="overhead benchmarks")
    bench.add_argument("mode", choices=("throughput", "rtt"))
    bench.add_argument("--volume-mb", type=int, default=64)
    bench.add_argument("--reps", type=int, default=20)
    bench.add_argument("--chunk-kb", type=int, default=8192)
    bench.add_argument("--probes", type=int, default=1000)
    bench.add_argument("--report-out")
    bench.set_defaults(fn=_cmd_bench)

    serve = sub.add_parser("serve", help="start the management server")
    serve.add_argument("--config", default="",
                       help="server config file (JSON: bind, port, token, storage, decision_timeout)")
    serve.add_argument("--bind", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8433)
    serve.add_argument("--token", default="")
    serve.add_argument("--storage", default=":memory:")
    serve.add_argument("--decision-timeout", type=float, default=300.0)
    serve.add_argument("--verbose", action="store_true")
    serve.set_defaults(fn=_cmd_serve)

    client = sub.add_parser("client", help="standalone interactive client")
    client.add_argument("--scenario", required=True,
                        help="scenario file providing the device library")
    client.add_argument("--config", default="",
                        help="client config file (JSON); env vars override")
    client.add_argument("--server", default="", help="management server URL")
    client.add_argument("--token", default="")
    client.add_argument("--console-seed", type=int, default=None)
    client.set_defaults(fn=_cmd_client)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
