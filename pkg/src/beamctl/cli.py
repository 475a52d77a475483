"""Operator command line: serve a kernel, run scripts, poke variables,
pull spectra, inject faults, and benchmark the readout link.

Exit codes are a contract: 0 success, 1 runtime failure, 2 parse error
(line number printed), 3 run aborted.
"""

from __future__ import annotations

import base64
import json
import os
import pathlib
import re
import sys
import time

import click

from . import viz
from .gateway import DEFAULT_PORT, FaultModel, KernelHost
from .gateway.client import (
    ClientError,
    ConnectionLost,
    DpmClient,
    RequestTimeout,
    StreamClient,
)
from .gateway.service import DpmServer, StreamServer
from .gateway.webbridge import WebBridge
from .kernel import KernelConfig
from .residents import synthetic_psd
from .script import ParseError, parse, render_statement

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_PARSE = 2
EXIT_ABORTED = 3

FIXTURE_SEED = 2002
DEFAULT_SWEEP = "1e4,1e5,1e6,1e7,1e8"

_INT_RE = re.compile(r"[+-]?\d+$")
_REAL_RE = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")


@click.group()
@click.option("--endpoint", envvar="BEAMCTL_ENDPOINT",
              default=f"127.0.0.1:{DEFAULT_PORT}", show_default=True,
              help="host:port of the stream gateway.")
@click.option("--transport", type=click.Choice(["stream", "dpm"]),
              default="stream", show_default=True)
@click.option("--dpm-file", type=click.Path(), default=None,
              help="Shared window file for the dpm transport.")
@click.option("--format", "fmt", type=click.Choice(["plain", "tsv"]),
              default="plain", show_default=True)
@click.option("--seed", type=int, default=None,
              help="Kernel seed (serve) or fixture seed (bench).")
@click.option("--clock-factor", type=float, default=0.0,
              help="Pace the virtual clock: simulated seconds per real "
                   "second; 0 runs unpaced.")
@click.option("--timeout", type=float, default=10.0, show_default=True,
              help="Seconds to wait for each gateway reply.")
@click.pass_context
def main(ctx, endpoint, transport, dpm_file, fmt, seed, clock_factor,
         timeout):
    """Beamline control client and server."""
    ctx.obj = {"endpoint": endpoint, "transport": transport,
               "dpm_file": dpm_file, "fmt": fmt, "seed": seed,
               "clock_factor": clock_factor, "timeout": timeout}


def _connect(opts):
    try:
        if opts["transport"] == "dpm":
            path = opts["dpm_file"] or opts["endpoint"]
            return DpmClient(path, timeout=opts["timeout"])
        host, _, port = opts["endpoint"].rpartition(":")
        return StreamClient(host or "127.0.0.1",
                            int(port) if port else DEFAULT_PORT,
                            timeout=opts["timeout"])
    except (OSError, ValueError) as exc:
        click.echo(f"cannot reach gateway: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


def _fail(message: str):
    click.echo(message, err=True)
    sys.exit(EXIT_RUNTIME)


def _checked(reply: dict) -> dict:
    if not reply.get("ok"):
        _fail(reply.get("error", "request failed"))
    return reply


# -- serve ----------------------------------------------------------------

@main.command()
@click.option("--workdir", type=click.Path(), default="./beamctl-work",
              show_default=True)
@click.option("--port", type=int, default=DEFAULT_PORT, show_default=True,
              help="Stream port; 0 picks a free one.")
@click.option("--ui-port", type=int, default=None,
              help="Also serve the web console on this port (0 = any).")
@click.option("--ui-root", type=click.Path(exists=True, file_okay=False),
              default=None, help="Static UI bundle directory.")
@click.option("--faults/--no-faults", default=True, show_default=True,
              help="Arm the background nonfatal/fatal fault process.")
@click.pass_context
def serve(ctx, workdir, port, ui_port, ui_root, faults):
    """Host a kernel and serve the gateway protocol.

    The virtual clock only advances while a run is active, so an idle
    server never drifts. A nonfatal fault blocks this gateway until the
    kernel next restarts; measurement continues regardless.
    """
    opts = ctx.obj
    config = KernelConfig(seed=opts["seed"] or 0)
    model = FaultModel(seed=opts["seed"] or 0) if faults else None
    host = KernelHost(workdir, config, model,
                      clock_factor=opts["clock_factor"])
    host.start()
    servers = []
    try:
        stream = StreamServer(host, port=port)
        stream.start()
        servers.append(stream)
        click.echo(f"stream on 127.0.0.1:{stream.port}")
        if opts["dpm_file"]:
            dpm = DpmServer(host, opts["dpm_file"])
            dpm.start()
            servers.append(dpm)
            click.echo(f"dpm window at {opts['dpm_file']}")
        if ui_port is not None:
            bridge = WebBridge(host, port=ui_port, ui_root=ui_root)
            bridge.start()
            servers.append(bridge)
            click.echo(f"web console on http://127.0.0.1:{bridge.port}/")
        click.echo("ready")
        sys.stdout.flush()
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        click.echo("shutting down", err=True)
    finally:
        for server in servers:
            server.close()
        host.stop()


# -- run ------------------------------------------------------------------

@main.command()
@click.argument("script", type=click.Path(exists=True, dir_okay=False))
@click.option("--from", "from_", type=int, default=0,
              help="Start at this checkpoint ordinal (1-based).")
@click.pass_context
def run(ctx, script, from_):
    """Load a script, run it, and stream per-statement progress."""
    text = pathlib.Path(script).read_text(encoding="utf-8")
    try:
        program = parse(text)
    except ParseError as exc:
        click.echo(f"parse error, line {exc.line}: {exc.reason}", err=True)
        sys.exit(EXIT_PARSE)

    cli = _connect(ctx.obj)
    try:
        reply = cli.request("load_script", text=text)
        if not reply.get("ok"):
            if reply.get("kind") == "parse":
                click.echo(f"parse error, line {reply['line']}: "
                           f"{reply['error']}", err=True)
                sys.exit(EXIT_PARSE)
            _fail(reply.get("error", "load failed"))
        start = _checked(cli.request(
            "start", **({"from": from_} if from_ else {})))
        shown = start["started_at"] - 1
        status = "running"
        while True:
            st = _checked(cli.request("status"))
            status = st["status"]
            while shown < st["last_completed"]:
                shown += 1
                stmt = program.statements[shown]
                click.echo(f"done {shown:3d}  {render_statement(stmt)}")
            if status == "waiting" and st["question"]["name"]:
                _answer_question(cli, st)
            elif status in ("finished", "aborted"):
                break
            else:
                time.sleep(0.02)
        click.echo(f"run {status}")
        if status == "aborted":
            reason = cli.request("get", path="/script/abort_reason")
            if reason.get("ok") and reason.get("value"):
                click.echo(f"reason: {reason['value']}", err=True)
            sys.exit(EXIT_ABORTED)
    except (ClientError, ConnectionLost, RequestTimeout) as exc:
        _fail(str(exc))
    finally:
        cli.close()


def _answer_question(cli, st) -> None:
    q = st["question"]
    value = click.prompt(f"{q['prompt']} [{q['default']}]",
                         default=q["default"], show_default=False)
    _checked(cli.request("answer", value=str(value)))
    # hold until the run actually resumes, or the same prompt repeats
    last = st["last_completed"]
    deadline = time.monotonic() + 30.0
    while time.monotonic() < deadline:
        st = _checked(cli.request("status"))
        if (st["status"] != "waiting"
                or st["last_completed"] != last):
            return
        time.sleep(0.02)


# -- var ------------------------------------------------------------------

@main.group()
def var():
    """Read and write database variables."""


def _print_value(opts, path, tag, value) -> None:
    if opts["fmt"] == "tsv":
        click.echo(f"{path}\t{tag}\t{json.dumps(value)}")
    elif isinstance(value, list):
        click.echo(" ".join(str(v) for v in value))
    else:
        click.echo(str(value))


@var.command("get")
@click.argument("path")
@click.pass_context
def var_get(ctx, path):
    """Print one variable's value."""
    cli = _connect(ctx.obj)
    try:
        reply = _checked(cli.request("get", path=path))
        _print_value(ctx.obj, path, reply["tag"], reply["value"])
    except (ClientError, ConnectionLost, RequestTimeout) as exc:
        _fail(str(exc))
    finally:
        cli.close()


@var.command("set")
@click.argument("path")
@click.argument("value")
@click.option("--tag", type=click.Choice(["I", "R", "T", "A"]), default=None,
              help="Force the stored type instead of inferring it.")
@click.pass_context
def var_set(ctx, path, value, tag):
    """Write one variable; prints the new revision."""
    if tag == "A":
        payload = [int(x) for x in value.replace(",", " ").split()]
        tag = None  # a JSON list already carries the type
    elif tag is None and _INT_RE.match(value):
        payload = int(value)
    elif tag is None and _REAL_RE.match(value):
        payload = float(value)
    elif tag == "I":
        payload = int(value)
    elif tag == "R":
        payload = float(value)
    else:
        payload = value
        tag = "T" if tag is None else tag
    cli = _connect(ctx.obj)
    try:
        fields = {"path": path, "value": payload}
        if tag is not None:
            fields["tag"] = tag
        reply = _checked(cli.request("set", **fields))
        click.echo(f"revision {reply['revision']}")
    except (ClientError, ConnectionLost, RequestTimeout) as exc:
        _fail(str(exc))
    finally:
        cli.close()


@var.command("list")
@click.argument("prefix", default="/")
@click.pass_context
def var_list(ctx, prefix):
    """List variable paths under a prefix."""
    cli = _connect(ctx.obj)
    try:
        reply = _checked(cli.request("list", prefix=prefix))
        for path in reply["paths"]:
            click.echo(path)
    except (ClientError, ConnectionLost, RequestTimeout) as exc:
        _fail(str(exc))
    finally:
        cli.close()


# -- spectrum -------------------------------------------------------------

def ascii_spectrum(h, width: int = 60, rows: int = 32) -> str:
    """Fixed-width horizontal bar chart of the (axis-summed) spectrum."""
    counts = h.counts.reshape(h.dims) if h.dims else h.counts
    while counts.ndim > 1:
        counts = counts.sum(axis=0)
    n = int(counts.size)
    rows = min(rows, n) if n else 0
    lines = [f"total={h.total()} monitor={h.monitor} live={h.live_time:g}s "
             f"channels={n}"]
    if rows == 0:
        return "\n".join(lines)
    per = -(-n // rows)  # channels per row, rounded up
    buckets = [counts[i:i + per].sum() for i in range(0, n, per)]
    top = max(max(buckets), 1)
    for i, total in enumerate(buckets):
        bar = "#" * int(round(width * int(total) / int(top)))
        lo, hi = i * per, min((i + 1) * per, n) - 1
        lines.append(f"{lo:5d}-{hi:<5d} |{bar:<{width}}| {int(total)}")
    return "\n".join(lines)


@main.command()
@click.option("--mode", type=click.Choice(["compressed", "direct"]),
              default="compressed", show_default=True)
@click.option("--render", "render_as",
              type=click.Choice(["ascii", "file", "png"]), default="ascii",
              show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="Output path for file/png rendering.")
@click.option("--factors", default=None,
              help="Comma-separated rebin factors (compressed mode).")
@click.pass_context
def spectrum(ctx, mode, render_as, out, factors):
    """Fetch the current histogram and render it."""
    cli = _connect(ctx.obj)
    try:
        fields = {"mode": mode}
        if factors:
            fields["factors"] = [int(x) for x in factors.split(",")]
        reply = _checked(cli.request("fetch_spectrum", **fields))
    except (ClientError, ConnectionLost, RequestTimeout) as exc:
        _fail(str(exc))
    finally:
        cli.close()
    blob = base64.b64decode(reply["maks_b64"])
    if render_as == "file":
        out = out or "spectrum.maks"
        pathlib.Path(out).write_bytes(blob)
        click.echo(f"wrote {out} ({len(blob)} bytes)", err=True)
        return
    h = viz.decompress(viz.CompressedSpectrum.from_bytes(blob))
    if render_as == "png":
        from .charts import save_spectrum_png  # matplotlib loads lazily
        out = out or "spectrum.png"
        save_spectrum_png(h, out)
        click.echo(f"wrote {out}", err=True)
        return
    click.echo(ascii_spectrum(h))


# -- fault ----------------------------------------------------------------

@main.command()
@click.argument("kind", type=click.Choice(["nonfatal", "fatal"]))
@click.option("--after", type=float, default=0.0, show_default=True,
              help="Simulated seconds before the fault lands.")
@click.pass_context
def fault(ctx, kind, after):
    """Inject a fault; nonfatal blocks remote control, fatal crashes
    the kernel (the supervisor restarts it)."""
    cli = _connect(ctx.obj)
    try:
        _checked(cli.request("inject_fault", kind=kind, after=after))
        click.echo(f"{kind} fault scheduled")
    except (ClientError, ConnectionLost, RequestTimeout) as exc:
        _fail(str(exc))
    finally:
        cli.close()


# -- bench ----------------------------------------------------------------

@main.command()
@click.option("--sweep", default=DEFAULT_SWEEP, show_default=True,
              help="Comma-separated bandwidths in bytes/s, ascending.")
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
@click.option("--live", is_flag=True,
              help="Benchmark the kernel's current spectrum instead of "
                   "the synthetic fixture.")
@click.pass_context
def bench(ctx, sweep, out_dir, live):
    """Compare compressed vs direct readout across a bandwidth sweep.

    Prints the report table, then writes bench.tsv and bench.png to the
    output directory.
    """
    bandwidths = [float(x) for x in sweep.split(",")]
    if live:
        cli = _connect(ctx.obj)
        try:
            reply = _checked(cli.request("fetch_spectrum", mode="direct"))
        except (ClientError, ConnectionLost, RequestTimeout) as exc:
            _fail(str(exc))
        finally:
            cli.close()
        blob = base64.b64decode(reply["maks_b64"])
        h = viz.decompress(viz.CompressedSpectrum.from_bytes(blob))
    else:
        seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else FIXTURE_SEED
        h = synthetic_psd(seed)
    try:
        result = viz.crossover_benchmark(h, bandwidths)
    except viz.VizError as exc:
        _fail(str(exc))
    from .charts import save_benchmark_png  # matplotlib loads lazily
    table = viz.benchmark_table(result)
    click.echo(table, nl=False)
    outdir = pathlib.Path(out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "bench.tsv").write_text(table, encoding="utf-8")
    save_benchmark_png(result, outdir / "bench.png")
    click.echo(f"wrote {outdir / 'bench.tsv'} and {outdir / 'bench.png'}",
               err=True)


if __name__ == "__main__":
    main()
