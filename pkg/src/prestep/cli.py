"""Command-line entry points: serve, validate, export, simulate."""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click

from .config import load_server_config, parse_listen
from .errors import PrestepError
from .export import export_dataset
from .latency_lab import (
    Dist,
    NetworkModel,
    ProtocolVariant,
    VARIANT_NAIVE,
    VARIANT_SPECULATIVE,
    report,
    simulate,
    write_trace_ndjson,
)
from .stages import definition_from_yaml, validate_definition


@click.group()
def main() -> None:
    """Staged web experiments with speculative next-step prefetch."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Server config YAML; PRESTEP_* env vars override fields.")
def serve(config_path: str | None) -> None:
    """Run the experiment server (TCP wire protocol + websocket/static HTTP)."""
    try:
        config = load_server_config(config_path)
        definition = definition_from_yaml(Path(config.experiment).read_text(encoding="utf-8"))
        issues = validate_definition(definition)
        if issues:
            for issue in issues:
                click.echo(f"config issue: {issue}", err=True)
            raise SystemExit(2)
    except (PrestepError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2)

    from .netserver import NetServer, create_app
    from .server import ServerCore

    async def run() -> None:
        import uvicorn

        core = ServerCore.open(
            definition, config.data_dir, config.backoff_policy(),
            queue_capacity=config.save_queue_capacity,
            heartbeat_interval_ms=config.heartbeat_interval_ms,
        )
        net = NetServer(core, heartbeat_interval_ms=config.heartbeat_interval_ms)
        tcp_host, tcp_port = parse_listen(config.tcp_listen)
        await net.start_tcp(tcp_host, tcp_port)
        http_host, http_port = parse_listen(config.http_listen)
        app = create_app(net, static_dir=config.static_dir or None)
        server = uvicorn.Server(uvicorn.Config(app, host=http_host, port=http_port, log_level="warning"))
        click.echo(f"serving {definition.experiment_id} v{definition.version}: "
                   f"tcp {config.tcp_listen}, http {config.http_listen}")
        try:
            await server.serve()
        finally:
            await net.stop()

    asyncio.run(run())


@main.command()
@click.option("--experiment", type=click.Path(exists=True, dir_okay=False), required=True)
def validate(experiment: str) -> None:
    """Check an experiment config; exit 0 iff it is servable."""
    try:
        definition = definition_from_yaml(Path(experiment).read_text(encoding="utf-8"))
    except PrestepError as exc:
        click.echo(f"parse error: {exc}", err=True)
        raise SystemExit(2)
    issues = validate_definition(definition)
    if issues:
        for issue in issues:
            click.echo(str(issue), err=True)
        raise SystemExit(1)
    click.echo(f"ok: {definition.experiment_id} v{definition.version}, "
               f"{len(definition.stages)} stages, {len(definition.conditions)} condition(s)")


@main.command()
@click.option("--experiment-id", required=True)
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def export(experiment_id: str, data_dir: str, out_dir: str) -> None:
    """Export an experiment's record log as a re-importable text archive."""
    try:
        manifest = export_dataset(data_dir, experiment_id, out_dir)
    except PrestepError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2)
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


@main.command()
@click.option("--variant", type=click.Choice([VARIANT_SPECULATIVE, VARIANT_NAIVE, "both"]),
              default="both", show_default=True)
@click.option("--rtt", default="fixed:100", show_default=True,
              help="RTT ms: fixed:V | uniform:LO,HI | lognormal:MU,SIGMA")
@click.option("--actions", default=5, show_default=True)
@click.option("--steps", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--compute-ms", default=5.0, show_default=True)
@click.option("--think", default="fixed:300", show_default=True)
@click.option("--loss", default=0.0, show_default=True)
@click.option("--ser-ms-per-kb", default=0.0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for per-step NDJSON traces and summary.json.")
def simulate_cmd(variant: str, rtt: str, actions: int, steps: int, seed: int,
                 compute_ms: float, think: str, loss: float, ser_ms_per_kb: float,
                 out_dir: str | None) -> None:
    """Simulate perceived latency for the chosen protocol variants."""
    try:
        net = NetworkModel(rtt=Dist.parse(rtt), serialization_ms_per_kb=ser_ms_per_kb, loss_prob=loss)
        think_dist = Dist.parse(think)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2)
    kinds = [VARIANT_SPECULATIVE, VARIANT_NAIVE] if variant == "both" else [variant]
    traces = []
    for kind in kinds:
        pv = ProtocolVariant(kind=kind, action_count=actions, compute_ms=compute_ms, think_time=think_dist)
        traces.append(simulate(pv, net, steps, seed))
    doc = report(traces, action_count=actions)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for trace in traces:
            write_trace_ndjson(trace, out / f"trace_{trace.variant}.ndjson")
        (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for row in doc["variants"]:
        p = row["perceived_ms"]
        b = row["bandwidth"]
        click.echo(f"{row['variant']:>12}: mean {p['mean']:8.2f} ms  median {p['median']:8.2f} ms  "
                   f"p95 {p['p95']:8.2f} ms  down {b['bytes_down_per_step']:9.1f} B/step")
    cross = doc["crossover"]
    click.echo(f"{'crossover':>12}: <= {cross['max_action_count_within_budget']} actions fit "
               f"{cross['budget_bytes_per_step']:.0f} B/step downlink budget")


main.add_command(simulate_cmd, name="simulate")


if __name__ == "__main__":
    sys.exit(main())
