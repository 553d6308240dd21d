"""Operator entry points: run the service, preprocess offline, submit jobs.

Exit codes are part of the contract: 2 bad config or arguments, 3 bind
failure, 4 image errors, 5 server unreachable, 6 job failed.
"""

from __future__ import annotations

import dataclasses
import json
import os
import socket
import sys

import click
import httpx

from . import png
from .config import BadConfig, load_config
from .control import CannySettings, DepthBuffer, canny_edges, normalize_depth
from .raster import to_grayscale

EXIT_BAD_CONFIG = 2
EXIT_BIND = 3
EXIT_IMAGE = 4
EXIT_UNREACHABLE = 5
EXIT_JOB_FAILED = 6


@click.group()
def main():
    """Viewport-to-rendering orchestration service and preprocessing tools."""


@main.command()
@click.option("--config", "config_path", default=None, help="JSON config file (or $ATELIER_CONFIG).")
@click.option("--backend", type=click.Choice(["mock", "a1111"]), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--store-root", default=None)
def serve(config_path, backend, host, port, store_root):
    """Start the HTTP service; flags override the config file."""
    try:
        cfg = load_config(
            config_path,
            {"backend": backend, "host": host, "port": port, "store_root": store_root},
        )
    except (BadConfig, ValueError) as e:
        click.echo(f"bad config: {e}", err=True)
        sys.exit(EXIT_BAD_CONFIG)

    # claim the port before uvicorn does so an occupied port is a clean,
    # documented failure instead of a traceback
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((cfg.host, cfg.port))
    except OSError as e:
        click.echo(f"cannot bind {cfg.host}:{cfg.port}: {e}", err=True)
        sys.exit(EXIT_BIND)
    finally:
        probe.close()

    import uvicorn

    from .service import create_app

    app = create_app(cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")


def _read_file(path: str) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        click.echo(f"cannot read {path}: {e}", err=True)
        sys.exit(EXIT_IMAGE)


@main.command()
@click.option("--input", "input_path", required=True, help="Color capture PNG.")
@click.option("--depth", "depth_path", default=None, help="16-bit depth PNG.")
@click.option("--near", type=float, default=None)
@click.option("--far", type=float, default=None)
@click.option("--low", type=float, default=None, help="Low edge threshold.")
@click.option("--high", type=float, default=None, help="High edge threshold.")
@click.option("--sigma", type=float, default=None, help="Blur sigma.")
@click.option("--out-dir", required=True)
def preprocess(input_path, depth_path, near, far, low, high, sigma, out_dir):
    """Write edge.png (and depth.png with --depth) for one capture."""
    if depth_path is not None and (near is None or far is None):
        click.echo("--depth requires --near and --far", err=True)
        sys.exit(EXIT_BAD_CONFIG)

    defaults = CannySettings()
    try:
        settings = CannySettings(
            low_threshold=defaults.low_threshold if low is None else low,
            high_threshold=defaults.high_threshold if high is None else high,
            sigma=defaults.sigma if sigma is None else sigma,
        )
    except ValueError as e:
        click.echo(f"bad edge settings: {e}", err=True)
        sys.exit(EXIT_BAD_CONFIG)

    os.makedirs(out_dir, exist_ok=True)
    report = {"canny": dataclasses.asdict(settings)}

    try:
        img = png.decode_png(_read_file(input_path))
        edge = canny_edges(to_grayscale(img), settings)
        edge_path = os.path.join(out_dir, "edge.png")
        with open(edge_path, "wb") as f:
            f.write(png.encode_png(edge.to_raster()))
        report["edge"] = edge_path

        if depth_path is not None:
            buf = DepthBuffer.from_png16(_read_file(depth_path), near, far)
            gray = normalize_depth(buf)
            dp = os.path.join(out_dir, "depth.png")
            with open(dp, "wb") as f:
                f.write(png.encode_png(gray.to_raster()))
            report["depth"] = dp
            report["depth_meta"] = {"near": near, "far": far}
    except ValueError as e:
        click.echo(f"image error: {e}", err=True)
        sys.exit(EXIT_IMAGE)

    click.echo(json.dumps(report, sort_keys=True))


def _surface_error(r: httpx.Response) -> str:
    try:
        doc = r.json()
        msg = doc.get("message", r.text)
        if doc.get("fields"):
            msg += " (" + ", ".join(f"{k}: {v}" for k, v in doc["fields"].items()) + ")"
        return f"{doc.get('code', r.status_code)}: {msg}"
    except ValueError:
        return f"http {r.status_code}"


@main.command()
@click.option("--server", required=True, help="Service base URL.")
@click.option("--capture", "capture_path", required=True, help="Capture PNG to upload.")
@click.option("--prompt", required=True)
@click.option("--negative", default="")
@click.option("--width", type=int, default=512)
@click.option("--height", type=int, default=512)
@click.option("--steps", type=int, default=None)
@click.option("--cfg-scale", type=float, default=None)
@click.option("--sampler", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--batch", type=int, default=None)
@click.option("--mode", type=click.Choice(["txt2img", "img2img"]), default="txt2img")
@click.option("--denoising", type=float, default=None)
@click.option("--edge/--no-edge", "edge", default=True, help="Edge conditioning.")
@click.option("--depth-control", is_flag=True, help="Depth conditioning.")
@click.option("--style", "styles", multiple=True, help="name or name:weight, repeatable.")
@click.option("--wait", is_flag=True, help="Follow the job and download results.")
@click.option("--out-dir", default=".", help="Where --wait saves results.")
def submit(
    server, capture_path, prompt, negative, width, height, steps, cfg_scale,
    sampler, seed, batch, mode, denoising, edge, depth_control, styles, wait, out_dir,
):
    """Upload a capture, start a job, optionally wait for the images."""
    color = _read_file(capture_path)
    base = server.rstrip("/")

    params: dict = {
        "prompt": prompt,
        "negative_prompt": negative,
        "width": width,
        "height": height,
        "mode": mode,
    }
    for key, val in (
        ("steps", steps), ("cfg_scale", cfg_scale), ("sampler", sampler),
        ("seed", seed), ("batch_size", batch), ("denoising_strength", denoising),
    ):
        if val is not None:
            params[key] = val
    units = []
    if edge:
        units.append({"kind": "edge"})
    if depth_control:
        units.append({"kind": "depth"})
    params["control_units"] = units
    parsed_styles = []
    for s in styles:
        name, _, w = s.partition(":")
        entry = {"name": name}
        if w:
            entry["weight"] = float(w)
        parsed_styles.append(entry)
    params["styles"] = parsed_styles

    try:
        with httpx.Client(timeout=30.0) as client:
            r = client.post(
                f"{base}/api/v1/captures",
                files={"color": ("capture.png", color, "image/png")},
            )
            if r.status_code != 201:
                click.echo(f"capture rejected, {_surface_error(r)}", err=True)
                sys.exit(EXIT_JOB_FAILED)
            capture_id = r.json()["capture_id"]

            r = client.post(
                f"{base}/api/v1/jobs",
                json={"capture_id": capture_id, "params": params},
            )
            if r.status_code != 202:
                click.echo(f"job rejected, {_surface_error(r)}", err=True)
                sys.exit(EXIT_JOB_FAILED)
            job_id = r.json()["job_id"]
            click.echo(job_id)

            if not wait:
                return
            final = _follow(client, base, job_id)
            if final.get("state") != "completed":
                click.echo(
                    f"job {final.get('state')}: {final.get('error') or ''}", err=True
                )
                sys.exit(EXIT_JOB_FAILED)
            os.makedirs(out_dir, exist_ok=True)
            for i in range(final.get("result_count", 0)):
                rr = client.get(f"{base}/api/v1/jobs/{job_id}/results/{i}")
                rr.raise_for_status()
                path = os.path.join(out_dir, f"{job_id}-{i}.png")
                with open(path, "wb") as f:
                    f.write(rr.content)
                click.echo(path)
    except httpx.TransportError as e:
        click.echo(f"server unreachable: {e}", err=True)
        sys.exit(EXIT_UNREACHABLE)


def _follow(client: httpx.Client, base: str, job_id: str) -> dict:
    """Consume the job's event stream until a terminal state event."""
    url = f"{base}/api/v1/jobs/{job_id}/events"
    with client.stream("GET", url, timeout=httpx.Timeout(30.0, read=None)) as r:
        event = None
        data = None
        for line in r.iter_lines():
            if line.startswith("event:"):
                event = line.split(":", 1)[1].strip()
            elif line.startswith("data:"):
                data = line.split(":", 1)[1].strip()
            elif line == "" and event is not None:
                payload = json.loads(data) if data else {}
                if event == "progress":
                    click.echo(f"progress {payload.get('progress', 0):.2f}", err=True)
                elif event == "state":
                    state = payload.get("state")
                    click.echo(f"state {state}", err=True)
                    if state in ("completed", "failed", "canceled"):
                        return payload
                event = None
                data = None
    return {}
