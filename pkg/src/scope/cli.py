"""Command-line entry points: run, replay, eval, serve."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .backends.http import RemoteBackendSet
from .backends.mocks import mock_backend_set
from .backends.scene import generate_synthetic_scene
from .config import SessionConfig, config_from_dict
from .errors import ScopeError, UndefinedMetricError
from .mask import load_mask_dir
from .metrics import FramePair, ReportRow, asd, dice, eval_report, sequence_means
from .session.frames import DirectoryFrameSource, SyntheticFrameSource
from .session.runner import replay_log, run_scripted_session
from .session.service import LiveSession, create_session_app


def _load_config(config_path: str | None) -> SessionConfig:
    if config_path is None:
        return SessionConfig()
    return config_from_dict(json.loads(Path(config_path).read_text()))


def _load_script(script_path: str | None) -> list[dict]:
    if script_path is None:
        return []
    lines = Path(script_path).read_text().splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def _make_frames_and_backends(frames_arg: str, backends_arg: str, seed: int, config: SessionConfig):
    scene = generate_synthetic_scene(seed)
    if frames_arg == "synthetic":
        frames = SyntheticFrameSource(scene)
    else:
        frames = DirectoryFrameSource.open(frames_arg)
    if backends_arg == "mock":
        backends = mock_backend_set(scene)
    else:
        backends = RemoteBackendSet(backends_arg)
    return frames, backends


@click.group()
def main() -> None:
    """Speech/text-guided segmentation session tooling."""


@main.command()
@click.option("--frames", "frames_arg", default="synthetic", show_default=True,
              help="directory of image frames, or 'synthetic' for the seeded stream")
@click.option("--script", "script_path", type=click.Path(exists=True), default=None,
              help="JSONL command script: one {frame, utterance} per line")
@click.option("--backends", "backends_arg", default="mock", show_default=True,
              help="'mock' or the base URL of a backend gateway")
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--log", "log_path", type=click.Path(), default=None, help="write the event log JSONL here")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON session configuration")
def run(frames_arg, script_path, backends_arg, seed, log_path, config_path) -> None:
    """Run a scripted session and write its event log."""
    config = _load_config(config_path)
    script = _load_script(script_path)
    frames, backends = _make_frames_and_backends(frames_arg, backends_arg, seed, config)
    try:
        log = run_scripted_session(frames, script, config, backends, seed, log_path=log_path)
    except ScopeError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"events: {len(log.events)}")
    click.echo(f"event_hash: {log.hash()}")
    click.echo(f"final_state_hash: {log.final_state_hash}")
    if log_path:
        click.echo(f"log: {log_path}")


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
def replay(log_path) -> None:
    """Re-run a logged session with mock backends and verify the event hash."""
    result = replay_log(log_path)
    click.echo(f"original_hash: {result.original_hash}")
    click.echo(f"replayed_hash: {result.replayed_hash}")
    click.echo(f"final_state_hash: {result.final_state_hash}")
    click.echo("replay: MATCH" if result.match else "replay: MISMATCH")
    if not result.match:
        sys.exit(1)


@main.command(name="eval")
@click.option("--pred", "pred_dir", type=click.Path(exists=True), required=True)
@click.option("--gt", "gt_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="report file; .txt or .json by extension")
@click.option("--label", default="sequence", show_default=True)
@click.option("--method", default="pred", show_default=True)
def eval_cmd(pred_dir, gt_dir, out_path, label, method) -> None:
    """Score predicted masks against ground truth (frame files paired by index)."""
    pred = load_mask_dir(pred_dir)
    gt = load_mask_dir(gt_dir)
    common = sorted(set(pred) & set(gt))
    if not common:
        raise click.ClickException("no overlapping frame indices between --pred and --gt")
    pairs = [FramePair(pred[i], gt[i]) for i in common]
    means = sequence_means(pairs)
    first = pairs[0]
    try:
        first_asd = asd(first)
    except UndefinedMetricError:
        first_asd = None
    row = ReportRow(
        label=label,
        method=method,
        dsc=dice(first),
        asd=first_asd,
        mdsc=means.mdsc,
        masd=means.masd,
    )
    report = eval_report([row])
    click.echo(report.text, nl=False)
    if means.asd_excluded:
        click.echo(f"frames excluded from mASD (undefined surface distance): {means.asd_excluded}")
    if out_path:
        out = Path(out_path)
        if out.suffix == ".json":
            out.write_text(report.to_json())
        else:
            out.write_text(report.text)
        click.echo(f"report: {out}")


@main.command()
@click.option("--port", default=8800, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--frames", "frames_arg", default="synthetic", show_default=True)
@click.option("--backends", "backends_arg", default="mock", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve(port, host, seed, frames_arg, backends_arg, config_path) -> None:
    """Start a live session and serve its event stream for the console."""
    import uvicorn

    config = _load_config(config_path)
    frames, backends = _make_frames_and_backends(frames_arg, backends_arg, seed, config)
    session = LiveSession(frames, backends, config, seed)
    app = create_session_app(session)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
