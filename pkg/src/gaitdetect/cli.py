"""Command-line front end.

Subcommands: synth, preprocess, features, train, evaluate, pipeline,
report. Exit codes: 0 success, 1 internal error, 2 user/config error,
3 data-validation error.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import logging
import os
import sys

import click

from . import __version__
from .config import load_config
from .data import write_recording
from .errors import ConfigError, DataError, GaitDetectError
from .features import WindowDataset, build_window_dataset
from .learn import DETECTOR_KINDS, DetectorModel, fit_full_detector, transfer_evaluate
from .pipeline import (load_epochs_npz, load_session_epochs, run_and_write,
                       save_epochs_npz)
from .report import EvaluationReport, aggregate_reports, summarize_predictions
from .synth import SynthConfig, generate_session

log = logging.getLogger("gaitdetect")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2
EXIT_DATA = 3


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USER)
        except DataError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except GaitDetectError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)

    return wrapper


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Pipeline configuration file.")
@click.option("--seed", type=int, default=None, help="Override the master seed.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Override the output directory.")
@click.option("--jobs", type=int, default=None, help="Worker processes for training.")
@click.option("--log-level", default="warning",
              type=click.Choice(["debug", "info", "warning", "error"]))
@click.pass_context
def main(ctx, config_path, seed, out_dir, jobs, log_level):
    logging.basicConfig(level=getattr(logging, log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"config": config_path, "seed": seed, "out": out_dir, "jobs": jobs}


def _ctx_out(ctx, fallback="out"):
    return ctx.obj.get("out") or fallback


@main.command()
@click.option("--session-id", default="synthetic")
@click.option("--n-trials", type=int, default=100)
@click.option("--fs", type=float, default=256.0)
@click.option("--mrcp-amplitude-uv", type=float, default=20.0)
@click.option("--mrcp-onset-lead-s", type=float, default=1.0)
@click.option("--carrier-freq-hz", type=float, default=0.5)
@click.option("--carrier-freq-jitter-hz", type=float, default=0.0)
@click.option("--carrier-amplitude-uv", type=float, default=5.0)
@click.option("--carrier-am-depth", type=float, default=2.5)
@click.option("--carrier-am-rate-hz", type=float, default=0.6)
@click.option("--phase-reset-lead-s", type=float, default=1.5)
@click.option("--phase-lock-lead-s", type=float, default=1.4)
@click.option("--reset-target-phase-rad", type=float, default=2.6)
@click.option("--noise-exponent", type=float, default=1.0)
@click.option("--noise-rms-uv", type=float, default=3.0)
@click.option("--white-floor-db", type=float, default=-20.0)
@click.option("--amplitude-drift-uv", type=float, default=0.0)
@click.option("--emg-rise-ms", type=float, default=100.0)
@click.option("--emg-onset-delay-ms", type=float, default=100.0)
@click.option("--emg-burst-amplitude", type=float, default=1.0)
@click.option("--emg-baseline", type=float, default=0.02)
@click.option("--footswitch/--no-footswitch", "include_footswitch", default=True)
@click.option("--violation-fraction", type=float, default=0.0)
@click.pass_context
@_handle_errors
def synth(ctx, session_id, **fields):
    """Generate a synthetic session in the session CSV format."""
    seed = ctx.obj.get("seed")
    cfg = SynthConfig(seed=seed if seed is not None else 0, **fields)
    out_dir = _ctx_out(ctx)
    os.makedirs(out_dir, exist_ok=True)
    rec, gt = generate_session(cfg, session_id=session_id)
    base = os.path.join(out_dir, session_id)
    write_recording(rec, base)
    with open(base + ".ground_truth.json", "w") as fh:
        json.dump(
            {
                "config": dataclasses.asdict(cfg),
                "trials": [dataclasses.asdict(t) for t in gt.trials],
            },
            fh, sort_keys=True, indent=1,
        )
    click.echo(f"wrote session {session_id!r} ({rec.n_samples} samples) to {out_dir}")


def _load_pipeline_config(ctx):
    path = ctx.obj.get("config")
    if not path:
        raise ConfigError("missing --config <path>")
    cfg = load_config(path)
    if ctx.obj.get("seed") is not None:
        cfg = dataclasses.replace(cfg, seed=ctx.obj["seed"])
    if ctx.obj.get("out") is not None:
        cfg = dataclasses.replace(cfg, out_dir=ctx.obj["out"])
    if ctx.obj.get("jobs") is not None:
        cfg = dataclasses.replace(cfg, jobs=ctx.obj["jobs"])
    return cfg


def _default_stage_config():
    from .config import PipelineConfig

    return PipelineConfig(subjects=(("cli", ("unused",)),))


@main.command()
@click.option("--session", "session_path", required=True, type=click.Path(),
              help="Session base path (or any of its three files).")
@click.pass_context
@_handle_errors
def preprocess(ctx, session_path):
    """Filter, detect onsets, reject violations, and epoch one session."""
    cfg = _default_stage_config()
    session_id, epochs, n_total, n_rejected = load_session_epochs(session_path, cfg)
    out_dir = _ctx_out(ctx)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{session_id}.epochs.npz")
    save_epochs_npz(path, session_id, epochs)
    click.echo(f"{session_id}: {n_total} trials, {n_rejected} rejected; wrote {path}")


@main.command()
@click.option("--epochs", "epochs_path", required=True, type=click.Path(),
              help="Epochs file written by the preprocess subcommand.")
@click.option("--kind", type=click.Choice(["amplitude", "phase", "both"]), default="both")
@click.option("--decimation", type=int, default=16)
@click.pass_context
@_handle_errors
def features(ctx, epochs_path, kind, decimation):
    """Extract window features from preprocessed epochs."""
    if not os.path.exists(epochs_path):
        raise ConfigError(f"epochs file not found: {epochs_path}")
    session_id, epochs = load_epochs_npz(epochs_path)
    out_dir = _ctx_out(ctx)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for view in ("amplitude", "phase"):
        if kind not in (view, "both"):
            continue
        ds = build_window_dataset(epochs, view, decimation=decimation)
        path = os.path.join(out_dir, f"{session_id}.{view}.csv")
        ds.write_csv(path)
        written.append(path)
    click.echo("wrote " + ", ".join(written))


@main.command()
@click.option("--amplitude", "amp_path", required=True, type=click.Path())
@click.option("--phase", "phase_path", required=True, type=click.Path())
@click.option("--kind", type=click.Choice(list(DETECTOR_KINDS)), default="amplitude_plus_phase")
@click.option("--folds", type=int, default=5)
@click.pass_context
@_handle_errors
def train(ctx, amp_path, phase_path, kind, folds):
    """Train one deployable detector on feature CSVs."""
    amp_ds = WindowDataset.read_csv(amp_path, "amplitude")
    phase_ds = WindowDataset.read_csv(phase_path, "phase")
    jobs = ctx.obj.get("jobs") or 1
    model = fit_full_detector(kind, amp_ds, phase_ds, n_folds=folds, n_jobs=jobs)
    out_dir = _ctx_out(ctx)
    os.makedirs(out_dir, exist_ok=True)
    model_path = os.path.join(out_dir, f"model.{kind}.json")
    model.save(model_path)
    click.echo(f"wrote {model_path} (threshold {model.threshold:.3f})")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--amplitude", "amp_path", required=True, type=click.Path())
@click.option("--phase", "phase_path", required=True, type=click.Path())
@click.option("--subject", default="cli")
@click.option("--session", default="transfer")
@click.pass_context
@_handle_errors
def evaluate(ctx, model_path, amp_path, phase_path, subject, session):
    """Apply a trained detector to feature CSVs and report metrics."""
    model = DetectorModel.load(model_path)
    amp_ds = WindowDataset.read_csv(amp_path, "amplitude")
    phase_ds = WindowDataset.read_csv(phase_path, "phase")
    preds = transfer_evaluate(model, amp_ds, phase_ds)
    entry = summarize_predictions(preds, "intersession", subject, session, model.kind)
    report = EvaluationReport(entries=(entry,))
    out_dir = _ctx_out(ctx)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    report.save_json(path)
    click.echo(
        f"AUC {entry.auc:.3f}, kappa {entry.kappa:.3f}, "
        f"trial accuracy {entry.trial_accuracy_pct:.1f}%; wrote {path}"
    )


@main.command()
@click.pass_context
@_handle_errors
def pipeline(ctx):
    """Run the full batch pipeline from a configuration file."""
    cfg = _load_pipeline_config(ctx)
    report_path = run_and_write(cfg)
    click.echo(f"wrote {report_path}")


@main.command(name="report")
@click.argument("report_paths", nargs=-1, type=click.Path())
@click.pass_context
@_handle_errors
def report_cmd(ctx, report_paths):
    """Aggregate evaluation reports into plot-ready CSV tables."""
    if not report_paths:
        raise ConfigError("report: at least one report JSON is required")
    written = aggregate_reports(list(report_paths), _ctx_out(ctx))
    click.echo("wrote " + ", ".join(written))


if __name__ == "__main__":
    main()
