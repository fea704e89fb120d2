"""Batch orchestration: ingest -> filter -> onsets -> reject -> epoch ->
features -> train -> evaluate across the three regimes.

Every fitting step records which sessions it touched in an access audit so
tests can assert that no test-session data leaks into training.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, dsp, preprocess
from .config import PipelineConfig
from .data import EventKind, parse_recording, slice_epoch
from .errors import DataError, GaitDetectError
from .features import build_window_dataset
from .learn import fit_full_detector, make_fold_plan, train_all_detectors, transfer_evaluate
from .report import EvaluationReport, summarize_predictions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SessionData:
    subject_id: str
    session_id: str
    amp_ds: object
    phase_ds: object
    n_trials_total: int
    n_rejected: int


class AccessAudit:
    """Records which sessions each fit/eval step read."""

    def __init__(self):
        self.records = []

    def record(self, stage: str, regime: str, sessions) -> None:
        self.records.append({"stage": stage, "regime": regime,
                             "sessions": sorted(sessions)})

    def fit_sessions(self, regime: str):
        out = set()
        for r in self.records:
            if r["stage"] == "fit" and r["regime"] == regime:
                out.update(r["sessions"])
        return out


def _stage(name: str, context: str = ""):
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, GaitDetectError):
                note = f"stage {name}" + (f" ({context})" if context else "")
                exc.args = (f"{note}: {exc.args[0]}",) if exc.args else (note,)
            return False

    return _StageContext()


def load_session_epochs(session_path: str, cfg: PipelineConfig):
    """Ingest one session: filter, detect onsets, reject, epoch.

    Returns (session_id, epochs, n_trials_total, n_rejected).
    """
    with _stage("ingest", session_path):
        rec = parse_recording(session_path)
    fs = rec.sampling_rate_hz
    filt_cfg = cfg.filters

    with _stage("filter", rec.session_id):
        eeg_wide = dsp.design_butterworth_bandpass(filt_cfg.order, *filt_cfg.eeg_band_hz, fs)
        mrcp_band = dsp.design_butterworth_bandpass(filt_cfg.order, *filt_cfg.mrcp_band_hz, fs)
        eeg_rows = np.array(rec.eeg_channel_indices, dtype=int)
        filtered = np.array(rec.samples, dtype=float)
        filtered[eeg_rows] = dsp.filtfilt(mrcp_band, dsp.filtfilt(eeg_wide, filtered[eeg_rows]))

    with _stage("onset", rec.session_id):
        cues = sorted(rec.events_of_kind(EventKind.CUE), key=lambda e: e.trial_index)
        if not cues:
            raise DataError(f"session {rec.session_id} has no cue events")
        releases = rec.events_of_kind(EventKind.FOOTSWITCH_RELEASE)
        if releases:
            by_trial = {e.trial_index: e for e in releases}
            onsets = []
            for cue in cues:
                if cue.trial_index not in by_trial:
                    raise DataError(f"trial {cue.trial_index} has no footswitch release")
                onsets.append(preprocess.OnsetResult(
                    trial_index=cue.trial_index,
                    onset_time_s=preprocess.onset_from_footswitch(
                        by_trial[cue.trial_index].time_s),
                    method=preprocess.OnsetMethod.FOOTSWITCH,
                ))
        else:
            if not rec.emg_channel_indices:
                raise DataError(f"session {rec.session_id} has neither footswitch nor EMG")
            emg_filter = dsp.design_butterworth_bandpass(
                filt_cfg.order, *filt_cfg.emg_band_hz, fs)
            emg = dsp.filtfilt(emg_filter, rec.samples[rec.emg_channel_indices[0]])
            # cue-locked EMG trials of equal length
            span = min(
                int(np.diff([c.time_s for c in cues]).min() * fs) if len(cues) > 1
                else rec.n_samples - int(cues[0].time_s * fs),
                rec.n_samples - int(round(cues[-1].time_s * fs)),
            )
            trials = []
            for cue in cues:
                start = int(round(cue.time_s * fs))
                trials.append((cue.trial_index, emg[start:start + span]))
            rel = preprocess.onset_from_emg(trials, fs)
            onsets = [
                r if r.rejected else preprocess.OnsetResult(
                    trial_index=r.trial_index,
                    onset_time_s=cues[i].time_s + r.onset_time_s,
                    method=r.method,
                )
                for i, r in enumerate(rel)
            ]

    with _stage("reject", rec.session_id):
        onsets = preprocess.reject_protocol_violations(onsets, [c.time_s for c in cues])

    with _stage("epoch", rec.session_id):
        rec_filtered = rec.with_samples(filtered)
        epochs = []
        for onset in onsets:
            if onset.rejected:
                continue
            epochs.append(slice_epoch(rec_filtered, onset.onset_time_s,
                                      trial_index=onset.trial_index))
        if not epochs:
            raise DataError(f"session {rec.session_id}: no trials left after rejection")

    n_rejected = sum(1 for o in onsets if o.rejected)
    return rec.session_id, epochs, len(onsets), n_rejected


def build_session_datasets(session_id: str, epochs, cfg: PipelineConfig):
    with _stage("features", session_id):
        amp_ds = build_window_dataset(epochs, "amplitude", cfg.window_spec,
                                      cfg.channels, cfg.decimation)
        phase_ds = build_window_dataset(epochs, "phase", cfg.window_spec,
                                        cfg.channels, cfg.decimation)
    return amp_ds, phase_ds


def load_session(subject_id: str, session_path: str, cfg: PipelineConfig) -> SessionData:
    """Ingest one session and produce the two aligned window datasets."""
    session_id, epochs, n_total, n_rejected = load_session_epochs(session_path, cfg)
    amp_ds, phase_ds = build_session_datasets(session_id, epochs, cfg)
    return SessionData(subject_id=subject_id, session_id=session_id,
                       amp_ds=amp_ds, phase_ds=phase_ds,
                       n_trials_total=n_total, n_rejected=n_rejected)


def save_epochs_npz(path: str, session_id: str, epochs) -> None:
    """Persist preprocessed epochs for the stage-wise CLI."""
    np.savez_compressed(
        path,
        session_id=session_id,
        data=np.stack([ep.data for ep in epochs]),
        trial_indices=np.array([ep.trial_index for ep in epochs]),
        onset_times=np.array([ep.onset_time_s for ep in epochs]),
        fs=epochs[0].sampling_rate_hz,
        channel_names=np.array(epochs[0].channel_names),
    )


def load_epochs_npz(path: str):
    """Inverse of save_epochs_npz; returns (session_id, epochs)."""
    from .data import Epoch

    with np.load(path, allow_pickle=False) as archive:
        fs = float(archive["fs"])
        channel_names = tuple(str(c) for c in archive["channel_names"])
        epochs = [
            Epoch(trial_index=int(t), onset_time_s=float(o), data=d,
                  sampling_rate_hz=fs, channel_names=channel_names)
            for t, o, d in zip(archive["trial_indices"], archive["onset_times"],
                               archive["data"])
        ]
        return str(archive["session_id"]), epochs


def _concat_datasets(datasets):
    """Concatenate aligned WindowDatasets, renumbering trials sequentially."""
    from .features import WindowDataset

    first = datasets[0]
    trials = []
    offset = 0
    for ds in datasets:
        for _t, fvs in ds.trials:
            trials.append((offset, fvs))
            offset += 1
    return WindowDataset(kind=first.kind, channels=first.channels,
                         trials=tuple(trials), spec=first.spec)


def run_pipeline(cfg: PipelineConfig, audit: AccessAudit | None = None) -> EvaluationReport:
    """Run all applicable evaluation regimes and return the report."""
    cfg.validate()
    audit = audit if audit is not None else AccessAudit()
    sessions_by_subject = {}
    for subject_id, session_paths in cfg.subjects:
        sessions_by_subject[subject_id] = [
            load_session(subject_id, path, cfg) for path in session_paths
        ]
        for sd in sessions_by_subject[subject_id]:
            log.info("loaded %s/%s: %d trials (%d rejected)", subject_id, sd.session_id,
                     sd.n_trials_total, sd.n_rejected)

    entries = []
    train_kwargs = dict(strict_forward=cfg.strict_forward, n_jobs=cfg.jobs)

    # intrasession: nested CV within each session
    for subject_id, _paths in cfg.subjects:
        for sd in sessions_by_subject[subject_id]:
            with _stage("train-intrasession", f"{subject_id}/{sd.session_id}"):
                plan = make_fold_plan(sd.amp_ds.n_trials, cfg.cv.outer_folds,
                                      cfg.cv.inner_folds)
                audit.record("fit", "intrasession", [sd.session_id])
                results = train_all_detectors(sd.amp_ds, sd.phase_ds, plan,
                                              kinds=cfg.models, **train_kwargs)
            for kind in cfg.models:
                res = results[kind]
                per_fold = [
                    {"fold": k, **params,
                     "trial_accuracy_pct": 100.0 * float(np.mean(
                         [p.outcome.correct for p in preds]))}
                    for k, (params, preds) in enumerate(
                        zip(res.fold_params, res.fold_predictions))
                ]
                entries.append(summarize_predictions(
                    res.all_predictions(), "intrasession", subject_id,
                    sd.session_id, kind, per_fold))

    # intersession: train on one session, test on the next
    for subject_id, _paths in cfg.subjects:
        sessions = sessions_by_subject[subject_id]
        for src, dst in zip(sessions, sessions[1:]):
            for kind in cfg.models:
                with _stage("train-intersession", f"{subject_id}/{src.session_id}"):
                    audit.record("fit", "intersession", [src.session_id])
                    model = fit_full_detector(kind, src.amp_ds, src.phase_ds,
                                              n_folds=cfg.cv.inner_folds, **train_kwargs)
                with _stage("evaluate-intersession", f"{subject_id}/{dst.session_id}"):
                    audit.record("eval", "intersession", [dst.session_id])
                    preds = transfer_evaluate(model, dst.amp_ds, dst.phase_ds)
                entries.append(summarize_predictions(
                    preds, "intersession", subject_id,
                    f"{src.session_id}->{dst.session_id}", kind))

    # intersubject: leave-one-subject-out at each session position
    subject_ids = [sid for sid, _ in cfg.subjects]
    if len(subject_ids) >= 2:
        n_positions = min(len(sessions_by_subject[sid]) for sid in subject_ids)
        for pos in range(n_positions):
            for held_out in subject_ids:
                others = [sid for sid in subject_ids if sid != held_out]
                src_amp = _concat_datasets(
                    [sessions_by_subject[sid][pos].amp_ds for sid in others])
                src_phase = _concat_datasets(
                    [sessions_by_subject[sid][pos].phase_ds for sid in others])
                target = sessions_by_subject[held_out][pos]
                for kind in cfg.models:
                    with _stage("train-intersubject", f"pos{pos}/not-{held_out}"):
                        audit.record("fit", "intersubject",
                                     [sessions_by_subject[sid][pos].session_id
                                      for sid in others])
                        model = fit_full_detector(kind, src_amp, src_phase,
                                                  n_folds=cfg.cv.inner_folds,
                                                  **train_kwargs)
                    with _stage("evaluate-intersubject", f"{held_out}/pos{pos}"):
                        audit.record("eval", "intersubject", [target.session_id])
                        preds = transfer_evaluate(model, target.amp_ds, target.phase_ds)
                    entries.append(summarize_predictions(
                        preds, "intersubject", held_out, target.session_id, kind))

    return EvaluationReport(entries=tuple(entries))


def run_and_write(cfg: PipelineConfig) -> str:
    """Run the pipeline and write report + manifest under cfg.out_dir.

    Returns the report JSON path. The manifest (run.json) is the only
    output containing a timestamp.
    """
    audit = AccessAudit()
    report = run_pipeline(cfg, audit)
    os.makedirs(cfg.out_dir, exist_ok=True)
    report_path = os.path.join(cfg.out_dir, "report.json")
    report.save_json(report_path)
    report.save_csv(os.path.join(cfg.out_dir, "report.csv"))
    manifest = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "access_audit": audit.records,
    }
    with open(os.path.join(cfg.out_dir, "run.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return report_path
