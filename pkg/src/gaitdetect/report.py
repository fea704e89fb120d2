"""Evaluation reports: summary of detector predictions, JSON/CSV output,
and aggregation of multiple reports into figure-shaped tables."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .metrics import cohens_kappa, empirical_chance_level, roc_auc

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ReportEntry:
    regime: str  # intrasession | intersession | intersubject
    subject: str
    session: str  # session id, or "source->target" for transfers
    model_kind: str
    auc: float
    kappa: float
    chance_level_pct: float
    trial_accuracy_pct: float
    mean_detection_time_s: float | None
    n_trials: int
    n_windows: int
    roc_points: tuple = ()
    per_fold: tuple = ()

    def key(self):
        return (self.regime, self.subject, self.session, self.model_kind)


@dataclass(frozen=True)
class EvaluationReport:
    entries: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def entry(self, regime: str, model_kind: str, subject: str | None = None,
              session: str | None = None) -> ReportEntry:
        for e in self.entries:
            if e.regime == regime and e.model_kind == model_kind \
                    and (subject is None or e.subject == subject) \
                    and (session is None or e.session == session):
                return e
        raise DataError(f"no report entry for ({regime}, {model_kind}, {subject}, {session})")

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "entries": [
                {
                    "regime": e.regime,
                    "subject": e.subject,
                    "session": e.session,
                    "model_kind": e.model_kind,
                    "auc": e.auc,
                    "kappa": e.kappa,
                    "chance_level_pct": e.chance_level_pct,
                    "trial_accuracy_pct": e.trial_accuracy_pct,
                    "mean_detection_time_s": e.mean_detection_time_s,
                    "n_trials": e.n_trials,
                    "n_windows": e.n_windows,
                    "roc_points": [list(p) for p in e.roc_points],
                    "per_fold": [dict(f) for f in e.per_fold],
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvaluationReport":
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise DataError(f"unsupported report schema version {doc.get('schema_version')}")
        entries = []
        for e in doc["entries"]:
            entries.append(ReportEntry(
                regime=e["regime"], subject=e["subject"], session=e["session"],
                model_kind=e["model_kind"], auc=e["auc"], kappa=e["kappa"],
                chance_level_pct=e["chance_level_pct"],
                trial_accuracy_pct=e["trial_accuracy_pct"],
                mean_detection_time_s=e["mean_detection_time_s"],
                n_trials=e["n_trials"], n_windows=e["n_windows"],
                roc_points=tuple(tuple(p) for p in e["roc_points"]),
                per_fold=tuple(e["per_fold"]),
            ))
        return cls(entries=tuple(entries))

    def save_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load_json(cls, path: str) -> "EvaluationReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save_csv(self, path: str) -> None:
        """One row per regime x subject x session x model."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["regime", "subject", "session", "model_kind", "auc", "kappa",
                             "chance_level_pct", "trial_accuracy_pct",
                             "mean_detection_time_s", "n_trials", "n_windows"])
            for e in self.entries:
                writer.writerow([e.regime, e.subject, e.session, e.model_kind,
                                 repr(e.auc), repr(e.kappa), repr(e.chance_level_pct),
                                 repr(e.trial_accuracy_pct),
                                 "" if e.mean_detection_time_s is None
                                 else repr(e.mean_detection_time_s),
                                 e.n_trials, e.n_windows])


def summarize_predictions(predictions, regime: str, subject: str, session: str,
                          model_kind: str, per_fold=()) -> ReportEntry:
    """Build a report entry from a flat list of TrialPrediction."""
    if not predictions:
        raise DataError("no predictions to summarize")
    probs = np.concatenate([p.probabilities for p in predictions])
    labels = np.concatenate([np.asarray(p.labels, dtype=bool) for p in predictions])
    flags = np.concatenate([np.asarray(p.outcome.window_flags, dtype=bool)
                            for p in predictions])
    curve = roc_auc(probs, labels)
    tp = int((flags & labels).sum())
    fn = int((~flags & labels).sum())
    fp = int((flags & ~labels).sum())
    tn = int((~flags & ~labels).sum())
    kappa = cohens_kappa([[tp, fn], [fp, tn]])
    chance = empirical_chance_level(labels.size, float(labels.mean()))
    correct = [p.outcome.correct for p in predictions]
    times = [p.outcome.detection_time_s for p in predictions if p.outcome.correct]
    return ReportEntry(
        regime=regime,
        subject=subject,
        session=session,
        model_kind=model_kind,
        auc=curve.auc,
        kappa=kappa,
        chance_level_pct=chance,
        trial_accuracy_pct=100.0 * float(np.mean(correct)),
        mean_detection_time_s=float(np.mean(times)) if times else None,
        n_trials=len(predictions),
        n_windows=int(labels.size),
        roc_points=curve.points,
        per_fold=tuple(per_fold),
    )


def aggregate_reports(paths, out_dir: str) -> list[str]:
    """Merge report JSONs into flat tables for external plotting.

    Writes ``roc_points.csv`` (window-level ROC curves), ``trial_accuracy.csv``
    and ``latency.csv``, each keyed by regime/subject/session/model.
    """
    if not paths:
        raise DataError("no report files given")
    reports = [EvaluationReport.load_json(p) for p in paths]
    os.makedirs(out_dir, exist_ok=True)
    written = []

    roc_path = os.path.join(out_dir, "roc_points.csv")
    with open(roc_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["regime", "subject", "session", "model_kind",
                         "fpr", "tpr", "threshold", "auc"])
        for rep in reports:
            for e in rep.entries:
                for fpr, tpr, thr in e.roc_points:
                    writer.writerow([e.regime, e.subject, e.session, e.model_kind,
                                     repr(fpr), repr(tpr), repr(thr), repr(e.auc)])
    written.append(roc_path)

    acc_path = os.path.join(out_dir, "trial_accuracy.csv")
    with open(acc_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["regime", "subject", "session", "model_kind",
                         "trial_accuracy_pct", "kappa", "chance_level_pct", "n_trials"])
        for rep in reports:
            for e in rep.entries:
                writer.writerow([e.regime, e.subject, e.session, e.model_kind,
                                 repr(e.trial_accuracy_pct), repr(e.kappa),
                                 repr(e.chance_level_pct), e.n_trials])
    written.append(acc_path)

    lat_path = os.path.join(out_dir, "latency.csv")
    with open(lat_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["regime", "subject", "session", "model_kind",
                         "mean_detection_time_s"])
        for rep in reports:
            for e in rep.entries:
                if e.mean_detection_time_s is not None:
                    writer.writerow([e.regime, e.subject, e.session, e.model_kind,
                                     repr(e.mean_detection_time_s)])
    written.append(lat_path)
    return written
