"""On-disk cohort model: recording manifests, sample files, labels, report files.

A cohort lives in a directory as one JSON manifest plus one plain-text sample
file per recording (one decimal amplitude per line; the sampling rate lives in
the manifest, not the sample file). Amplitudes are unit-agnostic: downstream
features are all time-based or amplitude-ratio-based, so absolute units cancel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

LABELS = ("LVO", "NL", "SM")
SEXES = ("male", "female", "unknown")

#: Binary classes: LVO is the positive class, NL and SM together the negative.
POSITIVE = 1
NEGATIVE = 0


@dataclass
class Recording:
    """One patient's PPG trace plus the metadata the pipeline needs.

    samples are float64 and immutable by convention: nothing downstream
    mutates them, so recordings are safe to share across parallel workers.
    """

    patient_id: str
    fs: float
    samples: np.ndarray
    label: str
    age: float | None = None
    sex: str = "unknown"

    def validate(self) -> None:
        if not self.patient_id:
            raise DataError("recording has empty patient_id")
        if not (np.isfinite(self.fs) and self.fs > 0):
            raise DataError(f"patient '{self.patient_id}': fs must be positive, got {self.fs}")
        if self.label not in LABELS:
            raise DataError(f"patient '{self.patient_id}': unknown label '{self.label}'")
        if self.sex not in SEXES:
            raise DataError(f"patient '{self.patient_id}': unknown sex '{self.sex}'")
        if self.age is not None and not (np.isfinite(self.age) and self.age > 0):
            raise DataError(f"patient '{self.patient_id}': age must be positive, got {self.age}")
        if len(self.samples) < 1:
            raise DataError(f"patient '{self.patient_id}': empty sample sequence")
        if not np.all(np.isfinite(self.samples)):
            bad = int(np.flatnonzero(~np.isfinite(self.samples))[0])
            raise DataError(f"patient '{self.patient_id}': non-finite sample at index {bad}")


def binarize_label(label: str) -> int:
    """Map a three-way class label onto the binary target (LVO -> 1, NL/SM -> 0)."""
    if label not in LABELS:
        raise DataError(f"unknown label '{label}'")
    return POSITIVE if label == "LVO" else NEGATIVE


def load_samples(path: Path | str) -> np.ndarray:
    """Read a one-amplitude-per-line sample file as float64."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"sample file not found: {path}")
    try:
        samples = np.loadtxt(path, dtype=np.float64, ndmin=1)
    except ValueError as exc:
        raise DataError(f"malformed sample file {path}: {exc}") from exc
    return samples


def write_samples(path: Path | str, samples: np.ndarray) -> None:
    """Write amplitudes one per line, using shortest exact float representation."""
    arr = np.asarray(samples, dtype=np.float64)
    Path(path).write_text("\n".join(map(repr, arr.tolist())) + "\n")


def load_manifest(path: Path | str) -> list[dict]:
    """Parse and validate a cohort manifest; malformed entries name their index."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from exc
    entries = doc.get("entries") if isinstance(doc, dict) else None
    if not isinstance(entries, list):
        raise DataError(f"manifest {path} must be an object with an 'entries' list")

    seen: set[str] = set()
    out: list[dict] = []
    for i, entry in enumerate(entries):
        def bad(msg: str) -> DataError:
            return DataError(f"manifest entry {i}: {msg}")

        if not isinstance(entry, dict):
            raise bad("entry is not an object")
        pid = entry.get("patient_id")
        if not isinstance(pid, str) or not pid:
            raise bad("missing or empty patient_id")
        if pid in seen:
            raise bad(f"duplicate patient_id '{pid}'")
        seen.add(pid)
        sample_file = entry.get("sample_file")
        if not isinstance(sample_file, str) or not sample_file:
            raise bad(f"patient '{pid}': missing sample_file")
        fs = entry.get("fs")
        if not isinstance(fs, (int, float)) or not np.isfinite(fs) or fs <= 0:
            raise bad(f"patient '{pid}': fs must be a positive number, got {fs!r}")
        label = entry.get("label")
        if label not in LABELS:
            raise bad(f"patient '{pid}': unknown label {label!r}")
        age = entry.get("age")
        if age is not None and (not isinstance(age, (int, float)) or not np.isfinite(age) or age <= 0):
            raise bad(f"patient '{pid}': age must be a positive number or null, got {age!r}")
        sex = entry.get("sex", "unknown")
        if sex not in SEXES:
            raise bad(f"patient '{pid}': unknown sex {sex!r}")
        out.append({
            "patient_id": pid,
            "sample_file": sample_file,
            "fs": float(fs),
            "label": label,
            "age": None if age is None else float(age),
            "sex": sex,
        })
    return out


def load_recording(entry: dict, base_dir: Path | str) -> Recording:
    """Load one manifest entry into a Recording (sample path relative to base_dir)."""
    sample_path = Path(base_dir) / entry["sample_file"]
    rec = Recording(
        patient_id=entry["patient_id"],
        fs=entry["fs"],
        samples=load_samples(sample_path),
        label=entry["label"],
        age=entry["age"],
        sex=entry["sex"],
    )
    rec.validate()
    return rec


def load_cohort(manifest_path: Path | str) -> list[Recording]:
    """Load every recording named by a manifest, in manifest order."""
    manifest_path = Path(manifest_path)
    entries = load_manifest(manifest_path)
    recordings = []
    for i, entry in enumerate(entries):
        try:
            recordings.append(load_recording(entry, manifest_path.parent))
        except DataError as exc:
            raise DataError(f"manifest entry {i}: {exc}") from exc
    return recordings


def write_cohort(recordings: list[Recording], out_dir: Path | str,
                 manifest_name: str = "manifest.json") -> Path:
    """Write recordings + manifest into out_dir; returns the manifest path.

    Sample files round-trip exactly: load(write(samples)) == samples bit for bit.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in recordings:
        rec.validate()
        fname = f"{rec.patient_id}.txt"
        write_samples(out_dir / fname, rec.samples)
        entries.append({
            "patient_id": rec.patient_id,
            "sample_file": fname,
            "fs": rec.fs,
            "label": rec.label,
            "age": rec.age,
            "sex": rec.sex,
        })
    manifest_path = out_dir / manifest_name
    manifest_path.write_text(json.dumps({"entries": entries}, indent=2) + "\n")
    return manifest_path


def class_counts(recordings: list[Recording]) -> dict[str, int]:
    counts = {"C1": 0, "C0": 0}
    for rec in recordings:
        counts["C1" if binarize_label(rec.label) == POSITIVE else "C0"] += 1
    return counts


def write_report(report, path: Path | str) -> None:
    """Serialize an evaluation report to JSON (numbers round-trip exactly)."""
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_report(path: Path | str):
    """Read a report written by write_report back into an EvalReport."""
    from .evaluate import EvalReport  # deferred: evaluate imports io at module load

    path = Path(path)
    if not path.is_file():
        raise DataError(f"report not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"report {path} is not valid JSON: {exc}") from exc
    return EvalReport.from_dict(doc)
