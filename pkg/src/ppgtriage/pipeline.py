"""End-to-end orchestration: filter, window, screen, extract, assemble.

Per-recording work is pure, so cohorts parallelize over recordings with
results identical to sequential execution (workers return small feature rows,
not waveforms; the manifest-based entry point lets each worker load its own
sample file).
"""

from __future__ import annotations

import json
from functools import partial
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import SignalTooShortError
from .features import (MOR_NAMES, FeatureMatrix, aggregate_window_mor, assemble_matrix,
                       brv_features, mor_features_per_beat)
from .fiducials import detect_beats, locate_fiducials, smooth_derivatives
from .io import Recording, load_manifest, load_recording, write_samples
from .preprocess import compute_sqi, design_bandpass, filter_recording, segment_windows
from .synth import CohortSpec, cohort_labels, synth_recording
from .utils import pmap

WindowRow = tuple[str, int, dict]


def process_recording(recording: Recording, config: RunConfig
                      ) -> tuple[list[WindowRow], dict]:
    """Filter one recording, screen its windows, and extract features for the
    kept ones. Returns (feature rows, screening entry)."""
    design = design_bandpass(recording.fs, config.band_low_hz, config.band_high_hz,
                             config.filter_order)
    filtered = filter_recording(recording, design)
    windows = segment_windows(filtered, config.window_s)
    rows: list[WindowRow] = []
    screened = []
    for window in windows:
        spans = detect_beats(window.samples, window.fs)
        sqi = compute_sqi(window, spans, sqi_threshold=config.sqi_threshold,
                          am_threshold=config.am_threshold, min_beats=config.min_beats)
        window.sqi = sqi
        window.kept = sqi.kept
        screened.append({
            "window_index": window.window_index,
            "verdict": sqi.verdict,
            "score": sqi.score,
            "am_ratio": None if sqi.amplitude_modulation_ratio is None
                        or not np.isfinite(sqi.amplitude_modulation_ratio)
                        else sqi.amplitude_modulation_ratio,
            "n_beats": sqi.n_beats,
        })
        if not sqi.kept:
            continue
        per_beat = []
        intervals = []
        for span in spans:
            beat = window.samples[span.onset:span.next_onset]
            intervals.append(span.length / window.fs)
            try:
                derivatives = smooth_derivatives(beat, window.fs)
            except SignalTooShortError:
                continue
            fid = locate_fiducials(beat, window.fs, derivatives)
            per_beat.append(mor_features_per_beat(beat, window.fs, fid, derivatives))
        values = aggregate_window_mor(per_beat) if per_beat else {n: np.nan for n in MOR_NAMES}
        values.update(brv_features(intervals))
        rows.append((window.patient_id, window.window_index, values))
    screening = {
        "patient_id": recording.patient_id,
        "n_windows": len(windows),
        "kept": int(sum(w.kept for w in windows)),
        "windows": screened,
    }
    return rows, screening


def _screening_log(entries: list[dict]) -> dict:
    total = sum(e["n_windows"] for e in entries)
    kept = sum(e["kept"] for e in entries)
    by_reason: dict[str, int] = {}
    for entry in entries:
        for w in entry["windows"]:
            if w["verdict"] != "kept":
                by_reason[w["verdict"]] = by_reason.get(w["verdict"], 0) + 1
    return {
        "windows_total": total,
        "kept": kept,
        "excluded": total - kept,
        "excluded_by_reason": dict(sorted(by_reason.items())),
        "recordings": entries,
    }


def _process_in_memory(recording: Recording, config: RunConfig):
    rows, screening = process_recording(recording, config)
    return rows, screening


def extract_matrix(recordings: list[Recording], config: RunConfig | None = None,
                   workers: int | None = 1) -> tuple[FeatureMatrix, dict]:
    """Extract the labeled feature matrix from in-memory recordings."""
    config = config or RunConfig()
    results = pmap(partial(_process_in_memory, config=config), recordings, workers=workers)
    rows = [row for result in results for row in result[0]]
    screening = _screening_log([result[1] for result in results])
    return assemble_matrix(rows, recordings), screening


def _process_entry(entry: dict, base_dir: str, config: RunConfig):
    recording = load_recording(entry, base_dir)
    rows, screening = process_recording(recording, config)
    meta = Recording(patient_id=recording.patient_id, fs=recording.fs,
                     samples=np.zeros(1), label=recording.label,
                     age=recording.age, sex=recording.sex)
    return rows, screening, meta


def extract_cohort(manifest_path: Path | str, config: RunConfig | None = None,
                   workers: int | None = 1) -> tuple[FeatureMatrix, dict]:
    """Extract features for a cohort on disk; workers load their own recordings."""
    config = config or RunConfig()
    manifest_path = Path(manifest_path)
    entries = load_manifest(manifest_path)
    worker = partial(_process_entry, base_dir=str(manifest_path.parent), config=config)
    results = pmap(worker, entries, workers=workers)
    rows = [row for result in results for row in result[0]]
    screening = _screening_log([result[1] for result in results])
    return assemble_matrix(rows, [result[2] for result in results]), screening


def _synth_and_write(task: tuple, out_dir: str):
    spec, label, index = task
    patient_id = f"{label}-{index:04d}"
    recording = synth_recording(spec, label, patient_id, stream=index)
    fname = f"{patient_id}.txt"
    write_samples(Path(out_dir) / fname, recording.samples)
    return {
        "patient_id": patient_id,
        "sample_file": fname,
        "fs": recording.fs,
        "label": recording.label,
        "age": recording.age,
        "sex": recording.sex,
    }


def synth_cohort_to_dir(spec: CohortSpec, out_dir: Path | str,
                        workers: int | None = 1) -> Path:
    """Generate a cohort straight to disk (manifest + sample files)."""
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(spec, label, idx) for idx, label in enumerate(cohort_labels(spec))]
    entries = pmap(partial(_synth_and_write, out_dir=str(out_dir)), tasks, workers=workers)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps({"entries": entries}, indent=2) + "\n")
    return manifest_path
