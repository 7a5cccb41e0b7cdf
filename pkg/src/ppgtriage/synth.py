"""Synthetic PPG cohort generator.

Each beat is a sum of two Gaussian waves (systolic + diastolic); every pulse
landmark the feature catalog needs is well defined and numerically computable
on that shape. Beat-to-beat periods come from a per-recording seeded normal
draw (optionally AR(1)-correlated so short-term variability is controllable),
and recordings add white noise plus sinusoidal baseline wander.

Generation is a pure function of the cohort description including the seed:
each recording uses an independent substream keyed by (seed, patient index),
so parallel generation is deterministic regardless of schedule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError
from .io import Recording

MIN_PERIOD_S = 0.3
MAX_PERIOD_S = 2.0


@dataclass
class BeatModel:
    """Two-Gaussian pulse template, times in seconds from beat onset."""

    systolic_amp: float = 1.0
    systolic_center: float = 0.30
    systolic_width: float = 0.10
    diastolic_amp: float = 0.30
    diastolic_center: float = 0.56
    diastolic_width: float = 0.06

    def validate(self) -> None:
        if self.systolic_width <= 0 or self.diastolic_width <= 0:
            raise ConfigError("beat widths must be positive")
        if self.systolic_amp <= 0:
            raise ConfigError("systolic amplitude must be positive")
        # a zero diastolic amplitude is allowed: it degenerates to a single wave
        if self.diastolic_amp < 0 or self.diastolic_amp >= self.systolic_amp:
            raise ConfigError("diastolic amplitude must be in [0, systolic_amp)")
        if not (0 < self.systolic_center < self.diastolic_center):
            raise ConfigError("need 0 < systolic_center < diastolic_center")


@dataclass
class ClassParams:
    """Per-class generation parameters: morphology, rate statistics, ages."""

    beat: BeatModel = field(default_factory=BeatModel)
    mean_hr_bpm: float = 70.0
    hr_sd_bpm: float = 2.0
    hr_ar: float = 0.0          # AR(1) coefficient on beat-period deviations
    age_range: tuple[float, float] = (60.0, 80.0)

    def validate(self) -> None:
        self.beat.validate()
        if not (20.0 < self.mean_hr_bpm < 250.0):
            raise ConfigError(f"mean_hr_bpm must be in (20, 250), got {self.mean_hr_bpm}")
        if self.hr_sd_bpm < 0:
            raise ConfigError("hr_sd_bpm must be >= 0")
        if not (-1.0 < self.hr_ar < 1.0):
            raise ConfigError("hr_ar must be in (-1, 1)")
        if self.beat.diastolic_center >= 60.0 / self.mean_hr_bpm:
            raise ConfigError("diastolic_center must fall inside the nominal beat period")
        lo, hi = self.age_range
        if not (0 < lo <= hi):
            raise ConfigError(f"age_range must satisfy 0 < lo <= hi, got {self.age_range}")


@dataclass
class CohortSpec:
    """Complete description of a synthetic cohort, including the master seed."""

    n_positive: int = 25
    n_negative: int = 61
    duration_s: float = 600.0
    fs: float = 1000.0
    positive: ClassParams = field(default_factory=ClassParams)
    negative: ClassParams = field(default_factory=ClassParams)
    noise_sd: float = 0.01          # relative to the class systolic amplitude
    wander_amp: float = 0.1         # relative to the class systolic amplitude
    wander_freq_hz: float = 0.25
    male_fraction: float = 0.65
    seed: int = 0

    def validate(self) -> None:
        if self.n_positive < 0 or self.n_negative < 0:
            raise ConfigError("cohort counts must be >= 0")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.fs <= 0:
            raise ConfigError("fs must be positive")
        if self.noise_sd < 0 or self.wander_amp < 0 or self.wander_freq_hz < 0:
            raise ConfigError("noise_sd, wander_amp, wander_freq_hz must be >= 0")
        if not (0.0 <= self.male_fraction <= 1.0):
            raise ConfigError("male_fraction must be in [0, 1]")
        self.positive.validate()
        self.negative.validate()


def synth_beat(model: BeatModel, t) -> np.ndarray:
    """Evaluate the two-Gaussian pulse template at time(s) t seconds from onset."""
    t = np.asarray(t, dtype=np.float64)
    sys_wave = model.systolic_amp * np.exp(
        -((t - model.systolic_center) ** 2) / (2.0 * model.systolic_width**2))
    dia_wave = model.diastolic_amp * np.exp(
        -((t - model.diastolic_center) ** 2) / (2.0 * model.diastolic_width**2))
    return sys_wave + dia_wave


def _draw_periods(rng: np.random.Generator, params: ClassParams, duration_s: float) -> np.ndarray:
    """Beat periods covering at least duration_s, clamped to a physiologic range.

    Mean period is 60/mean_hr; the rate sd is mapped onto a period sd by the
    local linearization sd_period = 60*hr_sd/mean_hr^2. AR(1) innovations are
    scaled so the stationary sd equals sd_period.
    """
    mean_period = 60.0 / params.mean_hr_bpm
    sd_period = 60.0 * params.hr_sd_bpm / params.mean_hr_bpm**2
    n = int(duration_s / mean_period * 1.5) + 20
    periods = np.empty(0)
    while periods.sum() < duration_s:
        first = rng.normal(0.0, sd_period)
        eps = rng.normal(0.0, sd_period * math.sqrt(max(0.0, 1.0 - params.hr_ar**2)), n)
        eps[0] = first
        dev = lfilter([1.0], [1.0, -params.hr_ar], eps)
        block = np.clip(mean_period + dev, MIN_PERIOD_S, MAX_PERIOD_S)
        periods = np.concatenate([periods, block])
    return periods


def synth_recording(spec: CohortSpec, label: str, patient_id: str, stream: int) -> Recording:
    """Generate one recording; `stream` keys the independent RNG substream.

    Draw order is fixed (age, sex, wander phase, periods, noise) so outputs are
    reproducible for a given (spec.seed, stream) pair.
    """
    params = spec.positive if label == "LVO" else spec.negative
    rng = np.random.default_rng([spec.seed, stream])

    age = float(rng.uniform(*params.age_range))
    sex = "male" if rng.random() < spec.male_fraction else "female"
    phase = float(rng.uniform(0.0, 2.0 * math.pi))

    n_samples = round(spec.duration_s * spec.fs)
    periods = _draw_periods(rng, params, spec.duration_s)
    onsets = np.concatenate([[0.0], np.cumsum(periods)])

    mean_period = 60.0 / params.mean_hr_bpm
    signal = np.zeros(n_samples)
    for k in range(len(periods)):
        i0 = round(onsets[k] * spec.fs)
        i1 = min(round(onsets[k + 1] * spec.fs), n_samples)
        if i0 >= n_samples:
            break
        # stretch the nominal-period template onto this beat's drawn period
        t_local = np.arange(i0, i1) / spec.fs - onsets[k]
        signal[i0:i1] = synth_beat(params.beat, t_local * (mean_period / periods[k]))

    if spec.wander_amp > 0:
        t = np.arange(n_samples) / spec.fs
        signal = signal + spec.wander_amp * params.beat.systolic_amp * np.sin(
            2.0 * math.pi * spec.wander_freq_hz * t + phase)
    if spec.noise_sd > 0:
        signal = signal + rng.normal(0.0, spec.noise_sd * params.beat.systolic_amp, n_samples)

    return Recording(patient_id=patient_id, fs=spec.fs, samples=signal,
                     label=label, age=age, sex=sex)


def cohort_labels(spec: CohortSpec) -> list[str]:
    """Class label per patient index: positives first, negatives alternate NL/SM."""
    labels = ["LVO"] * spec.n_positive
    for j in range(spec.n_negative):
        labels.append("NL" if j % 2 == 0 else "SM")
    return labels


def synth_cohort(spec: CohortSpec) -> list[Recording]:
    """Generate the full cohort described by spec, deterministically."""
    spec.validate()
    labels = cohort_labels(spec)
    recordings = []
    for idx, label in enumerate(labels):
        pid = f"{label}-{idx:04d}"
        recordings.append(synth_recording(spec, label, pid, stream=idx))
    return recordings


def separated_cohort_spec(n_positive: int = 25, n_negative: int = 61,
                          duration_s: float = 600.0, fs: float = 1000.0,
                          seed: int = 0) -> CohortSpec:
    """Cohort whose classes differ strongly in morphology and rate variability:
    the positive class has a larger, earlier reflected wave and steadier rhythm."""
    positive = ClassParams(
        beat=BeatModel(1.0, 0.28, 0.09, 0.45, 0.50, 0.055),
        mean_hr_bpm=78.0, hr_sd_bpm=1.2)
    negative = ClassParams(
        beat=BeatModel(1.0, 0.30, 0.10, 0.30, 0.56, 0.06),
        mean_hr_bpm=70.0, hr_sd_bpm=3.0)
    return CohortSpec(n_positive=n_positive, n_negative=n_negative, duration_s=duration_s,
                      fs=fs, positive=positive, negative=negative, seed=seed)


def matched_cohort_spec(n_positive: int = 25, n_negative: int = 61,
                        duration_s: float = 600.0, fs: float = 1000.0,
                        seed: int = 0) -> CohortSpec:
    """Cohort with identical parameters for both classes: no real signal."""
    params = ClassParams(beat=BeatModel(1.0, 0.30, 0.10, 0.30, 0.56, 0.06),
                         mean_hr_bpm=72.0, hr_sd_bpm=2.2)
    return CohortSpec(n_positive=n_positive, n_negative=n_negative, duration_s=duration_s,
                      fs=fs, positive=params,
                      negative=ClassParams(beat=BeatModel(1.0, 0.30, 0.10, 0.30, 0.56, 0.06),
                                           mean_hr_bpm=72.0, hr_sd_bpm=2.2),
                      seed=seed)


def _class_params_from_dict(doc: dict, where: str) -> ClassParams:
    known = {"beat", "mean_hr_bpm", "hr_sd_bpm", "hr_ar", "age_range"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    params = ClassParams()
    if "beat" in doc:
        beat_doc = doc["beat"]
        bad = set(beat_doc) - set(asdict(BeatModel()))
        if bad:
            raise ConfigError(f"{where}.beat: unknown keys {sorted(bad)}")
        params.beat = BeatModel(**{k: float(v) for k, v in beat_doc.items()})
    for key in ("mean_hr_bpm", "hr_sd_bpm", "hr_ar"):
        if key in doc:
            setattr(params, key, float(doc[key]))
    if "age_range" in doc:
        lo, hi = doc["age_range"]
        params.age_range = (float(lo), float(hi))
    return params


def spec_from_dict(doc: dict) -> CohortSpec:
    known = {"n_positive", "n_negative", "duration_s", "fs", "positive", "negative",
             "noise_sd", "wander_amp", "wander_freq_hz", "male_fraction", "seed"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"cohort spec: unknown keys {sorted(unknown)}")
    spec = CohortSpec()
    for key in ("duration_s", "fs", "noise_sd", "wander_amp", "wander_freq_hz", "male_fraction"):
        if key in doc:
            setattr(spec, key, float(doc[key]))
    for key in ("n_positive", "n_negative", "seed"):
        if key in doc:
            setattr(spec, key, int(doc[key]))
    if "positive" in doc:
        spec.positive = _class_params_from_dict(doc["positive"], "positive")
    if "negative" in doc:
        spec.negative = _class_params_from_dict(doc["negative"], "negative")
    spec.validate()
    return spec


def spec_from_json(path: Path | str) -> CohortSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"cohort spec file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cohort spec {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"cohort spec {path} must be a JSON object")
    return spec_from_dict(doc)
