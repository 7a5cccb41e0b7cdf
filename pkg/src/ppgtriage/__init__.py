"""PPG-based stroke triage pipeline.

Raw pulse waveforms in, evaluation report out: zero-phase bandpass filtering,
30-second windowing with quality screening, per-beat landmark detection,
morphology / rate-variability / covariate features, and a repeated stratified
patient-level logistic-regression harness with recursive feature elimination.
A synthetic cohort generator makes the whole pipeline testable without
clinical data.
"""

from .config import RunConfig, load_config
from .errors import ConfigError, DataError, EvaluationError, SignalTooShortError
from .evaluate import EvalReport, plan_splits, run_experiment
from .features import CATALOG, FeatureMatrix, assemble_matrix
from .io import Recording, binarize_label, load_cohort, read_report, write_cohort, write_report
from .model import LogisticModel, fit_logistic, predict_proba, rfe, train_model
from .pipeline import extract_cohort, extract_matrix, synth_cohort_to_dir
from .synth import BeatModel, ClassParams, CohortSpec, synth_beat, synth_cohort, synth_recording

__version__ = "0.1.0"

__all__ = [
    "BeatModel", "CATALOG", "ClassParams", "CohortSpec", "ConfigError", "DataError",
    "EvalReport", "EvaluationError", "FeatureMatrix", "LogisticModel", "Recording",
    "RunConfig", "SignalTooShortError", "assemble_matrix", "binarize_label",
    "extract_cohort", "extract_matrix", "fit_logistic", "load_cohort", "load_config",
    "plan_splits", "predict_proba", "read_report", "rfe", "run_experiment", "synth_beat",
    "synth_cohort", "synth_cohort_to_dir", "synth_recording", "train_model",
    "write_cohort", "write_report",
]
