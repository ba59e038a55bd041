"""Predict and simulate execution-time savings from merging similar video-processing tasks."""

from .baseline import NaiveModel, fit_naive, predict_naive
from .features import Dataset, FeatureVector, Sample, encode, read_csv, split, write_csv
from .gbdt import Hyperparams, SavingModel, best_split, fit_tree, load_model, predict, save_model, train
from .oracle import OracleConfig, PhaseProfile, exec_time_individual, exec_time_merged, generate_dataset, merge_saving
from .evaluate import EvalReport, SweepSpec, accuracy, evaluate, rmse, sweep
from .sim import MergePolicy, SimReport, makespan_table, run_sim
from .workload import (
    Kind,
    MergeGroup,
    Operation,
    SignatureTables,
    SimilarityLevel,
    TranscodeTask,
    VideoMeta,
    canonical_signatures,
    classify_pair,
    count_merge_cases,
)

__version__ = "0.1.0"
