"""Budget-constrained, pool-per-round active learning schedules for regression."""
from .data import (
    LabeledSet,
    Oracle,
    Pool,
    Sample,
    SensorEvent,
    SensorSchema,
    SynthConfig,
    TestSet,
    assemble_samples,
    impute,
    ingest_sensor_csv,
    synth_pool_stream,
)
from .metrics import RunReport, asd, auc_and_logauc, ftc, mse, paired_ttest_log, wasd
from .regressors import Committee, Regressor, build_committee, committee_stats
from .scheduler import ExperimentConfig, run_comparison, run_experiment
from .strategies import STRATEGIES, SelectionRequest, StrategyConfig, select

__version__ = "0.1.0"
