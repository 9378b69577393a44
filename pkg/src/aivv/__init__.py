"""Conformal anomaly gating and an agent council for autopilot telemetry V&V."""

from . import agents, conformal, engine, orchestrator, report, sentry, telemetry
from .agents import StubBackend, make_backend
from .conformal import conformal_quantile, corrected_level, quantile_rank
from .engine import Engine, EngineConfig, build_engine
from .orchestrator import (EventLog, Mode, Pipeline, PipelineConfig, RunMetrics, majority_vote,
                           run_dataset, run_seed, run_seeds, run_stream)
from .report import build_vv_summary, export_trace_csv, verify_gain_proposal
from .sentry import Verdict, evaluate
from .telemetry import (FaultSpec, NoiseSpec, PIDGains, Scenario, SimConfig, dataset_for,
                        load_dataset, make_windows, save_dataset, simulate)

__version__ = "0.1.0"
