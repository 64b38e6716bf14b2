from .config import FaultPlanConfig, NetworkConfig, Scenario, SimConfig, SweepSpec, apply_overrides, load_scenario, parse_scenario
from .metrics import MetricsReport, compute_metrics
from .run import RunResult, SweepResult, run_config, run_sweep
from .tasks import generate_tasks

__all__ = [
    "FaultPlanConfig",
    "MetricsReport",
    "NetworkConfig",
    "RunResult",
    "Scenario",
    "SimConfig",
    "SweepResult",
    "SweepSpec",
    "apply_overrides",
    "compute_metrics",
    "generate_tasks",
    "load_scenario",
    "parse_scenario",
    "run_config",
    "run_sweep",
]
