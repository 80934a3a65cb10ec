# Simulation harness
from src.simulation.scenarios import ScenarioSpec, conditional_mean, generate_trial
from src.simulation.oracle_cache import OracleCache, OracleValue, true_value
from src.simulation.monte_carlo import EstimatorConfig, SimMetrics, run_monte_carlo
from src.simulation.report import CellResult, render_table, results_frame, write_outputs

__all__ = [
    "ScenarioSpec",
    "conditional_mean",
    "generate_trial",
    "OracleCache",
    "OracleValue",
    "true_value",
    "EstimatorConfig",
    "SimMetrics",
    "run_monte_carlo",
    "CellResult",
    "render_table",
    "results_frame",
    "write_outputs",
]
