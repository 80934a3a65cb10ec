# Command-line commands
from src.cli.ingest import AnalysisConfig, export_csv, ingest_csv
from src.cli.analyze import analyze, render_report, run_analysis
from src.cli.simulate import SimulationConfig, simulate

__all__ = [
    "AnalysisConfig",
    "export_csv",
    "ingest_csv",
    "analyze",
    "render_report",
    "run_analysis",
    "SimulationConfig",
    "simulate",
]
