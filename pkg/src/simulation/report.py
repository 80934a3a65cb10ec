"""
시뮬레이션 결과 출력 모듈

칸(cell)별 결과를 CSV와 텍스트 표로 저장합니다.
텍스트 표는 척도 → 시나리오 순으로 묶고, 추정량마다
표본분할 없음 / 있음 두 블록(Bias, SD, RE, CP)을 나란히 보여줍니다.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from src.simulation.monte_carlo import UNADJUSTED, SimMetrics
from src.simulation.oracle_cache import OracleValue
from src.simulation.scenarios import ScenarioSpec
from src.survival.measures import MEASURE_LABELS

RESULT_COLUMNS = [
    "scenario", "gamma", "pi", "n", "measure", "estimator", "split",
    "bias", "sd", "re", "cp", "n_reps", "n_failures",
]


@dataclass(frozen=True)
class CellResult:
    """시나리오 한 칸의 결과"""
    spec: ScenarioSpec
    metrics: List[SimMetrics]
    truths: Dict[str, OracleValue]
    replicates: Optional[pd.DataFrame] = None


def results_frame(cells: Sequence[CellResult]) -> pd.DataFrame:
    rows = []
    for cell in cells:
        for m in cell.metrics:
            rows.append({
                "scenario": cell.spec.scenario, "gamma": cell.spec.gamma, "pi": cell.spec.pi,
                "n": cell.spec.n, "measure": m.measure, "estimator": m.estimator_id,
                "split": m.split, "bias": m.bias, "sd": m.sd, "re": m.re, "cp": m.cp,
                "n_reps": m.n_reps, "n_failures": m.n_failures,
            })
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def _fmt(value: float, digits: int) -> str:
    return "NA" if value is None or not np.isfinite(value) else f"{value:.{digits}f}"


def _block(m: Optional[SimMetrics]) -> str:
    if m is None:
        return " " * 29
    flag = "!" if m.flagged else " "
    return f"{_fmt(m.bias, 3):>7} {_fmt(m.sd, 3):>6} {_fmt(m.re, 2):>5} {_fmt(m.cp, 2):>5}{flag}  "


def render_table(cells: Sequence[CellResult]) -> str:
    """결과 표를 문자열로 렌더링합니다 ('!'는 실패율 1% 초과)."""
    header = (
        f"{'Method':<12}{'Augmentation':<18}| {'Without Sample Splitting':<29}| With Sample Splitting\n"
        f"{'':<30}| {'Bias':>7} {'SD':>6} {'RE':>5} {'CP':>5}   | {'Bias':>7} {'SD':>6} {'RE':>5} {'CP':>5}"
    )
    measures = list(dict.fromkeys(m.measure for cell in cells for m in cell.metrics))
    lines: List[str] = []
    for measure in measures:
        lines.append("")
        lines.append(f"=== θ = {MEASURE_LABELS.get(measure, measure)} ===")
        lines.append(header)
        for cell in cells:
            metrics = [m for m in cell.metrics if m.measure == measure]
            if not metrics:
                continue
            truth = cell.truths.get(measure)
            truth_text = f", true={truth.value:.4f}" if truth is not None else ""
            lines.append(f"--- Scenario {cell.spec.scenario} (gamma={cell.spec.gamma:g}, pi={cell.spec.pi:.3g}, "
                         f"n={cell.spec.n}{truth_text}) ---")
            by_estimator: Dict[str, Dict[bool, SimMetrics]] = {}
            for m in metrics:
                by_estimator.setdefault(m.estimator_id, {})[m.split] = m
            for estimator, blocks in by_estimator.items():
                method, augmentation = (UNADJUSTED, "") if estimator == UNADJUSTED else ("augmented", estimator)
                lines.append(f"{method:<12}{augmentation:<18}| {_block(blocks.get(False))}| {_block(blocks.get(True))}".rstrip())
    return "\n".join(lines).lstrip("\n") + "\n"


def write_outputs(cells: Sequence[CellResult], output_dir: Path) -> Dict[str, Path]:
    """
    결과 파일을 저장합니다.

    Returns:
        파일 종류별 경로 (results, table, replicates, oracles)
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": output_dir / "results.csv",
        "table": output_dir / "table.txt",
        "replicates": output_dir / "replicates.csv",
        "oracles": output_dir / "oracles.csv",
    }

    results_frame(cells).to_csv(paths["results"], index=False, float_format="%.6f")
    paths["table"].write_text(render_table(cells), encoding="utf-8")

    replicate_frames = []
    for cell in cells:
        if cell.replicates is None:
            continue
        frame = cell.replicates.copy()
        frame.insert(0, "n", cell.spec.n)
        frame.insert(0, "pi", cell.spec.pi)
        frame.insert(0, "gamma", cell.spec.gamma)
        frame.insert(0, "scenario", cell.spec.scenario)
        replicate_frames.append(frame)
    if replicate_frames:
        pd.concat(replicate_frames, ignore_index=True).to_csv(paths["replicates"], index=False, float_format="%.10g")

    oracle_rows = {}
    for cell in cells:
        for truth in cell.truths.values():
            row = asdict(truth)
            row.pop("created_at", None)
            oracle_rows[(truth.scenario, truth.gamma, truth.pi, truth.measure, truth.tau)] = row
    pd.DataFrame(list(oracle_rows.values())).to_csv(paths["oracles"], index=False, float_format="%.10g")

    for name, path in paths.items():
        logger.info(f"결과 파일 저장: {name} → {path}")
    return paths
