"""
analyze 명령

CSV 데이터에 비보정 / 증강 추정을 적용하고 결과 표를 렌더링합니다.
"""

from typing import List, Optional

from loguru import logger

from src.augmentation import EstimateReport, EstimateRow, augment_cross_fit, augment_no_split, make_plan
from src.cli.ingest import AnalysisConfig, ingest_csv_with_report
from src.survival.measures import EffectMeasureSpec


def format_number(value: float, point: float) -> str:
    """|point| ≥ 10이면 소수 1자리, 아니면 3자리"""
    digits = 1 if abs(point) >= 10 else 3
    return f"{value:.{digits}f}"


def _format_row(row: EstimateRow, width: int) -> str:
    lower, upper = row.ci
    return (
        f"{row.label:<{width}} {format_number(row.point, row.point):>10} {format_number(row.se, row.point):>10}"
        f"   ({format_number(lower, row.point)}, {format_number(upper, row.point)})"
    )


def render_report(report: EstimateReport) -> str:
    """
    EstimateReport를 표 형태 문자열로 렌더링합니다.

    super learner는 후보별 행과 결합(Augmented) 행을 함께 출력합니다.
    """
    splitting = f"{report.splitting.k}-fold cross-fitting" if report.splitting is not None else "no sample splitting"
    level = f"{report.ci_level * 100:g}% CI"
    rows = report.rows
    width = max(12, *(len(row.label) for row in rows))

    lines: List[str] = [
        f"Measure: {report.measure.label}",
        f"Learner: {report.learner} | {splitting} | seed={report.seed}",
        "",
        f"{'':<{width}} {'Estimate':>10} {'Std.Err':>10}   {level}",
    ]
    lines.extend(_format_row(row, width) for row in rows)
    if report.unadjusted_cross_fit_se is not None:
        lines.append("")
        lines.append(
            f"Cross-fitted unadjusted SE: "
            f"{format_number(report.unadjusted_cross_fit_se, report.unadjusted.point)}"
        )
    if report.notes:
        lines.append(f"Notes: {', '.join(report.notes)}")
    return "\n".join(lines) + "\n"


def run_analysis(config: AnalysisConfig) -> EstimateReport:
    """설정대로 데이터를 수집하고 증강 추정을 수행합니다."""
    data, ingest_report = ingest_csv_with_report(config)
    if ingest_report.total_imputed:
        logger.warning(f"⚠️ 총 {ingest_report.total_imputed}개 결측값을 대체했습니다: {ingest_report.imputed}")

    spec = EffectMeasureSpec(id=config.measure, tau=config.tau)
    learner = config.learner_config()
    if config.k_folds == 0:
        return augment_no_split(data, spec, learner, rng_seed=config.seed,
                                ci_level=config.ci_level, n_jobs=config.threads)

    plan = make_plan(data.n, data.treatment, data.event, config.k_folds, config.seed)
    return augment_cross_fit(data, spec, learner, plan, ci_level=config.ci_level, n_jobs=config.threads)


def analyze(config: AnalysisConfig, output_path: Optional[str] = None) -> str:
    """
    analyze 명령 본체

    Args:
        config: 분석 설정
        output_path: 결과 표를 저장할 파일 (None이면 저장하지 않음)

    Returns:
        렌더링된 결과 표
    """
    rendered = render_report(run_analysis(config))
    if output_path:
        with open(output_path, "w", encoding="utf-8") as f:
            f.write(rendered)
        logger.info(f"결과 표 저장: {output_path}")
    return rendered
