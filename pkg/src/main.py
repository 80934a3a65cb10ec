"""
survaug - 메인 진입점

사용법:
    python -m src.main analyze --input colon.csv --time time --event status --trt rx \
        --trt-level Lev+5FU --cont age,nodes --cat sex,obstruct --pi 0.5 --measure log-hr
    python -m src.main simulate configs/smoke.env
"""

import argparse
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from src.config import get_seed, get_threads, split_list
from src.errors import ESTIMATION_ERRORS, ConfigError, DatasetError, IngestError

# 환경 변수 로드
load_dotenv()

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)

EXIT_ESTIMATION_ERROR = 1
EXIT_CONFIG_ERROR = 2
CONFIG_ERRORS = (ConfigError, IngestError, DatasetError, ValidationError)


def setup_logging(level: Optional[str] = None):
    """로깅 설정 (--log-level > LOG_LEVEL > INFO)"""
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level=(level or os.environ.get("LOG_LEVEL", "INFO")).upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survaug",
        description="생존 결과변수 무작위배정 임상시험의 공변량 증강 추정",
    )
    parser.add_argument("--log-level", default=None, help="로그 레벨 (기본: LOG_LEVEL 환경변수 또는 INFO)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    analyze = subparsers.add_parser("analyze", help="CSV 데이터 분석")
    analyze.add_argument("--input", required=True, help="입력 CSV 파일")
    analyze.add_argument("--time", required=True, help="관측시간 열")
    analyze.add_argument("--event", required=True, help="사건 지시자 열 (0/1)")
    analyze.add_argument("--trt", required=True, help="처리군 열")
    analyze.add_argument("--trt-level", default=None, help="처리군(A=1)으로 볼 값 (없으면 0/1 열)")
    analyze.add_argument("--cont", default="", help="연속형 공변량 (쉼표 구분)")
    analyze.add_argument("--cat", default="", help="범주형 공변량 (쉼표 구분)")
    analyze.add_argument("--pi", type=float, required=True, help="처리군 배정확률 (설계값)")
    analyze.add_argument("--measure", required=True, choices=["log-hr", "surv-diff", "rmst-diff", "mean-diff"])
    analyze.add_argument("--tau", type=float, default=None, help="surv-diff / rmst-diff 기준 시점")
    analyze.add_argument("--learner", default="linear", choices=["linear", "spline", "tree", "forest", "super"])
    analyze.add_argument("--candidates", default="linear,spline,tree,forest", help="super learner 후보 (쉼표 구분)")
    analyze.add_argument("--k-folds", type=int, default=5, help="교차적합 fold 수 (0이면 표본분할 없음)")
    analyze.add_argument("--seed", type=int, default=None, help="난수 시드 (기본: SURVAUG_SEED 또는 12345)")
    analyze.add_argument("--missing", default="median-impute", choices=["fail", "median-impute"])
    analyze.add_argument("--ci-level", type=float, default=0.95)
    analyze.add_argument("--threads", type=int, default=None, help="병렬 작업 수 (기본: SURVAUG_THREADS 또는 1)")
    analyze.add_argument("--output", default=None, help="결과 표를 저장할 파일")

    simulate = subparsers.add_parser("simulate", help="Monte Carlo 시뮬레이션")
    simulate.add_argument("config", help="KEY=value 형식 설정 파일")
    simulate.add_argument("--threads", type=int, default=None)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--output", default=None, help="결과 디렉터리 (설정 파일의 OUTPUT_DIR보다 우선)")
    return parser


def run_analyze(args: argparse.Namespace) -> int:
    from src.cli.analyze import analyze
    from src.cli.ingest import AnalysisConfig

    try:
        config = AnalysisConfig(
            input_path=args.input,
            time_column=args.time,
            event_column=args.event,
            treatment_column=args.trt,
            treatment_level=args.trt_level,
            continuous_covariates=split_list(args.cont),
            categorical_covariates=split_list(args.cat),
            pi=args.pi,
            measure=args.measure,
            tau=args.tau,
            learner=args.learner,
            candidates=split_list(args.candidates),
            k_folds=args.k_folds,
            seed=get_seed(args.seed),
            missing_policy=args.missing,
            ci_level=args.ci_level,
            threads=get_threads(args.threads),
        )
    except ValidationError as e:
        raise ConfigError(f"분석 설정이 올바르지 않습니다:\n{e}") from e

    print(analyze(config, output_path=args.output), end="")
    return 0


def run_simulate(args: argparse.Namespace) -> int:
    from src.cli.simulate import simulate

    paths = simulate(args.config, threads=args.threads, seed=args.seed, output_dir=args.output)
    logger.info(f"시뮬레이션 완료: {paths['results'].parent}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """메인 함수 (종료 코드 반환)"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        if args.command == "analyze":
            return run_analyze(args)
        return run_simulate(args)
    except CONFIG_ERRORS as e:
        logger.error(f"설정/입력 오류: {e}")
        return EXIT_CONFIG_ERROR
    except ESTIMATION_ERRORS as e:
        logger.error(f"추정 오류: {e}")
        return EXIT_ESTIMATION_ERROR


if __name__ == "__main__":
    sys.exit(main())
