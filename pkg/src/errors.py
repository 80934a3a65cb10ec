"""
예외 정의 모듈

모든 예외는 SurvAugError를 루트로 하며, 호출 측이 표준 예외로도
잡을 수 있도록 ValueError / RuntimeError를 함께 상속합니다.
"""

from typing import Optional, Sequence

import numpy as np


class SurvAugError(Exception):
    """프로젝트 공통 루트 예외"""


class DatasetError(SurvAugError, ValueError):
    """TrialDataset 불변식 위반"""


class SurvivalError(SurvAugError, ValueError):
    """생존분석 기본 연산 입력 오류"""


class DegenerateLikelihoodError(SurvAugError, RuntimeError):
    """Cox 부분우도가 유한한 최대점을 갖지 않거나 수렴하지 않음"""


class MeasureError(SurvAugError, ValueError):
    """효과 척도 정의 또는 추정 오류"""


class JackknifeError(SurvAugError, RuntimeError):
    """leave-one-out 추정 실패 (실패한 대상자 인덱스를 포함)"""

    def __init__(self, message: str, subject_index: int):
        super().__init__(message)
        self.subject_index = subject_index


class LearnerError(SurvAugError, ValueError):
    """학습기 사전조건 위반 또는 적합 실패"""


class PlanError(SurvAugError, ValueError):
    """교차적합(cross-fit) 분할 계획 오류"""


class ConfigError(SurvAugError, ValueError):
    """설정값 검증 실패"""


class IngestError(SurvAugError, ValueError):
    """CSV 수집 오류 (문제 행 번호를 포함)"""

    def __init__(self, message: str, row_numbers: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.row_numbers = list(row_numbers or [])


# 추정 중 외부 라이브러리(numpy, scipy, scikit-learn)가 올릴 수 있는 예외까지 포함
ESTIMATION_ERRORS = (SurvAugError, ValueError, ArithmeticError, np.linalg.LinAlgError)
