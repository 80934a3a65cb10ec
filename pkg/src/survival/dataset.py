"""
임상시험 데이터 컨테이너

대상자별 관측치 O_i = (W_i, A_i, X_i, Δ_i)와 설계상 배정확률 π를 보관합니다.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import DatasetError


@dataclass(frozen=True)
class ObservationBlock:
    """
    검증 없이 잘라낸 관측치 묶음

    교차적합에서 held-out 대상자를 평가할 때 사용합니다.
    한쪽 군만 있거나 사건이 없어도 됩니다.
    """
    covariates: np.ndarray
    treatment: np.ndarray
    time: np.ndarray
    event: np.ndarray

    @property
    def n(self) -> int:
        return int(self.time.shape[0])


@dataclass(frozen=True)
class TrialDataset:
    """무작위배정 임상시험 데이터 (생성 시 불변식 검증)"""
    covariates: np.ndarray
    treatment: np.ndarray
    time: np.ndarray
    event: np.ndarray
    pi: float
    covariate_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        time = np.array(self.time, dtype=float).reshape(-1)
        n = time.shape[0]
        if n == 0:
            raise DatasetError("empty sample")

        covariates = np.array(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(n, -1) if covariates.size else np.empty((n, 0))
        treatment = np.array(self.treatment).reshape(-1)
        event = np.array(self.event).reshape(-1)

        if covariates.shape[0] != n or treatment.shape[0] != n or event.shape[0] != n:
            raise DatasetError(
                f"길이가 일치하지 않습니다: time={n}, covariates={covariates.shape[0]}, "
                f"treatment={treatment.shape[0]}, event={event.shape[0]}"
            )
        if not np.all(np.isfinite(time)) or np.any(time <= 0):
            raise DatasetError("time 값은 모두 유한한 양수여야 합니다")
        if not np.all(np.isin(treatment, (0, 1))):
            raise DatasetError("treatment에는 0 또는 1만 허용됩니다")
        if not np.all(np.isin(event, (0, 1))):
            raise DatasetError("event에는 0 또는 1만 허용됩니다")
        if not (0.0 < float(self.pi) < 1.0):
            raise DatasetError(f"pi는 (0, 1) 범위여야 합니다: {self.pi}")
        if treatment.sum() == 0 or treatment.sum() == n:
            raise DatasetError("두 처리군 모두 대상자가 있어야 합니다")
        if event.sum() == 0:
            raise DatasetError("사건(event)이 최소 1건 필요합니다")
        if not np.all(np.isfinite(covariates)):
            raise DatasetError("공변량에 결측값 또는 비유한 값이 있습니다")

        names = tuple(self.covariate_names) or tuple(f"W{j + 1}" for j in range(covariates.shape[1]))
        if len(names) != covariates.shape[1]:
            raise DatasetError(f"공변량 이름 수({len(names)})와 열 수({covariates.shape[1]})가 다릅니다")

        object.__setattr__(self, "time", time)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "treatment", treatment.astype(int))
        object.__setattr__(self, "event", event.astype(int))
        object.__setattr__(self, "pi", float(self.pi))
        object.__setattr__(self, "covariate_names", names)
        for array in (self.time, self.covariates, self.treatment, self.event):
            array.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.time.shape[0])

    @property
    def p(self) -> int:
        return int(self.covariates.shape[1])

    def subset(self, indices: Sequence[int]) -> "TrialDataset":
        """지정한 대상자만으로 새 TrialDataset을 만듭니다 (불변식 재검증)."""
        idx = np.asarray(indices, dtype=int)
        return TrialDataset(
            covariates=self.covariates[idx],
            treatment=self.treatment[idx],
            time=self.time[idx],
            event=self.event[idx],
            pi=self.pi,
            covariate_names=self.covariate_names,
        )

    def without(self, index: int) -> "TrialDataset":
        """대상자 한 명을 제외한 데이터 (jackknife용)"""
        keep = np.ones(self.n, dtype=bool)
        keep[index] = False
        return self.subset(np.flatnonzero(keep))

    def with_subject(self, block: ObservationBlock, index: int) -> "TrialDataset":
        """held-out 대상자 한 명을 추가한 데이터 (add-one 영향함수용)"""
        return TrialDataset(
            covariates=np.vstack([self.covariates, block.covariates[index:index + 1]]),
            treatment=np.append(self.treatment, block.treatment[index]),
            time=np.append(self.time, block.time[index]),
            event=np.append(self.event, block.event[index]),
            pi=self.pi,
            covariate_names=self.covariate_names,
        )

    def block(self, indices: Optional[Sequence[int]] = None) -> ObservationBlock:
        """검증 없는 관측치 묶음을 반환합니다 (indices가 None이면 전체)."""
        if indices is None:
            return ObservationBlock(self.covariates, self.treatment, self.time, self.event)
        idx = np.asarray(indices, dtype=int)
        return ObservationBlock(
            self.covariates[idx], self.treatment[idx], self.time[idx], self.event[idx]
        )

    def swap_arms(self) -> "TrialDataset":
        """처리군 라벨을 뒤바꾼 데이터 (A ↔ 1−A, π ↔ 1−π)"""
        return TrialDataset(
            covariates=self.covariates,
            treatment=1 - self.treatment,
            time=self.time,
            event=self.event,
            pi=1.0 - self.pi,
            covariate_names=self.covariate_names,
        )
