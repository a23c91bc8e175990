"""Evaluation metrics: macro AUC for classifiers, MAE and r^2 for regressors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ecgaudit.nn.model import TrainedModel
from ecgaudit.nn.training import TrainData, centered_crop


def auc_score(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC with ties counted half (Mann-Whitney).

    Raises ValueError when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: only one class present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    rank = 1.0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (rank + rank + (j - i)) / 2.0
        rank += j - i + 1
        i = j + 1
    pos_rank_sum = ranks[labels].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def r2_score(pred: np.ndarray, target: np.ndarray) -> float:
    target = np.asarray(target, dtype=np.float64)
    ss_res = float(np.sum((target - pred) ** 2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else -np.inf
    return 1.0 - ss_res / ss_tot


@dataclass
class MetricsReport:
    task: str  # "classification" | "regression"
    macro_auc: float | None = None
    per_label_auc: dict[str, float] = field(default_factory=dict)
    skipped_labels: list[str] = field(default_factory=list)
    mae: float | None = None
    r2: float | None = None
    per_output_mae: list[float] = field(default_factory=list)
    per_output_r2: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"task": self.task}
        if self.task == "classification":
            out.update(macro_auc=self.macro_auc, per_label_auc=self.per_label_auc,
                       skipped_labels=self.skipped_labels)
        else:
            out.update(mae=self.mae, r2=self.r2,
                       per_output_mae=self.per_output_mae,
                       per_output_r2=self.per_output_r2)
        return out


def evaluate(model: TrainedModel, data: TrainData,
             label_names: list[str] | None = None) -> MetricsReport:
    """Evaluate on centered crops.

    Classifier labels with a single class present are excluded from the
    macro mean and reported in `skipped_labels`.
    """
    if len(data.x) == 0:
        raise ValueError("empty dataset")
    x = centered_crop(data.x, model.input_length)
    pred = model.predict(x)
    if model.spec.head == "sigmoid-multilabel":
        names = label_names or model.classes or \
            [f"label{i}" for i in range(data.y.shape[1])]
        per_label: dict[str, float] = {}
        skipped: list[str] = []
        for j, name in enumerate(names):
            try:
                per_label[name] = auc_score(pred[:, j], data.y[:, j])
            except ValueError:
                skipped.append(name)
        macro = float(np.mean(list(per_label.values()))) if per_label else float("nan")
        return MetricsReport(task="classification", macro_auc=macro,
                             per_label_auc=per_label, skipped_labels=skipped)
    per_mae = [float(np.mean(np.abs(pred[:, j] - data.y[:, j])))
               for j in range(data.y.shape[1])]
    per_r2 = [r2_score(pred[:, j], data.y[:, j]) for j in range(data.y.shape[1])]
    return MetricsReport(task="regression",
                         mae=float(np.mean(per_mae)), r2=float(np.mean(per_r2)),
                         per_output_mae=per_mae, per_output_r2=per_r2)
