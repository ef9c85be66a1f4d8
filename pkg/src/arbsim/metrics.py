"""Arbitration metrics: accuracy, delta-accuracy, epsilon-accuracy,
and the relative error rate between two systems."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class EvalRecord:
    scenario_id: str
    distances: tuple[float, ...]
    chosen_index: int
    closest_index: int

    @property
    def d_chosen(self) -> float:
        return self.distances[self.chosen_index]

    @property
    def d1(self) -> float:
        return min(self.distances)

    @property
    def d2(self) -> float:
        return sorted(self.distances)[1] if len(self.distances) > 1 else self.d1


def _is_correct(r: EvalRecord) -> bool:
    # exact distance ties count as correct regardless of index
    return r.chosen_index == r.closest_index or r.d_chosen == r.d1


def accuracy(records) -> float:
    if not records:
        raise MetricsError("empty record list")
    return sum(_is_correct(r) for r in records) / len(records)


def delta_accuracy(records, bin_width: float = 1.0):
    """Per-bin accuracy over the closest-pair gap d2 - d1.

    Returns [(bin lower edge, accuracy or None, count), ...] with
    left-closed right-open bins; empty bins get count 0 and accuracy None.
    """
    if bin_width <= 0:
        raise MetricsError(f"bin_width must be positive, got {bin_width}")
    if not records:
        raise MetricsError("empty record list")
    bins: dict[int, list[EvalRecord]] = {}
    for r in records:
        bins.setdefault(int(math.floor((r.d2 - r.d1) / bin_width)), []).append(r)
    n_bins = max(bins) + 1
    curve = []
    for b in range(n_bins):
        members = bins.get(b, [])
        acc = accuracy(members) if members else None
        curve.append((b * bin_width, acc, len(members)))
    return curve


def epsilon_accuracy(records, epsilons):
    """[(epsilon, P(chosen device is epsilon-close)), ...].

    The predicate is d_chosen - d1 < epsilon, except that choosing the
    closest device always counts (so epsilon = 0 coincides with accuracy).
    """
    if not records:
        raise MetricsError("empty record list")
    curve = []
    for eps in epsilons:
        if eps < 0:
            raise MetricsError(f"negative epsilon: {eps}")
        hits = sum((r.d_chosen - r.d1 < eps) or _is_correct(r)
                   for r in records)
        curve.append((float(eps), hits / len(records)))
    return curve


def relative_error(acc_bl: float, acc_dnn: float) -> float:
    """(1 - acc_dnn) / (1 - acc_bl); < 1 means the DNN beats the baseline."""
    if acc_bl >= 1.0:
        raise MetricsError("relative error undefined for a perfect baseline")
    return (1.0 - acc_dnn) / (1.0 - acc_bl)


@dataclass(frozen=True)
class EvalReport:
    records: tuple[EvalRecord, ...]
    accuracy: float
    delta_curve: list
    epsilon_curve: list

    @classmethod
    def from_records(cls, records, epsilons, bin_width: float = 1.0):
        records = tuple(records)
        return cls(records=records,
                   accuracy=accuracy(records),
                   delta_curve=delta_accuracy(records, bin_width),
                   epsilon_curve=epsilon_accuracy(records, epsilons))


def write_report(report: EvalReport, directory, name: str,
                 config_hash: str = "") -> None:
    """JSON report plus one CSV per curve for external plotting."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    obj = {
        "system": name,
        "config_hash": config_hash,
        "accuracy": report.accuracy,
        "delta_curve": [
            {"bin_lower_m": lo, "accuracy": acc, "count": count}
            for lo, acc, count in report.delta_curve
        ],
        "epsilon_curve": [
            {"epsilon_m": eps, "epsilon_accuracy": acc}
            for eps, acc in report.epsilon_curve
        ],
        "records": [
            {"scenario_id": r.scenario_id, "distances": list(r.distances),
             "chosen_index": r.chosen_index, "closest_index": r.closest_index}
            for r in report.records
        ],
    }
    with open(directory / f"{name}_report.json", "w") as f:
        json.dump(obj, f, indent=2)
    with open(directory / f"{name}_delta_curve.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_lower_m", "accuracy", "count"])
        for lo, acc, count in report.delta_curve:
            writer.writerow([lo, "" if acc is None else acc, count])
    with open(directory / f"{name}_epsilon_curve.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epsilon_m", "epsilon_accuracy"])
        for eps, acc in report.epsilon_curve:
            writer.writerow([eps, acc])
