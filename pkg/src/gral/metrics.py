"""Error metrics and the multi-instance experiment runner.

Localization error is the geodesic (along-network) distance between the true
and estimated position of a package. Per-instance RMSE summarizes one run;
the scenario-level RMSE pools every package error across all instances of a
scenario, and MAE gives the average error range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .graph import EnvironmentGraph, GraphPosition
from .localize import VARIANTS, build_state, run_pipeline
from .packages import LocalizedMeasurement
from .sim import InstanceResult, ScenarioSpec, run_instance


@dataclass(frozen=True)
class ErrorSample:
    node: str
    seq: int
    error: float


def mae(errors: Sequence[float]) -> float:
    if len(errors) == 0:
        raise ValueError("mae of empty input")
    return math.fsum(abs(e) for e in errors) / len(errors)


def rmse(errors: Sequence[float]) -> float:
    if len(errors) == 0:
        raise ValueError("rmse of empty input")
    return math.sqrt(math.fsum(e * e for e in errors) / len(errors))


def normalized_mae(mae_value: float, route_length: float) -> float:
    """MAE as a percentage of the total route length."""
    if route_length <= 0:
        raise ValueError("route length must be positive")
    return mae_value / route_length * 100.0


@dataclass
class VariantResult:
    scenario: str
    variant: str
    instances: int
    packages_total: int
    packages_localized: int
    instance_rmse: list[float]          # iRMSE, one entry per instance
    pooled_rmse: float                  # dRMSE over all package errors
    mae: float
    normalized_mae_pct: float

    @property
    def coverage_pct(self) -> float:
        if self.packages_total == 0:
            return 0.0
        return self.packages_localized / self.packages_total * 100.0


def instance_errors(
    graph: EnvironmentGraph,
    result: InstanceResult,
    estimates: dict[str, list[LocalizedMeasurement]],
) -> tuple[list[ErrorSample], int]:
    """Per-package geodesic errors for one localized instance.

    Returns the samples for localized packages and the count of packages that
    were emitted but not localized.
    """
    truth: dict[tuple[str, int], GraphPosition] = {}
    emitted: set[tuple[str, int]] = set()
    for batch in result.batches:
        for pkg in batch.packages:
            emitted.add((pkg.node, pkg.seq))
    for record in result.ground_truth:
        truth[(record.node, record.seq)] = record.position
    samples = []
    localized_keys = set()
    for node, measurements in estimates.items():
        for m in measurements:
            key = (m.node, m.seq)
            if key not in emitted:
                continue
            localized_keys.add(key)
            samples.append(
                ErrorSample(m.node, m.seq, graph.geodesic_distance(truth[key], m.position))
            )
    return samples, len(emitted - localized_keys)


def run_experiment(
    spec: ScenarioSpec,
    variants: Sequence[str],
    n_instances: int,
    seed0: int = 0,
    scenario_name: str = "custom",
) -> list[VariantResult]:
    """Simulate seeds seed0..seed0+n-1 once and localize each with every variant."""
    if n_instances < 1:
        raise ValueError("need at least one instance")
    for variant in variants:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
    route_length = spec.route_length()
    per_variant_errors: dict[str, list[float]] = {v: [] for v in variants}
    per_variant_irmse: dict[str, list[float]] = {v: [] for v in variants}
    per_variant_localized: dict[str, int] = {v: 0 for v in variants}
    total_packages = 0
    for i in range(n_instances):
        result = run_instance(spec, seed0 + i)
        streams = result.streams()
        total_packages += sum(len(b.packages) for b in result.batches)
        for variant in variants:
            state = build_state(spec.graph, streams)
            estimates = run_pipeline(state, streams, variant)
            samples, _missing = instance_errors(spec.graph, result, estimates)
            errors = [s.error for s in samples]
            per_variant_errors[variant].extend(errors)
            per_variant_localized[variant] += len(errors)
            if errors:
                per_variant_irmse[variant].append(rmse(errors))
    out = []
    for variant in variants:
        errors = per_variant_errors[variant]
        pooled = rmse(errors) if errors else float("nan")
        mae_value = mae(errors) if errors else float("nan")
        out.append(
            VariantResult(
                scenario=scenario_name,
                variant=variant,
                instances=n_instances,
                packages_total=total_packages,
                packages_localized=per_variant_localized[variant],
                instance_rmse=per_variant_irmse[variant],
                pooled_rmse=pooled,
                mae=mae_value,
                normalized_mae_pct=normalized_mae(mae_value, route_length)
                if errors
                else float("nan"),
            )
        )
    return out
