"""Synthetic measurement campaigns and positioning-error evaluation.

``generate_campaign`` drives the ray tracer once per receiver/anchor
link and records what a sweeping receiver would log: RSSI with optional
Gaussian noise, the strongest arrival bearing quantized to the sweep
step, and its delay quantized to the delay resolution 1/B.  Links
separated by more than the communication range, or by less than the
path-loss model's reference distance, are not logged.  Generation is
reproducible: one seeded random stream, links visited in sorted
(rx, anchor) order.

``evaluate`` turns estimates plus ground truth into the error report:
per-receiver Euclidean error, mean/min/max, and outliers flagged by the
extreme-fence rule (error above Q3 + 3 * IQR), with aggregates over the
remaining receivers reported alongside.

Observation files are CSV with columns
rx_id, anchor_id, rssi_dbm, aoa_deg, toa_ns, true_x_m, true_y_m;
empty fields mean the feature was not measured.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .channel import CiPathLossModel, FrequencyBand
from .errors import ObservationFormatError
from .geomenv import EnvironmentMap, Point2
from .locengine import AnchorNode, PositionEstimate
from .raytracer import TraceConfig, trace

TWO_PI = 2.0 * math.pi

OBSERVATION_COLUMNS = ("rx_id", "anchor_id", "rssi_dbm", "aoa_deg", "toa_ns",
                       "true_x_m", "true_y_m")


@dataclass(frozen=True)
class LinkObservation:
    """What one receiver logged about one anchor; fields None if unmeasured."""

    rssi_dbm: float | None = None
    aoa: float | None = None
    toa: float | None = None


@dataclass(frozen=True)
class MeasurementRecord:
    """All observations one receiver collected, with optional ground truth."""

    rx_id: str
    true_position: Point2 | None
    observations: dict[str, LinkObservation] = field(default_factory=dict)


@dataclass(frozen=True)
class CampaignConfig:
    """Scene and sweep parameters for synthetic generation.

    aoa_step is the sweep quantization (use the antenna HPBW, or 1
    degree for a fine gimbal pass); comm_range_m bounds which anchors a
    receiver can hear at all.
    """

    env: EnvironmentMap
    anchors: tuple[AnchorNode, ...]
    rx_points: tuple[Point2, ...]
    band: FrequencyBand
    model: CiPathLossModel
    aoa_step: float
    rssi_noise_sigma: float = 4.0
    seed: int = 0
    comm_range_m: float = 200.0
    trace_config: TraceConfig = TraceConfig()

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "rx_points", tuple(self.rx_points))
        if not self.aoa_step > 0:
            raise ValueError(f"aoa_step must be > 0, got {self.aoa_step}")
        if self.rssi_noise_sigma < 0:
            raise ValueError("rssi_noise_sigma must be >= 0")
        if not self.comm_range_m > 0:
            raise ValueError("comm_range_m must be > 0")
        ids = [a.id for a in self.anchors]
        if len(set(ids)) != len(ids):
            raise ValueError("anchor ids must be unique")
        for p in self.rx_points:
            if not self.env.contains(p):
                raise ValueError(f"rx point ({p.x}, {p.y}) outside map bounds")
        for a in self.anchors:
            if not self.env.contains(a.position):
                raise ValueError(f"anchor {a.id!r} outside map bounds")


def generate_campaign(cfg: CampaignConfig) -> list[MeasurementRecord]:
    """Run the tracer over every usable link and log quantized observables.

    A link is usable when the straight-line separation lies in
    [model.d0, comm_range_m]; anything closer than the model reference
    or farther than the communication range yields no observation.
    """
    rng = np.random.default_rng(cfg.seed)
    width = max(2, len(str(max(len(cfg.rx_points) - 1, 0))))
    anchors = sorted(cfg.anchors, key=lambda a: a.id)
    toa_quantum = 1.0 / cfg.band.bandwidth_hz
    records = []
    for i, rx in enumerate(cfg.rx_points):
        observations: dict[str, LinkObservation] = {}
        for anchor in anchors:
            d = rx.distance_to(anchor.position)
            if d > cfg.comm_range_m or d < cfg.model.d0:
                continue  # out of range, or inside the model reference
            pred = trace(cfg.env, anchor.position, rx, anchor.tx_power_dbm,
                         cfg.band, cfg.model, cfg.trace_config)
            if not pred.paths:
                continue  # nothing arrives; the link is dead
            noise = float(rng.normal(0.0, cfg.rssi_noise_sigma))
            aoa = (round(pred.strongest_aoa / cfg.aoa_step) * cfg.aoa_step) % TWO_PI
            toa = round(pred.strongest_toa / toa_quantum) * toa_quantum
            observations[anchor.id] = LinkObservation(
                rssi_dbm=pred.total_rx_power_dbm + noise,
                aoa=aoa,
                toa=toa)
        records.append(MeasurementRecord(f"rx{i:0{width}d}", rx, observations))
    return records


@dataclass(frozen=True)
class EvaluationReport:
    """Positioning-error summary over a set of receivers."""

    per_rx: tuple[tuple[str, float], ...]
    mean_error: float
    min_error: float
    max_error: float
    outlier_ids: tuple[str, ...]
    mean_error_excl: float
    min_error_excl: float
    max_error_excl: float

    def __post_init__(self):
        if any(err < 0 for _rx, err in self.per_rx):
            raise ValueError("errors must be non-negative")
        if not (self.min_error <= self.mean_error <= self.max_error):
            raise ValueError("aggregate ordering violated: min <= mean <= max")


def evaluate(estimates: Mapping[str, PositionEstimate],
             truths: Mapping[str, Point2]) -> EvaluationReport:
    """Euclidean errors of estimates against ground truth.

    Every estimate needs a truth entry.  Outliers are receivers whose
    error exceeds Q3 + 3 * IQR of the error distribution; aggregates
    excluding them are reported next to the full ones.
    """
    if not estimates:
        raise ValueError("no estimates to evaluate")
    per_rx = []
    for rx_id in sorted(estimates):
        if rx_id not in truths:
            raise ValueError(f"no ground truth for rx {rx_id!r}")
        per_rx.append((rx_id, estimates[rx_id].point.distance_to(truths[rx_id])))
    errs = np.array([e for _r, e in per_rx])
    q1, q3 = np.percentile(errs, [25.0, 75.0])
    fence = q3 + 3.0 * (q3 - q1)
    outliers = tuple(rx for rx, e in per_rx if e > fence)
    kept = [e for rx, e in per_rx if rx not in outliers]
    if not kept:  # cannot happen (the fence sits above Q3), but stay total
        kept = list(errs)
    return EvaluationReport(
        per_rx=tuple(per_rx),
        mean_error=float(errs.mean()),
        min_error=float(errs.min()),
        max_error=float(errs.max()),
        outlier_ids=outliers,
        mean_error_excl=float(np.mean(kept)),
        min_error_excl=float(np.min(kept)),
        max_error_excl=float(np.max(kept)))


def report_to_dict(report: EvaluationReport) -> dict:
    """JSON-ready form of an EvaluationReport."""
    return {
        "per_rx": [{"rx_id": rx, "error_m": err} for rx, err in report.per_rx],
        "mean_m": report.mean_error,
        "min_m": report.min_error,
        "max_m": report.max_error,
        "outliers": list(report.outlier_ids),
        "excluding_outliers": {
            "mean_m": report.mean_error_excl,
            "min_m": report.min_error_excl,
            "max_m": report.max_error_excl,
        },
    }


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def save_observations(records, path) -> None:
    """Write measurement records as observation CSV (schema in module docstring)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(OBSERVATION_COLUMNS)
        for rec in records:
            tx = "" if rec.true_position is None else repr(rec.true_position.x)
            ty = "" if rec.true_position is None else repr(rec.true_position.y)
            for anchor_id in sorted(rec.observations):
                obs = rec.observations[anchor_id]
                writer.writerow([
                    rec.rx_id, anchor_id,
                    _fmt(obs.rssi_dbm),
                    _fmt(None if obs.aoa is None else math.degrees(obs.aoa)),
                    _fmt(None if obs.toa is None else obs.toa * 1e9),
                    tx, ty])


def _parse_field(text: str, column: str, line_no: int, path) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError as exc:
        raise ObservationFormatError(
            f"{path}: line {line_no}: column {column!r} is not a number: {text!r}"
        ) from exc


def load_observations(path, known_anchor_ids=None) -> list[MeasurementRecord]:
    """Read observation CSV back into records.

    Rows are grouped by rx_id in order of first appearance.  Malformed
    rows are reported with their line number; when known_anchor_ids is
    given, rows naming other anchors are rejected.
    """
    known = None if known_anchor_ids is None else set(known_anchor_ids)
    order: list[str] = []
    truths: dict[str, Point2 | None] = {}
    observations: dict[str, dict[str, LinkObservation]] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != OBSERVATION_COLUMNS:
            raise ObservationFormatError(
                f"{path}: expected header {','.join(OBSERVATION_COLUMNS)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(OBSERVATION_COLUMNS):
                raise ObservationFormatError(
                    f"{path}: line {line_no}: expected {len(OBSERVATION_COLUMNS)} "
                    f"fields, got {len(row)}")
            rx_id = row[0].strip()
            anchor_id = row[1].strip()
            if not rx_id or not anchor_id:
                raise ObservationFormatError(
                    f"{path}: line {line_no}: rx_id and anchor_id are required")
            if known is not None and anchor_id not in known:
                raise ObservationFormatError(
                    f"{path}: line {line_no}: unknown anchor {anchor_id!r}")
            rssi = _parse_field(row[2], "rssi_dbm", line_no, path)
            aoa_deg = _parse_field(row[3], "aoa_deg", line_no, path)
            toa_ns = _parse_field(row[4], "toa_ns", line_no, path)
            tx = _parse_field(row[5], "true_x_m", line_no, path)
            ty = _parse_field(row[6], "true_y_m", line_no, path)
            if (tx is None) != (ty is None):
                raise ObservationFormatError(
                    f"{path}: line {line_no}: true_x_m and true_y_m must both "
                    "be present or both empty")
            if rx_id not in observations:
                order.append(rx_id)
                observations[rx_id] = {}
                truths[rx_id] = None if tx is None else Point2(tx, ty)
            else:
                prev = truths[rx_id]
                here = None if tx is None else Point2(tx, ty)
                if prev != here:
                    raise ObservationFormatError(
                        f"{path}: line {line_no}: conflicting ground truth for "
                        f"rx {rx_id!r}")
            if anchor_id in observations[rx_id]:
                raise ObservationFormatError(
                    f"{path}: line {line_no}: duplicate row for "
                    f"({rx_id!r}, {anchor_id!r})")
            observations[rx_id][anchor_id] = LinkObservation(
                rssi_dbm=rssi,
                aoa=None if aoa_deg is None else math.radians(aoa_deg) % TWO_PI,
                toa=None if toa_ns is None else toa_ns * 1e-9)
    return [MeasurementRecord(rx, truths[rx], observations[rx]) for rx in order]
