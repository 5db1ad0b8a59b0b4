"""Localization algorithms over anchor-node observations.

Five independent ways to place a receiver:

* ``aoa_least_squares``: intersect bearing lines from several anchors
  in the least-squares sense (smallest sum of squared perpendicular
  distances to the lines).
* ``fuse_aoa_pathloss``: single-anchor fix; path loss inverted through
  the CI model gives range, the arrival bearing gives direction.
* ``tdoa_solve``: damped Gauss-Newton on hyperbolic range-difference
  residuals.
* ``rank_grid_localize``: order anchors by RSSI, score grid cells by
  Spearman rank correlation against each cell's ideal ordering, and
  average the best-scoring cells.
* ``fingerprint_localize``: nearest neighbor in a weighted, normalized
  feature space of per-anchor (RSSI, AoA, ToA).

All angles are radians in [0, 2*pi); an AoA is the pointing angle at
the receiver toward the anchor, so the anchor-to-receiver departure
bearing is AoA + pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CiPathLossModel, fspl_ref
from .errors import (ConvergenceError, CoverageError, DegenerateGeometryError,
                     FeasibilityError)
from .geomenv import Point2

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AnchorNode:
    """A transmitter at a known position."""

    id: str
    position: Point2
    tx_power_dbm: float = 0.0
    carrier_hz: float = 28e9

    def __post_init__(self):
        if not self.id:
            raise ValueError("anchor id must be non-empty")
        if not self.carrier_hz > 0:
            raise ValueError(f"carrier_hz must be > 0, got {self.carrier_hz}")


@dataclass(frozen=True)
class BearingObservation:
    """Pointing angle at the receiver toward one anchor."""

    anchor_id: str
    aoa: float

    def __post_init__(self):
        if not (0.0 <= self.aoa < TWO_PI):
            raise ValueError(f"aoa {self.aoa} not in [0, 2*pi)")


@dataclass(frozen=True)
class TdoaObservation:
    """Range difference d(anchor_a) - d(anchor_b) in meters."""

    anchor_a_id: str
    anchor_b_id: str
    delta_distance: float

    def __post_init__(self):
        if self.anchor_a_id == self.anchor_b_id:
            raise ValueError("TDoA observation needs two distinct anchors")
        if not math.isfinite(self.delta_distance):
            raise ValueError("delta_distance must be finite")


@dataclass(frozen=True)
class RssiObservation:
    anchor_id: str
    rssi_dbm: float

    def __post_init__(self):
        if not math.isfinite(self.rssi_dbm):
            raise ValueError("rssi_dbm must be finite")


@dataclass(frozen=True)
class DistanceRankVector:
    """Anchor ids ordered nearest first (strongest RSSI first)."""

    anchor_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "anchor_ids", tuple(self.anchor_ids))
        if len(set(self.anchor_ids)) != len(self.anchor_ids):
            raise ValueError("rank vector contains duplicate anchor ids")

    def __len__(self) -> int:
        return len(self.anchor_ids)


@dataclass(frozen=True)
class GridSpec:
    """Cell size and communication range for rank-grid localization."""

    cell_size: float
    comm_range: float = 200.0

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be > 0, got {self.cell_size}")
        if not self.comm_range > 0:
            raise ValueError(f"comm_range must be > 0, got {self.comm_range}")


@dataclass(frozen=True)
class PositionEstimate:
    point: Point2
    method: str
    residual: float
    diagnostics: str | None = None


@dataclass(frozen=True)
class AnchorFeatures:
    """Per-anchor fingerprint features; any subset may be present."""

    rssi_dbm: float | None = None
    aoa: float | None = None
    toa: float | None = None

    def any_present(self) -> bool:
        return any(v is not None for v in (self.rssi_dbm, self.aoa, self.toa))


@dataclass(frozen=True)
class FingerprintRecord:
    """Feature vector recorded (or predicted) at a known location."""

    location: Point2
    features: dict[str, AnchorFeatures] = field(default_factory=dict)

    def __post_init__(self):
        if not any(f.any_present() for f in self.features.values()):
            raise ValueError("fingerprint record holds no features")


def _anchor_index(anchors) -> dict[str, AnchorNode]:
    index: dict[str, AnchorNode] = {}
    for a in anchors:
        if a.id in index:
            raise ValueError(f"duplicate anchor id {a.id!r}")
        index[a.id] = a
    return index


def aoa_least_squares(anchors, bearings) -> PositionEstimate:
    """Least-squares intersection of bearing lines.

    Each observation defines the line through its anchor with direction
    aoa + pi.  The estimate minimizes the sum of squared perpendicular
    distances to those lines via the 2x2 normal equations; the residual
    is the minimized sum.  Parallel lines leave the normal matrix
    singular and raise DegenerateGeometryError.
    """
    index = _anchor_index(anchors)
    bearings = list(bearings)
    if len({b.anchor_id for b in bearings}) < 2:
        raise ValueError("need bearings to at least 2 distinct anchors")
    mat = np.zeros((2, 2))
    rhs = np.zeros(2)
    normals = []
    for b in bearings:
        if b.anchor_id not in index:
            raise ValueError(f"bearing references unknown anchor {b.anchor_id!r}")
        pos = index[b.anchor_id].position
        beta = b.aoa + math.pi  # direction anchor -> receiver
        # Unit normal of the bearing line.
        n = np.array([-math.sin(beta), math.cos(beta)])
        a = np.array([pos.x, pos.y])
        mat += np.outer(n, n)
        rhs += n * (n @ a)
        normals.append((n, a))
    if np.linalg.cond(mat) > 1e12:
        raise DegenerateGeometryError("bearing lines are parallel; no unique intersection")
    p = np.linalg.solve(mat, rhs)
    residual = float(sum((n @ (p - a)) ** 2 for n, a in normals))
    return PositionEstimate(Point2(float(p[0]), float(p[1])), "aoa", residual)


def ml_distance(path_loss_db: float, model: CiPathLossModel) -> float:
    """Most likely TR separation for a measured path loss under the CI model."""
    ref = fspl_ref(model.carrier_hz)
    if path_loss_db < ref:
        implied = model.d0 * 10.0 ** ((path_loss_db - ref) / (10.0 * model.ple))
        raise ValueError(
            f"path loss {path_loss_db:.2f} dB is below the free-space reference "
            f"{ref:.2f} dB (implied distance {implied:.3g} m < {model.d0} m)")
    return model.d0 * 10.0 ** ((path_loss_db - ref) / (10.0 * model.ple))


def fuse_aoa_pathloss(anchor: AnchorNode, bearing: BearingObservation,
                      rssi: RssiObservation, model: CiPathLossModel,
                      antenna_gains_db: float = 0.0) -> PositionEstimate:
    """Single-anchor fix from one bearing plus one RSSI reading.

    Path loss = tx power + antenna gains - RSSI is inverted through the
    CI model for range; the receiver sits at that range from the anchor
    along the departure bearing aoa + pi.  Assumes the anchor is in
    line of sight.
    """
    if bearing.anchor_id != anchor.id or rssi.anchor_id != anchor.id:
        raise ValueError("bearing/rssi observations must reference the given anchor")
    pl = anchor.tx_power_dbm + antenna_gains_db - rssi.rssi_dbm
    d = ml_distance(pl, model)
    beta = (bearing.aoa + math.pi) % TWO_PI
    point = Point2(anchor.position.x + d * math.cos(beta),
                   anchor.position.y + d * math.sin(beta))
    return PositionEstimate(point, "fusion", 0.0)


def _tdoa_objective(p: np.ndarray, pairs) -> tuple[np.ndarray, float]:
    res = np.array([
        math.hypot(p[0] - pa.x, p[1] - pa.y)
        - math.hypot(p[0] - pb.x, p[1] - pb.y) - k
        for pa, pb, k in pairs])
    return res, float(res @ res)


def _tdoa_descend(start: np.ndarray, pairs, max_iter: int) -> tuple[np.ndarray, float, bool]:
    """Damped Gauss-Newton from one start.  Returns (point, objective, converged)."""
    p = start.copy()
    res, obj = _tdoa_objective(p, pairs)
    lam = 1e-3
    for _ in range(max_iter):
        jac = np.zeros((len(pairs), 2))
        for i, (pa, pb, _k) in enumerate(pairs):
            da = math.hypot(p[0] - pa.x, p[1] - pa.y)
            db = math.hypot(p[0] - pb.x, p[1] - pb.y)
            if da < 1e-12 or db < 1e-12:
                # At an anchor the residual gradient is undefined; nudge off.
                p = p + 1e-9
                da = math.hypot(p[0] - pa.x, p[1] - pa.y)
                db = math.hypot(p[0] - pb.x, p[1] - pb.y)
            jac[i, 0] = (p[0] - pa.x) / da - (p[0] - pb.x) / db
            jac[i, 1] = (p[1] - pa.y) / da - (p[1] - pb.y) / db
        grad = jac.T @ res
        hess = jac.T @ jac
        try:
            step = np.linalg.solve(hess + lam * np.eye(2), -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = p + step
        trial_res, trial_obj = _tdoa_objective(trial, pairs)
        if trial_obj < obj:
            p, res, obj = trial, trial_res, trial_obj
            lam = max(lam / 10.0, 1e-12)
            if np.linalg.norm(step) < 1e-10:
                return p, obj, True
        else:
            lam *= 10.0
            if lam > 1e12:
                return p, obj, np.linalg.norm(step) < 1e-8
    return p, obj, False


def tdoa_solve(anchors, observations, initial_guess: Point2 | None = None,
               max_iter: int = 200) -> PositionEstimate:
    """Position from range differences by damped iterative least squares.

    Minimizes the sum of squared hyperbolic residuals
    (d(p, anchor_a) - d(p, anchor_b) - k)^2, starting from the anchor
    centroid unless a guess is given.  A handful of spread-out extra
    starts probe for the mirror-image second minimum two pairs can
    admit; when found, the minimum nearest the initial guess wins and
    the diagnostics say so.  Raises FeasibilityError for |k| beyond the
    anchor separation and ConvergenceError (carrying the best iterate)
    if the iteration limit is hit.
    """
    index = _anchor_index(anchors)
    observations = list(observations)
    pair_keys = {frozenset((o.anchor_a_id, o.anchor_b_id)) for o in observations}
    if len(observations) < 2 or len(pair_keys) < 2:
        raise ValueError("need at least 2 independent anchor-pair observations")
    pairs = []
    for o in observations:
        for aid in (o.anchor_a_id, o.anchor_b_id):
            if aid not in index:
                raise ValueError(f"observation references unknown anchor {aid!r}")
        pa = index[o.anchor_a_id].position
        pb = index[o.anchor_b_id].position
        base = pa.distance_to(pb)
        if abs(o.delta_distance) > base + 1e-9:
            raise FeasibilityError(
                f"|k| = {abs(o.delta_distance):.6g} m exceeds the "
                f"{o.anchor_a_id}-{o.anchor_b_id} separation {base:.6g} m")
        pairs.append((pa, pb, o.delta_distance))

    xs = [a.position.x for a in index.values()]
    ys = [a.position.y for a in index.values()]
    centroid = np.array([sum(xs) / len(xs), sum(ys) / len(ys)])
    init = (np.array([initial_guess.x, initial_guess.y])
            if initial_guess is not None else centroid)

    p0, obj0, ok0 = _tdoa_descend(init, pairs, max_iter)
    if not ok0:
        best = PositionEstimate(Point2(float(p0[0]), float(p0[1])), "tdoa", obj0,
                                "did not converge")
        raise ConvergenceError(
            f"tdoa_solve did not converge within {max_iter} iterations", best)

    # Probe for a second basin (two-pair geometries are mirror-ambiguous).
    span = max(max(xs) - min(xs), max(ys) - min(ys), 1.0)
    minima = [(p0, obj0)]
    for dx, dy in ((2.0, 0.0), (-2.0, 0.0), (0.0, 2.0), (0.0, -2.0)):
        start = centroid + span * np.array([dx, dy])
        p, obj, ok = _tdoa_descend(start, pairs, max_iter)
        if ok:
            minima.append((p, obj))
    best_obj = min(obj for _p, obj in minima)
    tol_obj = max(1e-12, 1e-6 * (1.0 + best_obj))
    distinct: list[np.ndarray] = []
    for p, obj in minima:
        if obj <= best_obj + tol_obj:
            if not any(np.linalg.norm(p - q) < 1e-3 * span for q in distinct):
                distinct.append(p)
    diagnostics = None
    chosen = p0
    if len(distinct) > 1:
        chosen = min(distinct, key=lambda q: np.linalg.norm(q - init))
        diagnostics = (f"ambiguous geometry: {len(distinct)} near-equal minima; "
                       "returned the one closest to the initial guess")
    _res, obj = _tdoa_objective(chosen, pairs)
    return PositionEstimate(Point2(float(chosen[0]), float(chosen[1])),
                            "tdoa", obj, diagnostics)


def rank_vector(observations) -> DistanceRankVector:
    """Order anchors strongest RSSI first; ties fall back to id order."""
    observations = list(observations)
    if not observations:
        raise ValueError("need at least one RSSI observation")
    seen = set()
    for o in observations:
        if o.anchor_id in seen:
            raise ValueError(f"duplicate RSSI observation for anchor {o.anchor_id!r}")
        seen.add(o.anchor_id)
    ordered = sorted(observations, key=lambda o: (-o.rssi_dbm, o.anchor_id))
    return DistanceRankVector(tuple(o.anchor_id for o in ordered))


def spearman_rho(u: DistanceRankVector, v: DistanceRankVector) -> float:
    """Spearman rank correlation of two orderings of the same anchors.

    rho = 1 - 6 * sum(d_i^2) / (m * (m^2 - 1)) with d_i the difference
    of anchor i's rank between the two vectors.
    """
    if set(u.anchor_ids) != set(v.anchor_ids):
        raise ValueError("rank vectors cover different anchor sets")
    m = len(u)
    if m < 2:
        raise ValueError("need at least 2 anchors to correlate rankings")
    rank_v = {aid: i for i, aid in enumerate(v.anchor_ids)}
    d2 = sum((i - rank_v[aid]) ** 2 for i, aid in enumerate(u.anchor_ids))
    return 1.0 - 6.0 * d2 / (m * (m * m - 1))


def ideal_rank_vector(anchors, point: Point2) -> DistanceRankVector:
    """Rank vector a noise-free receiver at ``point`` would measure."""
    ordered = sorted(anchors, key=lambda a: (point.distance_to(a.position), a.id))
    return DistanceRankVector(tuple(a.id for a in ordered))


def rank_grid_localize(anchors, measured: DistanceRankVector,
                       grid: GridSpec) -> PositionEstimate:
    """Grid search over rank agreement.

    Every anchor in the measured vector contributes an estimation
    rectangle, the square of side 2R on its position (R being the
    communication range: hearing the anchor bounds the receiver to it).
    The rectangles' intersection is tiled with cells; each cell center
    gets the rank vector an ideal receiver there would report, scored
    by Spearman rho against the measurement.  The residence area is
    the set of best-scoring cells, the estimate their centroid, and
    the residual 1 - max rho.
    """
    index = _anchor_index(anchors)
    members = []
    for aid in measured.anchor_ids:
        if aid not in index:
            raise ValueError(f"measured vector references unknown anchor {aid!r}")
        members.append(index[aid])
    if len(members) < 2:
        raise ValueError("need at least 2 ranked anchors to localize")
    r = grid.comm_range
    x_lo = max(a.position.x - r for a in members)
    x_hi = min(a.position.x + r for a in members)
    y_lo = max(a.position.y - r for a in members)
    y_hi = min(a.position.y + r for a in members)
    if x_lo >= x_hi or y_lo >= y_hi:
        raise CoverageError(
            "estimation rectangles share no area; anchors too far apart "
            "for the given communication range")
    nx = max(1, math.ceil((x_hi - x_lo) / grid.cell_size - 1e-12))
    ny = max(1, math.ceil((y_hi - y_lo) / grid.cell_size - 1e-12))
    best_rho = -math.inf
    residence: list[Point2] = []
    for j in range(ny):
        cy = y_lo + (j + 0.5) * grid.cell_size
        for i in range(nx):
            center = Point2(x_lo + (i + 0.5) * grid.cell_size, cy)
            rho = spearman_rho(ideal_rank_vector(members, center), measured)
            if rho > best_rho + 1e-12:
                best_rho = rho
                residence = [center]
            elif rho >= best_rho - 1e-12:
                residence.append(center)
    cx = sum(p.x for p in residence) / len(residence)
    cy = sum(p.y for p in residence) / len(residence)
    return PositionEstimate(
        Point2(cx, cy), "rank", 1.0 - best_rho,
        f"residence area holds {len(residence)} of {nx * ny} cells")


def fingerprint_localize(db, query: dict[str, AnchorFeatures],
                         sigma_rssi: float = 4.0,
                         sigma_aoa: float = math.radians(7.5),
                         sigma_toa: float = 1.25e-9,
                         weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
                         ) -> PositionEstimate:
    """Nearest fingerprint in normalized feature space.

    The distance to a record is the weighted mean of squared
    normalized feature differences over features present on both
    sides; AoA differences wrap around the circle.  Default
    normalizers correspond to 4 dB of RSSI spread, half of a 15 degree
    beamwidth, and the delay quantum of an 800 MHz sounder; pass other
    sigmas to match other hardware.  Ties keep the earliest record.
    """
    db = list(db)
    if not db:
        raise ValueError("fingerprint database is empty")
    w_rssi, w_aoa, w_toa = weights
    best_score = math.inf
    best_rec = None
    for rec_no, rec in enumerate(db):
        num = 0.0
        wsum = 0.0
        for aid, qf in query.items():
            rf = rec.features.get(aid)
            if rf is None:
                continue
            if qf.rssi_dbm is not None and rf.rssi_dbm is not None:
                num += w_rssi * ((qf.rssi_dbm - rf.rssi_dbm) / sigma_rssi) ** 2
                wsum += w_rssi
            if qf.aoa is not None and rf.aoa is not None:
                d = (qf.aoa - rf.aoa) % TWO_PI
                d = min(d, TWO_PI - d)
                num += w_aoa * (d / sigma_aoa) ** 2
                wsum += w_aoa
            if qf.toa is not None and rf.toa is not None:
                num += w_toa * ((qf.toa - rf.toa) / sigma_toa) ** 2
                wsum += w_toa
        if wsum == 0.0:
            raise ValueError(
                f"query shares no feature with fingerprint record {rec_no}")
        score = num / wsum
        if score < best_score:
            best_score = score
            best_rec = rec
    return PositionEstimate(best_rec.location, "fingerprint", best_score)
