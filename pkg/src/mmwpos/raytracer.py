"""Brute-force 2-D ray tracer.

``trace`` launches a fan of rays uniformly over 360 degrees of azimuth
(elevation is fixed at zero).  At every wall a ray splits into a
specular reflection and a straight-through transmission, each charged
the Fresnel power loss for its incidence angle.  A ray is received when
it passes within the RX detection sphere, whose radius grows with the
unfolded path length L as pi * L / n_rays, half the arc between
adjacent launch angles at that range.

The fan only *discovers* which ordered reflection sequences connect TX
to RX.  Each discovered sequence is then rebuilt exactly with the image
method (mirror TX across each reflecting wall in turn and intersect
backwards), which pins every vertex onto its wall and makes reflections
specular to machine precision.  Duplicate receptions of one geometric
path therefore collapse naturally, and the direct line-of-sight path is
produced by a deterministic segment walk rather than launch-angle luck.

Path gain is -ci_path_loss(total_length) minus the per-interaction
Fresnel losses, with the CI model fed the total propagated length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .channel import (SPEED_OF_LIGHT, CiPathLossModel, FrequencyBand,
                      ci_path_loss, fresnel_power)
from .geomenv import (EnvironmentMap, Obstruction, Point2, Ray2,
                      first_obstruction)

# Rays restart this far along their direction after an interaction so
# they cannot re-hit the wall they just left.
RELAUNCH_OFFSET = 1e-6
# Reported PDP bins below this level are dropped.
PDP_NOISE_FLOOR_DBM = -200.0


@dataclass(frozen=True)
class TraceConfig:
    """Knobs for the tracer.

    detection_mode names the reception rule; "sphere" (the arc-spacing
    radius above) is the only mode implemented.
    """

    n_rays: int = 100
    max_interactions: int = 4
    min_path_gain_db: float = -180.0
    detection_mode: str = "sphere"

    def __post_init__(self):
        if self.n_rays < 3:
            raise ValueError(f"n_rays must be >= 3, got {self.n_rays}")
        if self.max_interactions < 0:
            raise ValueError(f"max_interactions must be >= 0, got {self.max_interactions}")
        if self.detection_mode != "sphere":
            raise ValueError(f"unknown detection_mode {self.detection_mode!r}")


@dataclass(frozen=True)
class Interaction:
    kind: str  # "reflection" | "transmission"
    point: Point2
    obstruction_id: str
    incidence_angle: float
    power_loss_db: float

    def __post_init__(self):
        if self.kind not in ("reflection", "transmission"):
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.power_loss_db < 0:
            raise ValueError(f"negative interaction loss {self.power_loss_db}")


@dataclass(frozen=True)
class RayPath:
    """One propagation path from tx to rx.

    vertices runs tx, interaction points in order, rx.  aoa_at_rx is
    the pointing angle at the RX toward the last vertex before it (the
    direction a receiving antenna would aim); aod_at_tx points from the
    TX toward the first vertex after it.
    """

    tx: Point2
    rx: Point2
    vertices: tuple[Point2, ...]
    interactions: tuple[Interaction, ...]
    total_length: float
    delay: float
    path_gain_db: float
    aoa_at_rx: float
    aod_at_tx: float

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "interactions", tuple(self.interactions))
        polyline = sum(self.vertices[i].distance_to(self.vertices[i + 1])
                       for i in range(len(self.vertices) - 1))
        if abs(polyline - self.total_length) > 1e-9:
            raise ValueError(
                f"total_length {self.total_length} inconsistent with vertices ({polyline})")
        if abs(self.delay - self.total_length / SPEED_OF_LIGHT) > 1e-15:
            raise ValueError("delay inconsistent with total_length")


@dataclass(frozen=True)
class PowerDelayProfile:
    """Delay-binned received power.  bins maps bin index -> dBm."""

    bin_width: float
    bins: dict[int, float]
    peak_power_dbm: float
    first_arrival_delay: float

    def __post_init__(self):
        if not self.bins:
            raise ValueError("PDP must hold at least one bin")
        for idx, p in self.bins.items():
            if p < PDP_NOISE_FLOOR_DBM:
                raise ValueError(f"bin {idx} below the noise floor: {p} dBm")

    def delays(self) -> list[float]:
        return [i * self.bin_width for i in sorted(self.bins)]


@dataclass(frozen=True)
class ChannelPrediction:
    """Everything trace() knows about one TX-RX link.

    With no received path, pdp is None and the strongest-path fields
    hold None / -inf.
    """

    paths: tuple[RayPath, ...]
    pdp: PowerDelayProfile | None
    total_rx_power_dbm: float
    strongest_aoa: float | None
    strongest_toa: float | None


def detection_radius(path_length: float, n_rays: int) -> float:
    """Reception radius at unfolded path length L: pi * L / n_rays."""
    if not path_length > 0:
        raise ValueError(f"path_length must be > 0, got {path_length}")
    return math.pi * path_length / n_rays


def _mirror(p: Point2, seg) -> Point2:
    """Reflect a point across the supporting line of a segment."""
    ax, ay = seg.a.x, seg.a.y
    ex, ey = seg.b.x - ax, seg.b.y - ay
    n2 = ex * ex + ey * ey
    t = ((p.x - ax) * ex + (p.y - ay) * ey) / n2
    fx, fy = ax + t * ex, ay + t * ey  # foot of the perpendicular
    return Point2(2.0 * fx - p.x, 2.0 * fy - p.y)


def _reflect_dir(d: tuple[float, float], seg) -> tuple[float, float]:
    nx, ny = seg.normal()
    dot = d[0] * nx + d[1] * ny
    return (d[0] - 2.0 * dot * nx, d[1] - 2.0 * dot * ny)


def _loss_db(power_frac: float) -> float:
    if power_frac <= 0.0:
        return math.inf
    return -10.0 * math.log10(power_frac)


def _discover_sequences(env: EnvironmentMap, tx: Point2, rx: Point2,
                        model: CiPathLossModel, cfg: TraceConfig) -> set[tuple[str, ...]]:
    """Launch the fan and collect reflection-wall sequences that reach RX."""
    found: set[tuple[str, ...]] = set()
    walls = {o.id: o for o in env.obstructions}
    for k in range(cfg.n_rays):
        heading = 2.0 * math.pi * k / cfg.n_rays
        d0 = (math.cos(heading), math.sin(heading))
        # Stack entries: (origin, direction, run length so far,
        #                 accumulated interaction loss dB, reflection ids,
        #                 interactions used).
        stack = [(tx, d0, 0.0, 0.0, (), 0)]
        while stack:
            origin, dirn, acc_len, acc_loss, refl_seq, n_inter = stack.pop()
            hit = first_obstruction(Ray2(origin, dirn), env)
            if hit is None:
                continue  # outside the map; nothing ahead
            # Reception test against the leg just travelled.
            t_foot = (rx.x - origin.x) * dirn[0] + (rx.y - origin.y) * dirn[1]
            t_foot = min(max(t_foot, 0.0), hit.distance)
            cx = origin.x + t_foot * dirn[0]
            cy = origin.y + t_foot * dirn[1]
            miss = math.hypot(rx.x - cx, rx.y - cy)
            run = acc_len + t_foot
            # Radius at the unfolded straight-line distance to the RX, not
            # at the foot length: a ray off the exact bearing by half the
            # fan spacing misses by L*tan(d) which just exceeds pi*L/n.
            unfolded = math.hypot(run, miss)
            if run > 0.0 and miss <= detection_radius(unfolded, cfg.n_rays):
                found.add(refl_seq)
            if hit.obstruction_id is None or n_inter >= cfg.max_interactions:
                continue  # absorbed at the boundary or budget exhausted
            obs = walls[hit.obstruction_id]
            frs = fresnel_power(min(hit.incidence_angle, math.pi / 2 - 1e-12), obs.eps_r)
            leg_end_len = acc_len + hit.distance
            # Prune on the gain bound: CI loss only grows with length.
            ci_so_far = ci_path_loss(model, max(leg_end_len, model.d0))
            for kind, frac, new_dir in (
                    ("reflection", frs.reflect_power_frac, _reflect_dir(dirn, obs.wall)),
                    ("transmission", frs.transmit_power_frac, dirn)):
                loss = _loss_db(frac)
                if not math.isfinite(loss):
                    continue
                new_loss = acc_loss + loss
                if -(ci_so_far + new_loss) < cfg.min_path_gain_db:
                    continue
                new_origin = Point2(hit.point.x + RELAUNCH_OFFSET * new_dir[0],
                                    hit.point.y + RELAUNCH_OFFSET * new_dir[1])
                if not env.contains(new_origin):
                    continue
                new_seq = refl_seq + ((obs.id,) if kind == "reflection" else ())
                stack.append((new_origin, new_dir, leg_end_len, new_loss,
                              new_seq, n_inter + 1))
    return found


def _unfold_vertices(env: EnvironmentMap, tx: Point2, rx: Point2,
                     refl_ids: tuple[str, ...]) -> list[Point2] | None:
    """Exact specular path via the image method, or None if the sequence
    has no geometric realization (vertex off the wall segment, blocked
    bounce order, parallel degeneracy)."""
    walls = {o.id: o for o in env.obstructions}
    seq = [walls[i] for i in refl_ids]
    images = [tx]
    for obs in seq:
        images.append(_mirror(images[-1], obs.wall))
    verts_rev = [rx]
    target = rx
    for j in range(len(seq), 0, -1):
        wall = seq[j - 1].wall
        img = images[j]
        # Reflection vertex: where the straight run from the image to the
        # current target crosses the wall line.
        ax, ay = wall.a.x, wall.a.y
        ex, ey = wall.b.x - ax, wall.b.y - ay
        px, py = target.x - img.x, target.y - img.y
        denom = px * ey - py * ex
        if denom == 0.0:
            return None
        s = ((ax - img.x) * ey - (ay - img.y) * ex) / denom
        u = ((ax - img.x) * py - (ay - img.y) * px) / denom
        if not (1e-12 < s < 1.0 - 1e-12):
            return None
        wall_len = wall.length
        tol_u = 1e-9 / wall_len
        if not (-tol_u <= u <= 1.0 + tol_u):
            return None
        vertex = Point2(img.x + s * px, img.y + s * py)
        if not env.contains(vertex):
            return None
        verts_rev.append(vertex)
        target = vertex
    verts = [tx] + list(reversed(verts_rev))
    # Reject zero-length legs (tx on the wall, coincident vertices).
    for i in range(len(verts) - 1):
        if verts[i].distance_to(verts[i + 1]) <= 1e-9:
            return None
    return verts


def _leg_crossings(env: EnvironmentMap, p: Point2, q: Point2) -> list[tuple[float, Obstruction, float]]:
    """All wall crossings strictly inside segment p->q.

    Returns (distance from p, obstruction, incidence angle) sorted by
    distance.  The leg endpoints are excluded so reflection vertices are
    not double-counted as transmissions.
    """
    leg = math.hypot(q.x - p.x, q.y - p.y)
    dx, dy = (q.x - p.x) / leg, (q.y - p.y) / leg
    out = []
    for obs in env.obstructions:
        ax, ay = obs.wall.a.x, obs.wall.a.y
        ex, ey = obs.wall.b.x - ax, obs.wall.b.y - ay
        denom = dx * ey - dy * ex
        if denom == 0.0:
            continue
        t = ((ax - p.x) * ey - (ay - p.y) * ex) / denom
        u = ((ax - p.x) * dy - (ay - p.y) * dx) / denom
        if not (1e-9 < t < leg - 1e-9) or not (0.0 <= u <= 1.0):
            continue
        nx, ny = obs.wall.normal()
        cos_inc = abs(dx * nx + dy * ny)
        incidence = math.acos(min(1.0, max(0.0, cos_inc)))
        out.append((t, obs, incidence))
    out.sort(key=lambda item: item[0])
    return out


def _build_path(env: EnvironmentMap, tx: Point2, rx: Point2,
                refl_ids: tuple[str, ...], model: CiPathLossModel,
                cfg: TraceConfig) -> RayPath | None:
    verts = _unfold_vertices(env, tx, rx, refl_ids)
    if verts is None:
        return None
    walls = {o.id: o for o in env.obstructions}
    interactions: list[Interaction] = []
    total_len = 0.0
    for i in range(len(verts) - 1):
        p, q = verts[i], verts[i + 1]
        leg = p.distance_to(q)
        dx, dy = (q.x - p.x) / leg, (q.y - p.y) / leg
        for t, obs, incidence in _leg_crossings(env, p, q):
            frac = fresnel_power(min(incidence, math.pi / 2 - 1e-12), obs.eps_r).transmit_power_frac
            loss = _loss_db(frac)
            if not math.isfinite(loss):
                return None
            interactions.append(Interaction(
                "transmission", Point2(p.x + t * dx, p.y + t * dy),
                obs.id, incidence, loss))
        total_len += leg
        if i + 1 < len(verts) - 1:  # interior vertex: the next reflection
            obs = walls[refl_ids[i]]
            nx, ny = obs.wall.normal()
            cos_inc = abs(dx * nx + dy * ny)
            incidence = math.acos(min(1.0, max(0.0, cos_inc)))
            frac = fresnel_power(min(incidence, math.pi / 2 - 1e-12), obs.eps_r).reflect_power_frac
            loss = _loss_db(frac)
            if not math.isfinite(loss):
                return None
            interactions.append(Interaction("reflection", verts[i + 1], obs.id,
                                            incidence, loss))
    if len(interactions) > cfg.max_interactions:
        return None
    gain = -(ci_path_loss(model, total_len) + sum(x.power_loss_db for x in interactions))
    if gain < cfg.min_path_gain_db:
        return None
    return RayPath(
        tx=tx, rx=rx, vertices=tuple(verts), interactions=tuple(interactions),
        total_length=total_len, delay=total_len / SPEED_OF_LIGHT,
        path_gain_db=gain,
        aoa_at_rx=rx.bearing_to(verts[-2]),
        aod_at_tx=tx.bearing_to(verts[1]))


def trace(env: EnvironmentMap, tx: Point2, rx: Point2, tx_power_dbm: float,
          band: FrequencyBand, model: CiPathLossModel,
          cfg: TraceConfig = TraceConfig()) -> ChannelPrediction:
    """Predict every propagation path and the channel observables for one link.

    Raises ValueError when tx or rx lies outside the map, when they
    coincide, or when their separation is below the CI model reference
    distance (the loss model is undefined there).
    """
    for name, p in (("tx", tx), ("rx", rx)):
        if not env.contains(p):
            raise ValueError(f"{name} ({p.x}, {p.y}) is outside the map bounds")
    separation = tx.distance_to(rx)
    if separation == 0.0:
        raise ValueError("tx and rx coincide")
    if separation < model.d0:
        raise ValueError(
            f"tx-rx separation {separation} m is below the {model.d0} m model reference")

    sequences = _discover_sequences(env, tx, rx, model, cfg)
    sequences.add(())  # direct LOS walk is always attempted deterministically
    paths = []
    for seq in sequences:
        path = _build_path(env, tx, rx, seq, model, cfg)
        if path is not None:
            paths.append(path)
    paths.sort(key=lambda p: (p.delay, -p.path_gain_db))

    if not paths:
        return ChannelPrediction(paths=(), pdp=None,
                                 total_rx_power_dbm=-math.inf,
                                 strongest_aoa=None, strongest_toa=None)
    strongest = max(paths, key=lambda p: p.path_gain_db)
    if len(paths) == 1:
        total_dbm = tx_power_dbm + paths[0].path_gain_db
    else:
        total_mw = math.fsum(10.0 ** ((tx_power_dbm + p.path_gain_db) / 10.0)
                             for p in paths)
        total_dbm = 10.0 * math.log10(total_mw)
    return ChannelPrediction(
        paths=tuple(paths),
        pdp=build_pdp(paths, band, tx_power_dbm),
        total_rx_power_dbm=total_dbm,
        strongest_aoa=strongest.aoa_at_rx,
        strongest_toa=strongest.delay)


def build_pdp(paths, band: FrequencyBand, tx_power_dbm: float) -> PowerDelayProfile:
    """Bin path powers into delay bins of width 1/B.

    Powers landing in one bin add linearly in milliwatts; bins are
    reported in dBm and bins below the reporting floor are dropped.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("cannot build a PDP from an empty path list")
    bin_width = 1.0 / band.bandwidth_hz
    acc_mw: dict[int, float] = {}
    for p in paths:
        idx = int(round(p.delay / bin_width))
        acc_mw[idx] = acc_mw.get(idx, 0.0) + 10.0 ** ((tx_power_dbm + p.path_gain_db) / 10.0)
    bins = {}
    for idx, mw in acc_mw.items():
        dbm = 10.0 * math.log10(mw) if mw > 0 else -math.inf
        if dbm >= PDP_NOISE_FLOOR_DBM:
            bins[idx] = dbm
    if not bins:
        raise ValueError("every PDP bin fell below the reporting floor")
    return PowerDelayProfile(
        bin_width=bin_width,
        bins=bins,
        peak_power_dbm=max(bins.values()),
        first_arrival_delay=min(bins) * bin_width)
