"""Localization engines: bearing LS, fusion, TDoA, rank grid, fingerprints."""

import math
from fractions import Fraction

import numpy as np
import pytest

from mmwpos import (
    AnchorFeatures,
    AnchorNode,
    BearingObservation,
    CiPathLossModel,
    CoverageError,
    DegenerateGeometryError,
    DistanceRankVector,
    EnvironmentMap,
    FeasibilityError,
    FingerprintRecord,
    FrequencyBand,
    GridSpec,
    Point2,
    RssiObservation,
    TdoaObservation,
    aoa_least_squares,
    ci_path_loss,
    fingerprint_localize,
    fspl_ref,
    fuse_aoa_pathloss,
    ideal_rank_vector,
    ml_distance,
    rank_grid_localize,
    rank_vector,
    spearman_rho,
    tdoa_solve,
    trace,
)

TWO_PI = 2.0 * math.pi
MODEL = CiPathLossModel(ple=1.7, carrier_hz=28e9)


def anchor(id, x, y):
    return AnchorNode(id, Point2(x, y))


def bearing_from(rx, anc):
    return BearingObservation(anc.id, rx.bearing_to(anc.position))


def ls_objective(anchors, bearings, p):
    index = {a.id: a for a in anchors}
    total = 0.0
    for b in bearings:
        a = index[b.anchor_id]
        beta = b.aoa + math.pi
        n = (-math.sin(beta), math.cos(beta))
        total += (n[0] * (p.x - a.position.x) + n[1] * (p.y - a.position.y)) ** 2
    return total


# -------------------------------------------------------------- bearing lines

def test_two_lines_cross_exactly():
    anchors = [anchor("a", 0, 0), anchor("b", 10, 0)]
    rx = Point2(5, 5)
    est = aoa_least_squares(anchors, [bearing_from(rx, a) for a in anchors])
    assert est.point.distance_to(rx) < 1e-9
    assert est.residual < 1e-18
    assert est.method == "aoa"


def test_three_consistent_bearings():
    anchors = [anchor("a", 0, 0), anchor("b", 10, 0), anchor("c", 3, 12)]
    rx = Point2(4, 5)
    est = aoa_least_squares(anchors, [bearing_from(rx, a) for a in anchors])
    assert est.point.distance_to(rx) < 1e-9


def test_perturbed_bearings_match_grid_search():
    anchors = [anchor("a", 0, 0), anchor("b", 10, 0), anchor("c", 3, 12)]
    rx = Point2(5, 5)
    rng = np.random.default_rng(21)
    bearings = [BearingObservation(a.id, (rx.bearing_to(a.position)
                + math.radians(rng.uniform(-1, 1))) % TWO_PI) for a in anchors]
    est = aoa_least_squares(anchors, bearings)
    # exhaustive 1 mm sweep of the same objective around the estimate
    step, half = 0.001, 0.05
    best, best_obj = None, math.inf
    for i in range(-50, 51):
        for j in range(-50, 51):
            p = Point2(est.point.x + i * step, est.point.y + j * step)
            o = ls_objective(anchors, bearings, p)
            if o < best_obj:
                best, best_obj = p, o
    assert est.point.distance_to(best) <= 0.002


def test_parallel_lines_degenerate():
    anchors = [anchor("a", 0, 0), anchor("b", 0, 5)]
    bearings = [BearingObservation("a", math.pi), BearingObservation("b", math.pi)]
    with pytest.raises(DegenerateGeometryError):
        aoa_least_squares(anchors, bearings)


def test_single_bearing_insufficient():
    with pytest.raises(ValueError):
        aoa_least_squares([anchor("a", 0, 0)], [BearingObservation("a", 1.0)])


def test_unknown_anchor_named():
    with pytest.raises((ValueError, KeyError), match="ghost"):
        aoa_least_squares([anchor("a", 0, 0), anchor("b", 1, 5)],
                          [BearingObservation("a", 1.0),
                           BearingObservation("ghost", 2.0)])


def test_rigid_motion_invariance():
    anchors = [anchor("a", 0, 0), anchor("b", 10, 0), anchor("c", 3, 12)]
    rx = Point2(5, 5)
    rng = np.random.default_rng(22)
    bearings = [BearingObservation(a.id, (rx.bearing_to(a.position)
                + rng.uniform(-0.02, 0.02)) % TWO_PI) for a in anchors]
    base = aoa_least_squares(anchors, bearings)
    theta, ox, oy = 0.83, -7.0, 11.5
    c, s = math.cos(theta), math.sin(theta)

    def xf(p):
        return Point2(c * p.x - s * p.y + ox, s * p.x + c * p.y + oy)

    moved_anchors = [AnchorNode(a.id, xf(a.position)) for a in anchors]
    moved_bearings = [BearingObservation(b.anchor_id, (b.aoa + theta) % TWO_PI)
                      for b in bearings]
    moved = aoa_least_squares(moved_anchors, moved_bearings)
    assert moved.point.distance_to(xf(base.point)) < 1e-9


# --------------------------------------------------------------------- fusion

def test_ml_distance_at_reference():
    assert ml_distance(fspl_ref(28e9), MODEL) == pytest.approx(1.0, abs=1e-12)


def test_fusion_unit_geometry():
    # 17 dB above the reference at ple 1.7 is exactly one decade: 10 m
    anc = anchor("a", 0, 0)
    est = fuse_aoa_pathloss(anc, BearingObservation("a", math.pi),
                            RssiObservation("a", -(fspl_ref(28e9) + 17.0)), MODEL)
    assert est.point.x == pytest.approx(10.0, abs=1e-9)
    assert est.point.y == pytest.approx(0.0, abs=1e-9)


def test_fusion_round_trip_noise_free():
    anc = anchor("a0", 7.0, 51.0)
    rng = np.random.default_rng(23)
    for _ in range(40):
        rx = Point2(rng.uniform(1, 34), rng.uniform(1, 64))
        d = rx.distance_to(anc.position)
        if d < 1.0:
            continue
        rssi = -ci_path_loss(MODEL, d)
        est = fuse_aoa_pathloss(anc, bearing_from(rx, anc),
                                RssiObservation("a0", rssi), MODEL)
        assert est.point.distance_to(rx) < 1e-9


def test_fusion_below_reference_rejected():
    anc = anchor("a", 0, 0)
    with pytest.raises(ValueError, match="1"):
        fuse_aoa_pathloss(anc, BearingObservation("a", 0.0),
                          RssiObservation("a", -(fspl_ref(28e9) - 2.0)), MODEL)


def test_fusion_id_mismatch_rejected():
    anc = anchor("a", 0, 0)
    with pytest.raises(ValueError):
        fuse_aoa_pathloss(anc, BearingObservation("b", 0.0),
                          RssiObservation("a", -70.0), MODEL)


def test_fusion_antenna_gains_shift_distance():
    anc = anchor("a", 0, 0)
    rssi = -(fspl_ref(28e9) + 17.0)
    plain = fuse_aoa_pathloss(anc, BearingObservation("a", math.pi),
                              RssiObservation("a", rssi), MODEL)
    with_gain = fuse_aoa_pathloss(anc, BearingObservation("a", math.pi),
                                  RssiObservation("a", rssi), MODEL,
                                  antenna_gains_db=17.0)
    assert with_gain.point.x == pytest.approx(plain.point.x * 10.0, rel=1e-12)


# ----------------------------------------------------------------------- TDoA

def test_degenerate_hyperbolas_cross_at_origin():
    anchors = [anchor("a", -1, 0), anchor("b", 1, 0),
               anchor("c", 0, -1), anchor("d", 0, 1)]
    obs = [TdoaObservation("a", "b", 0.0), TdoaObservation("c", "d", 0.0)]
    est = tdoa_solve(anchors, obs)
    assert est.point.distance_to(Point2(0, 0)) < 1e-9


def test_four_anchor_recovery():
    anchors = [anchor("a0", 0, 0), anchor("a1", 40, 2), anchor("a2", 38, 38),
               anchor("a3", 1, 41)]
    true = Point2(3, 4)
    d = [true.distance_to(a.position) for a in anchors]
    obs = [TdoaObservation("a0", f"a{i}", d[0] - d[i]) for i in (1, 2, 3)]
    est = tdoa_solve(anchors, obs)
    assert est.point.distance_to(true) < 1e-6
    assert est.residual < 1e-12


def test_residual_no_worse_than_truth():
    anchors = [anchor("a0", 0, 0), anchor("a1", 40, 2), anchor("a2", 38, 38)]
    true = Point2(12, 9)
    d = [true.distance_to(a.position) for a in anchors]
    obs = [TdoaObservation("a0", "a1", d[0] - d[1]),
           TdoaObservation("a0", "a2", d[0] - d[2])]
    est = tdoa_solve(anchors, obs)
    res_true = sum((true.distance_to(anchors[i].position)
                    - true.distance_to(anchors[j].position) - o.delta_distance) ** 2
                   for o, (i, j) in zip(obs, ((0, 1), (0, 2))))
    assert est.residual <= res_true + 1e-15


def test_infeasible_difference_rejected():
    anchors = [anchor("a", 0, 0), anchor("b", 10, 0), anchor("c", 0, 10)]
    with pytest.raises(FeasibilityError):
        tdoa_solve(anchors, [TdoaObservation("a", "b", 10.5),
                             TdoaObservation("a", "c", 1.0)])


def test_one_pair_insufficient():
    anchors = [anchor("a", 0, 0), anchor("b", 10, 0)]
    with pytest.raises(ValueError):
        tdoa_solve(anchors, [TdoaObservation("a", "b", 1.0)])


def test_collinear_ambiguity_flagged_and_steerable():
    # all anchors on the x-axis: mirror solutions at (0, +-4)
    anchors = [anchor("a", -5, 0), anchor("b", 5, 0), anchor("c", 0, 0)]
    true = Point2(0, 4)
    d = {a.id: true.distance_to(a.position) for a in anchors}
    obs = [TdoaObservation("a", "b", d["a"] - d["b"]),
           TdoaObservation("a", "c", d["a"] - d["c"])]
    est = tdoa_solve(anchors, obs)
    assert min(est.point.distance_to(Point2(0, 4)),
               est.point.distance_to(Point2(0, -4))) < 1e-6
    assert est.diagnostics is not None and "ambiguous" in est.diagnostics
    steered = tdoa_solve(anchors, obs, initial_guess=Point2(1, -3))
    assert steered.point.distance_to(Point2(0, -4)) < 1e-6


def test_two_pair_closed_form_oracle():
    # eliminate the common-anchor distance: the two squared-difference
    # equations are linear in (x, y) given d, so p = p0 + p1*d and the
    # circle |p - A| = d closes a quadratic in d
    def closed_form(A, B, C, k1, k2):
        M = np.array([[2 * (B[0] - A[0]), 2 * (B[1] - A[1])],
                      [2 * (C[0] - A[0]), 2 * (C[1] - A[1])]])
        c0 = np.array([B[0] ** 2 + B[1] ** 2 - A[0] ** 2 - A[1] ** 2 - k1 * k1,
                       C[0] ** 2 + C[1] ** 2 - A[0] ** 2 - A[1] ** 2 - k2 * k2])
        c1 = np.array([2 * k1, 2 * k2])
        Minv = np.linalg.inv(M)
        p0, p1 = Minv @ c0, Minv @ c1
        q = p0 - np.array(A)
        a = p1 @ p1 - 1.0
        b = 2.0 * (q @ p1)
        c = q @ q
        if abs(a) < 1e-15:
            roots = [-c / b] if abs(b) > 1e-15 else []
        else:
            disc = b * b - 4 * a * c
            roots = [] if disc < 0 else [(-b + s) / (2 * a)
                                         for s in (math.sqrt(disc), -math.sqrt(disc))]
        pts = []
        for dd in roots:
            if dd <= 0 or dd - k1 < 0 or dd - k2 < 0:
                continue
            p = p0 + p1 * dd
            if abs(np.hypot(*(p - np.array(A))) - dd) < 1e-6:
                pts.append(Point2(float(p[0]), float(p[1])))
        return pts

    rng = np.random.default_rng(24)
    checked = 0
    for _ in range(25):
        base = [(0, 0), (40, 0), (40, 40)]
        pts = [(bx + rng.uniform(0, 8), by + rng.uniform(0, 8)) for bx, by in base]
        anchors = [AnchorNode(f"a{i}", Point2(*p)) for i, p in enumerate(pts)]
        true = Point2(rng.uniform(12, 36), rng.uniform(12, 36))
        d = [true.distance_to(a.position) for a in anchors]
        obs = [TdoaObservation("a0", "a1", d[0] - d[1]),
               TdoaObservation("a0", "a2", d[0] - d[2])]
        cands = closed_form(pts[0], pts[1], pts[2], d[0] - d[1], d[0] - d[2])
        if not cands:
            continue
        est = tdoa_solve(anchors, obs)
        assert min(c.distance_to(est.point) for c in cands) < 1e-6
        checked += 1
    assert checked >= 20


# ------------------------------------------------------------------ rank based

def test_rank_vector_sorts_by_strength():
    vec = rank_vector([RssiObservation("A", -60), RssiObservation("B", -70),
                       RssiObservation("C", -80)])
    assert vec.anchor_ids == ("A", "B", "C")


def test_rank_vector_single_and_ties():
    assert rank_vector([RssiObservation("only", -50)]).anchor_ids == ("only",)
    vec = rank_vector([RssiObservation("B", -60), RssiObservation("A", -60)])
    assert vec.anchor_ids == ("A", "B")  # documented id tie-break


def test_rank_vector_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        rank_vector([RssiObservation("A", -60), RssiObservation("A", -61)])


def test_rank_vector_matches_distance_order_under_monotone_map():
    anchors = [anchor(f"n{i}", x, y) for i, (x, y) in
               enumerate([(3, 4), (20, 1), (9, 18), (14, 13)])]
    rng = np.random.default_rng(25)
    for _ in range(20):
        p = Point2(rng.uniform(0, 22), rng.uniform(0, 20))
        obs = [RssiObservation(a.id, -3.0 * p.distance_to(a.position) - 40.0)
               for a in anchors]
        assert rank_vector(obs).anchor_ids == ideal_rank_vector(anchors, p).anchor_ids


def test_spearman_endpoints_and_example():
    u = DistanceRankVector(("A", "B", "C", "D"))
    assert spearman_rho(u, u) == 1.0
    assert spearman_rho(u, DistanceRankVector(("D", "C", "B", "A"))) == -1.0
    # swap B and C: d = (0, 1, 1, 0), rho = 1 - 6*2/60
    assert spearman_rho(u, DistanceRankVector(("A", "C", "B", "D"))) == pytest.approx(0.8, abs=1e-15)


def test_spearman_matches_rank_difference_definition():
    rng = np.random.default_rng(26)
    for _ in range(200):
        m = int(rng.integers(2, 11))
        ids = tuple(f"n{i}" for i in range(m))
        perm = tuple(np.array(ids)[rng.permutation(m)])
        u, v = DistanceRankVector(ids), DistanceRankVector(perm)
        ranks_u = {a: i for i, a in enumerate(ids)}
        ranks_v = {a: i for i, a in enumerate(perm)}
        s = sum((ranks_u[a] - ranks_v[a]) ** 2 for a in ids)
        oracle = float(1 - Fraction(6 * s, m * (m * m - 1)))
        assert spearman_rho(u, v) == pytest.approx(oracle, abs=1e-15)


def test_spearman_preconditions():
    with pytest.raises(ValueError):
        spearman_rho(DistanceRankVector(("A", "B")), DistanceRankVector(("A", "C")))
    with pytest.raises(ValueError):
        spearman_rho(DistanceRankVector(("A",)), DistanceRankVector(("A",)))


def test_rank_vector_type_rejects_duplicates():
    with pytest.raises(ValueError):
        DistanceRankVector(("A", "A"))


# ------------------------------------------------------------------ rank grid

GRID = GridSpec(cell_size=20.0, comm_range=200.0)


def oracle_residence(anchors, measured, grid):
    """Brute-force scoring of every cell in the ER intersection."""
    R = grid.comm_range
    x0 = max(a.position.x - R for a in anchors)
    x1 = min(a.position.x + R for a in anchors)
    y0 = max(a.position.y - R for a in anchors)
    y1 = min(a.position.y + R for a in anchors)
    assert x1 > x0 and y1 > y0
    nx = max(1, math.ceil((x1 - x0) / grid.cell_size - 1e-12))
    ny = max(1, math.ceil((y1 - y0) / grid.cell_size - 1e-12))
    scored = []
    for j in range(ny):
        for i in range(nx):
            c = Point2(x0 + (i + 0.5) * grid.cell_size, y0 + (j + 0.5) * grid.cell_size)
            scored.append((c, spearman_rho(ideal_rank_vector(anchors, c), measured)))
    best = max(r for _, r in scored)
    return [c for c, r in scored if r >= best - 1e-12], best


def test_cell_with_matching_ideal_vector_is_in_residence():
    anchors = [anchor("a", 50, 60), anchor("b", 300, 80), anchor("c", 150, 320)]
    user = Point2(120, 100)
    vec = ideal_rank_vector(anchors, user)
    est = rank_grid_localize(anchors, vec, GRID)
    cells, best = oracle_residence(anchors, vec, GRID)
    assert best == 1.0
    assert est.residual == 0.0
    centroid = Point2(sum(c.x for c in cells) / len(cells),
                      sum(c.y for c in cells) / len(cells))
    assert est.point.distance_to(centroid) < 1e-9


def test_generic_user_cell_is_recovered():
    anchors = [anchor("a", 150, 150), anchor("b", 260, 140), anchor("c", 200, 280)]
    user = Point2(190, 190)
    obs = [RssiObservation(a.id, -ci_path_loss(MODEL, user.distance_to(a.position)))
           for a in anchors]
    vec = rank_vector(obs)
    est = rank_grid_localize(anchors, vec, GRID)
    assert est.residual == 0.0
    cells, _ = oracle_residence(anchors, vec, GRID)
    # the user's own cell appears among the maximizers
    R = GRID.comm_range
    x0 = max(a.position.x - R for a in anchors)
    y0 = max(a.position.y - R for a in anchors)
    own = Point2(x0 + (math.floor((user.x - x0) / 20.0) + 0.5) * 20.0,
                 y0 + (math.floor((user.y - y0) / 20.0) + 0.5) * 20.0)
    assert any(c.distance_to(own) < 1e-9 for c in cells)


def test_two_anchor_label_mirror_symmetry():
    # swapping the measured order mirrors the residence area across the
    # perpendicular bisector of the two anchors; the 120 m separation
    # keeps every cell center off the bisector and the coverage width an
    # even cell multiple, so the mirror is exact
    anchors = [anchor("a", 140, 200), anchor("b", 260, 200)]
    ab = rank_grid_localize(anchors, DistanceRankVector(("a", "b")), GRID)
    ba = rank_grid_localize(anchors, DistanceRankVector(("b", "a")), GRID)
    assert ab.point.x + ba.point.x == pytest.approx(400.0, abs=1e-9)
    assert ab.point.y == pytest.approx(ba.point.y, abs=1e-9)
    assert ab.residual == 0.0 and ba.residual == 0.0


def test_bisector_cell_goes_to_earlier_id():
    # 100 m separation puts one column of centers exactly on the
    # bisector; the distance tie there resolves toward the earlier id,
    # so that column joins a's residence area, not b's
    anchors = [anchor("a", 150, 200), anchor("b", 250, 200)]
    ab = rank_grid_localize(anchors, DistanceRankVector(("a", "b")), GRID)
    ba = rank_grid_localize(anchors, DistanceRankVector(("b", "a")), GRID)
    assert ab.point.x + ba.point.x == pytest.approx(410.0, abs=1e-9)


def test_rssi_offset_leaves_estimate_unchanged():
    anchors = [anchor("a", 150, 150), anchor("b", 260, 140), anchor("c", 200, 280)]
    user = Point2(175, 210)
    base_obs = [RssiObservation(a.id, -ci_path_loss(MODEL, user.distance_to(a.position)))
                for a in anchors]
    est0 = rank_grid_localize(anchors, rank_vector(base_obs), GRID)
    shifted = [RssiObservation(o.anchor_id, o.rssi_dbm + 23.5) for o in base_obs]
    est1 = rank_grid_localize(anchors, rank_vector(shifted), GRID)
    assert est0.point == est1.point
    assert est0.residual == est1.residual


def test_disjoint_coverage_is_an_error():
    anchors = [anchor("a", 0, 0), anchor("b", 600, 0)]
    with pytest.raises(CoverageError):
        rank_grid_localize(anchors, DistanceRankVector(("a", "b")),
                           GridSpec(cell_size=20.0, comm_range=200.0))


def test_unknown_anchor_in_vector_rejected():
    anchors = [anchor("a", 0, 0), anchor("b", 10, 0)]
    with pytest.raises(ValueError, match="ghost"):
        rank_grid_localize(anchors, DistanceRankVector(("a", "ghost")), GRID)


# ---------------------------------------------------------------- fingerprints

def test_exact_record_match():
    db = [FingerprintRecord(Point2(1, 1), {"a": AnchorFeatures(rssi_dbm=-60.0, aoa=1.0, toa=30e-9)}),
          FingerprintRecord(Point2(2, 2), {"a": AnchorFeatures(rssi_dbm=-70.0, aoa=2.0, toa=40e-9)})]
    est = fingerprint_localize(db, {"a": AnchorFeatures(rssi_dbm=-70.0, aoa=2.0, toa=40e-9)})
    assert est.point == Point2(2, 2)
    assert est.residual == 0.0


def test_rssi_only_reduces_to_nearest_rssi():
    db = [FingerprintRecord(Point2(float(i), 0.0), {"a": AnchorFeatures(rssi_dbm=-50.0 - 10 * i)})
          for i in range(5)]
    est = fingerprint_localize(db, {"a": AnchorFeatures(rssi_dbm=-72.0)})
    assert est.point == Point2(2.0, 0.0)


def test_bearing_difference_wraps():
    close_by_wrap = FingerprintRecord(Point2(0, 0), {"a": AnchorFeatures(aoa=TWO_PI - 0.1)})
    farther = FingerprintRecord(Point2(9, 9), {"a": AnchorFeatures(aoa=1.0)})
    est = fingerprint_localize([farther, close_by_wrap], {"a": AnchorFeatures(aoa=0.05)})
    assert est.point == Point2(0, 0)


def test_tie_keeps_first_record():
    db = [FingerprintRecord(Point2(0, 0), {"a": AnchorFeatures(rssi_dbm=-60.0)}),
          FingerprintRecord(Point2(5, 5), {"a": AnchorFeatures(rssi_dbm=-60.0)})]
    est = fingerprint_localize(db, {"a": AnchorFeatures(rssi_dbm=-60.0)})
    assert est.point == Point2(0, 0)


def test_empty_db_rejected():
    with pytest.raises(ValueError):
        fingerprint_localize([], {"a": AnchorFeatures(rssi_dbm=-60.0)})


def test_no_shared_features_names_record():
    # record 0 lacks the queried anchor entirely; record 1 has it but
    # holds a disjoint feature set, so no record can be scored
    db = [FingerprintRecord(Point2(0, 0), {"a": AnchorFeatures(rssi_dbm=-60.0)}),
          FingerprintRecord(Point2(1, 1), {"b": AnchorFeatures(toa=10e-9)})]
    with pytest.raises(ValueError, match="record 0"):
        fingerprint_localize(db, {"b": AnchorFeatures(rssi_dbm=-55.0)})


def test_raytraced_grid_query_returns_exact_point():
    env = EnvironmentMap(35.0, 65.5)
    band = FrequencyBand(28e9, 800e6)
    anc = AnchorNode("a0", Point2(17.5, 32.75))

    def features(p):
        pred = trace(env, anc.position, p, 0.0, band, MODEL)
        return {"a0": AnchorFeatures(rssi_dbm=pred.total_rx_power_dbm,
                                     aoa=pred.strongest_aoa,
                                     toa=pred.strongest_toa)}

    xs = [4.0 + 3.0 * i for i in range(10)]
    ys = [4.0 + 6.0 * j for j in range(10)]
    db = [FingerprintRecord(Point2(x, y), features(Point2(x, y)))
          for x in xs for y in ys]
    query_at = Point2(xs[6], ys[3])
    est = fingerprint_localize(db, features(query_at))
    assert est.point == query_at
    assert est.residual == 0.0
