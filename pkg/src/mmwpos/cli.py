"""Command-line front end.

Five subcommands: trace one link, synthesize a measurement campaign,
localize receivers from observations, evaluate estimates against ground
truth (writing the JSON report plus the rendered error figure), and
plot existing outputs.  Flags use meters for coordinates and cell
sizes, GHz for --freq, MHz for --bw, degrees for angles, dB/dBm for
powers.  Exit codes: 0 success, 1 domain or file error, 2 usage error.

Anchors file: CSV with header id,x_m,y_m,tx_power_dbm,carrier_ghz.
Observations file: CSV per the dataset module.  Estimates file: CSV
with header rx_id,x_m,y_m,method,residual.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .channel import SPEED_OF_LIGHT, CiPathLossModel, FrequencyBand
from .dataset import (CampaignConfig, evaluate, generate_campaign,
                      load_observations, report_to_dict, save_observations)
from .errors import ObservationFormatError, ToolkitError
from .geomenv import Point2, load_map
from .locengine import (AnchorFeatures, AnchorNode, BearingObservation,
                        FingerprintRecord, GridSpec, PositionEstimate,
                        RssiObservation, TdoaObservation, aoa_least_squares,
                        fingerprint_localize, fuse_aoa_pathloss,
                        rank_grid_localize, rank_vector, tdoa_solve)
from .plots import errors_figure, pdp_figure, save_svg
from .raytracer import TraceConfig, trace

ANCHOR_COLUMNS = ("id", "x_m", "y_m", "tx_power_dbm", "carrier_ghz")
ESTIMATE_COLUMNS = ("rx_id", "x_m", "y_m", "method", "residual")


def point_arg(text: str) -> Point2:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected 'x,y' in meters, got {text!r}") from exc
    return Point2(x, y)


def grid_arg(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected 'nx,ny' counts, got {text!r}") from exc
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError("grid counts must be >= 1")
    return nx, ny


def load_anchors(path) -> list[AnchorNode]:
    anchors = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ANCHOR_COLUMNS:
            raise ObservationFormatError(
                f"{path}: expected header {','.join(ANCHOR_COLUMNS)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(ANCHOR_COLUMNS):
                raise ObservationFormatError(
                    f"{path}: line {line_no}: expected {len(ANCHOR_COLUMNS)} fields")
            try:
                anchors.append(AnchorNode(
                    id=row[0].strip(),
                    position=Point2(float(row[1]), float(row[2])),
                    tx_power_dbm=float(row[3]),
                    carrier_hz=float(row[4]) * 1e9))
            except ValueError as exc:
                raise ObservationFormatError(
                    f"{path}: line {line_no}: {exc}") from exc
    if not anchors:
        raise ObservationFormatError(f"{path}: no anchors defined")
    return anchors


def save_estimates(estimates: dict[str, PositionEstimate], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ESTIMATE_COLUMNS)
        for rx_id in sorted(estimates):
            est = estimates[rx_id]
            writer.writerow([rx_id, repr(est.point.x), repr(est.point.y),
                             est.method, repr(est.residual)])


def load_estimates(path) -> dict[str, PositionEstimate]:
    out: dict[str, PositionEstimate] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ESTIMATE_COLUMNS:
            raise ObservationFormatError(
                f"{path}: expected header {','.join(ESTIMATE_COLUMNS)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(ESTIMATE_COLUMNS):
                raise ObservationFormatError(
                    f"{path}: line {line_no}: expected {len(ESTIMATE_COLUMNS)} fields")
            try:
                out[row[0].strip()] = PositionEstimate(
                    Point2(float(row[1]), float(row[2])), row[3].strip(),
                    float(row[4]))
            except ValueError as exc:
                raise ObservationFormatError(
                    f"{path}: line {line_no}: {exc}") from exc
    return out


def _band(args) -> FrequencyBand:
    return FrequencyBand(carrier_hz=args.freq * 1e9, bandwidth_hz=args.bw * 1e6)


def cmd_trace(args) -> int:
    env = load_map(args.map)
    band = _band(args)
    model = CiPathLossModel(ple=args.ple, carrier_hz=band.carrier_hz)
    cfg = TraceConfig(n_rays=args.rays, max_interactions=args.depth,
                      min_path_gain_db=args.floor)
    pred = trace(env, args.tx, args.rx, args.tx_power, band, model, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    doc = {
        "map": str(args.map),
        "tx_m": [args.tx.x, args.tx.y],
        "rx_m": [args.rx.x, args.rx.y],
        "carrier_ghz": args.freq,
        "bandwidth_mhz": args.bw,
        "tx_power_dbm": args.tx_power,
        "total_rx_power_dbm": pred.total_rx_power_dbm,
        "strongest_aoa_deg": (None if pred.strongest_aoa is None
                              else math.degrees(pred.strongest_aoa)),
        "strongest_toa_ns": (None if pred.strongest_toa is None
                             else pred.strongest_toa * 1e9),
        "path_count": len(pred.paths),
        "paths": [
            {
                "length_m": p.total_length,
                "delay_ns": p.delay * 1e9,
                "path_gain_db": p.path_gain_db,
                "aoa_deg": math.degrees(p.aoa_at_rx),
                "aod_deg": math.degrees(p.aod_at_tx),
                "vertices_m": [[v.x, v.y] for v in p.vertices],
                "interactions": [
                    {
                        "kind": x.kind,
                        "obstruction_id": x.obstruction_id,
                        "point_m": [x.point.x, x.point.y],
                        "incidence_deg": math.degrees(x.incidence_angle),
                        "loss_db": x.power_loss_db,
                    } for x in p.interactions
                ],
            } for p in pred.paths
        ],
    }
    json_path = out_dir / "prediction.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    pdp_path = out_dir / "pdp.csv"
    with open(pdp_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delay_ns", "power_dbm"])
        if pred.pdp is not None:
            for idx in sorted(pred.pdp.bins):
                writer.writerow([repr(idx * pred.pdp.bin_width * 1e9),
                                 repr(pred.pdp.bins[idx])])
    if not pred.paths:
        print("warning: no propagation path reached the receiver", file=sys.stderr)
    print(f"wrote {json_path} and {pdp_path}")
    return 0


def cmd_synth(args) -> int:
    env = load_map(args.map)
    anchors = load_anchors(args.anchors)
    rx_points = list(args.rx or [])
    if args.rx_grid is not None:
        nx, ny = args.rx_grid
        for j in range(ny):
            for i in range(nx):
                rx_points.append(Point2(env.width * (i + 0.5) / nx,
                                        env.height * (j + 0.5) / ny))
    if not rx_points:
        raise ValueError("no receiver points: pass --rx x,y or --rx-grid nx,ny")
    band = _band(args)
    cfg = CampaignConfig(
        env=env, anchors=tuple(anchors), rx_points=tuple(rx_points),
        band=band,
        model=CiPathLossModel(ple=args.ple, carrier_hz=band.carrier_hz),
        aoa_step=math.radians(args.aoa_step),
        rssi_noise_sigma=args.noise,
        seed=args.seed,
        comm_range_m=args.range,
        trace_config=TraceConfig(n_rays=args.rays, max_interactions=args.depth))
    records = generate_campaign(cfg)
    save_observations(records, args.out)
    n_obs = sum(len(r.observations) for r in records)
    print(f"wrote {args.out}: {len(records)} receivers, {n_obs} observations")
    return 0


def _require_links(column: str, minimum: int, pairs):
    if len(pairs) < minimum:
        raise ValueError(
            f"method needs at least {minimum} rows with "
            f"a {column} value, found {len(pairs)}")


def _estimate_one(args, record, anchors, by_id, fingerprints) -> PositionEstimate:
    obs = record.observations
    if args.method == "aoa":
        pairs = [(aid, o.aoa) for aid, o in sorted(obs.items())
                 if o.aoa is not None]
        _require_links("aoa_deg", 2, pairs)
        bearings = [BearingObservation(aid, aoa) for aid, aoa in pairs]
        return aoa_least_squares(anchors, bearings)
    elif args.method == "fusion":
        pairs = [(aid, o) for aid, o in sorted(obs.items())
                 if o.rssi_dbm is not None and o.aoa is not None]
        _require_links("rssi_dbm+aoa_deg", 1, pairs)
        aid, o = max(pairs, key=lambda item: (item[1].rssi_dbm, item[0]))
        anchor = by_id[aid]
        model = CiPathLossModel(ple=args.ple, carrier_hz=anchor.carrier_hz)
        return fuse_aoa_pathloss(
            anchor, BearingObservation(aid, o.aoa),
            RssiObservation(aid, o.rssi_dbm), model,
            antenna_gains_db=args.gains)
    elif args.method == "tdoa":
        pairs = [(aid, o.toa) for aid, o in sorted(obs.items())
                 if o.toa is not None]
        _require_links("toa_ns", 3, pairs)
        ref_id, ref_toa = pairs[0]
        tdoas = [TdoaObservation(aid, ref_id, (toa - ref_toa) * SPEED_OF_LIGHT)
                 for aid, toa in pairs[1:]]
        return tdoa_solve(anchors, tdoas)
    elif args.method == "rank":
        pairs = [RssiObservation(aid, o.rssi_dbm)
                 for aid, o in sorted(obs.items()) if o.rssi_dbm is not None]
        _require_links("rssi_dbm", 2, pairs)
        vector = rank_vector(pairs)
        return rank_grid_localize(
            anchors, vector, GridSpec(cell_size=args.grid, comm_range=args.range))
    else:  # fingerprint
        query = {aid: AnchorFeatures(o.rssi_dbm, o.aoa, o.toa)
                 for aid, o in obs.items()
                 if o.rssi_dbm is not None or o.aoa is not None or o.toa is not None}
        if not query:
            raise ValueError("no features to match")
        return fingerprint_localize(
            fingerprints, query,
            sigma_aoa=math.radians(args.hpbw) / 2.0,
            sigma_toa=1.0 / (args.bw * 1e6))


def cmd_localize(args) -> int:
    anchors = load_anchors(args.anchors)
    by_id = {a.id: a for a in anchors}
    records = load_observations(args.obs, known_anchor_ids=by_id)
    estimates: dict[str, PositionEstimate] = {}

    fingerprints: list[FingerprintRecord] = []
    if args.method == "fingerprint":
        if not args.db:
            raise ValueError("--method fingerprint requires --db FILE")
        for rec in load_observations(args.db, known_anchor_ids=by_id):
            if rec.true_position is None:
                raise ValueError(
                    f"fingerprint db {args.db}: rx {rec.rx_id!r} lacks "
                    "true_x_m/true_y_m")
            fingerprints.append(FingerprintRecord(
                rec.true_position,
                {aid: AnchorFeatures(o.rssi_dbm, o.aoa, o.toa)
                 for aid, o in rec.observations.items()}))

    for record in records:
        try:
            estimates[record.rx_id] = _estimate_one(
                args, record, anchors, by_id, fingerprints)
        except (ToolkitError, ValueError) as exc:
            # Name the receiver so a failure in a batch is attributable.
            raise type(exc)(f"rx {record.rx_id!r}: {exc}") from exc
    save_estimates(estimates, args.out)
    print(f"wrote {args.out}: {len(estimates)} estimates ({args.method})")
    return 0


def cmd_eval(args) -> int:
    estimates = load_estimates(args.estimates)
    if not estimates:
        raise ValueError(f"{args.estimates}: no estimates to evaluate")
    truths = {}
    for rec in load_observations(args.truth):
        if rec.true_position is not None:
            truths[rec.rx_id] = rec.true_position
    report = evaluate(estimates, truths)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")
    svg_path = out.with_suffix(".svg")
    fig = errors_figure([rx for rx, _e in report.per_rx],
                        [e for _rx, e in report.per_rx],
                        report.outlier_ids)
    save_svg(fig, svg_path)
    print(f"wrote {out} and {svg_path}: mean {report.mean_error:.3f} m over "
          f"{len(report.per_rx)} receivers")
    return 0


def cmd_plot(args) -> int:
    if (args.pdp is None) == (args.errors is None):
        raise ValueError("pass exactly one of --pdp or --errors")
    if args.pdp is not None:
        delays, powers = [], []
        with open(args.pdp, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != ("delay_ns", "power_dbm"):
                raise ObservationFormatError(
                    f"{args.pdp}: expected header delay_ns,power_dbm")
            for line_no, row in enumerate(reader, start=2):
                if not row or all(c.strip() == "" for c in row):
                    continue
                try:
                    delays.append(float(row[0]))
                    powers.append(float(row[1]))
                except (ValueError, IndexError) as exc:
                    raise ObservationFormatError(
                        f"{args.pdp}: line {line_no}: bad row") from exc
        if not delays:
            raise ValueError(f"{args.pdp}: no PDP bins to plot")
        fig = pdp_figure(delays, powers)
    else:
        with open(args.errors, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        per_rx = doc.get("per_rx", [])
        if not per_rx:
            raise ValueError(f"{args.errors}: no per-rx errors to plot")
        fig = errors_figure([e["rx_id"] for e in per_rx],
                            [e["error_m"] for e in per_rx],
                            doc.get("outliers", []))
    save_svg(fig, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmwpos",
        description="Millimeter-wave positioning toolkit: ray-traced channel "
                    "prediction and receiver localization.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="trace one TX-RX link and write the "
                                     "prediction JSON plus PDP CSV")
    p.add_argument("--map", required=True, help="environment map JSON file")
    p.add_argument("--tx", required=True, type=point_arg, help="TX position x,y in meters")
    p.add_argument("--rx", required=True, type=point_arg, help="RX position x,y in meters")
    p.add_argument("--freq", required=True, type=float, help="carrier frequency in GHz")
    p.add_argument("--bw", required=True, type=float, help="bandwidth in MHz")
    p.add_argument("--rays", type=int, default=100, help="launched rays (default 100)")
    p.add_argument("--depth", type=int, default=4,
                   help="max interactions per path (default 4)")
    p.add_argument("--tx-power", type=float, default=0.0, help="TX power in dBm (default 0)")
    p.add_argument("--ple", type=float, default=1.7,
                   help="path-loss exponent (default 1.7)")
    p.add_argument("--floor", type=float, default=-180.0,
                   help="path gain floor in dB (default -180)")
    p.add_argument("--out", default=".", help="output directory (default .)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("synth", help="generate a synthetic measurement campaign CSV")
    p.add_argument("--map", required=True, help="environment map JSON file")
    p.add_argument("--anchors", required=True, help="anchors CSV file")
    p.add_argument("--rx", action="append", type=point_arg,
                   help="receiver position x,y in meters (repeatable)")
    p.add_argument("--rx-grid", type=grid_arg,
                   help="lay receivers on an nx,ny grid over the map")
    p.add_argument("--freq", required=True, type=float, help="carrier frequency in GHz")
    p.add_argument("--bw", required=True, type=float, help="bandwidth in MHz")
    p.add_argument("--ple", type=float, default=1.7, help="path-loss exponent (default 1.7)")
    p.add_argument("--aoa-step", type=float, default=1.0,
                   help="AoA sweep step in degrees (default 1)")
    p.add_argument("--noise", type=float, default=4.0,
                   help="RSSI noise sigma in dB (default 4)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--range", type=float, default=200.0,
                   help="communication range in meters (default 200)")
    p.add_argument("--rays", type=int, default=100, help="launched rays (default 100)")
    p.add_argument("--depth", type=int, default=4,
                   help="max interactions per path (default 4)")
    p.add_argument("--out", required=True, help="output observations CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("localize", help="estimate receiver positions from observations")
    p.add_argument("--method", required=True,
                   choices=["aoa", "fusion", "tdoa", "rank", "fingerprint"])
    p.add_argument("--anchors", required=True, help="anchors CSV file")
    p.add_argument("--obs", required=True, help="observations CSV file")
    p.add_argument("--grid", type=float, default=20.0,
                   help="rank-grid cell size in meters (default 20)")
    p.add_argument("--range", type=float, default=200.0,
                   help="communication range in meters (default 200)")
    p.add_argument("--ple", type=float, default=1.7,
                   help="path-loss exponent for fusion (default 1.7)")
    p.add_argument("--gains", type=float, default=0.0,
                   help="combined antenna gains in dB for fusion (default 0)")
    p.add_argument("--db", help="fingerprint database CSV (observations with truth)")
    p.add_argument("--hpbw", type=float, default=15.0,
                   help="antenna HPBW in degrees for fingerprint AoA weighting (default 15)")
    p.add_argument("--bw", type=float, default=800.0,
                   help="bandwidth in MHz for fingerprint ToA weighting (default 800)")
    p.add_argument("--out", required=True, help="output estimates CSV")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="evaluate estimates against ground truth; "
                                    "writes the JSON report and the error figure")
    p.add_argument("--estimates", required=True, help="estimates CSV file")
    p.add_argument("--truth", required=True,
                   help="observations CSV carrying true_x_m/true_y_m")
    p.add_argument("--out", required=True, help="output report JSON (figure saved beside it)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render a PDP CSV or an error report to SVG")
    p.add_argument("--pdp", help="PDP CSV (delay_ns,power_dbm)")
    p.add_argument("--errors", help="evaluation report JSON")
    p.add_argument("--out", required=True, help="output SVG file")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ToolkitError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
