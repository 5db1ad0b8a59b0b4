"""Millimeter-wave positioning toolkit.

Predicts channel observables (received power, angle of arrival, time of
arrival, power delay profiles) with a 2-D Fresnel ray tracer and
localizes receivers from those observables with five algorithms: TDoA
hyperbolic solving, AoA least squares, AoA + path-loss fusion, RSSI
rank-vector grid search, and fingerprint matching.  A synthetic
campaign generator and an error evaluator close the loop, and the
``mmwpos`` CLI drives everything from files.
"""

from .channel import (SPEED_OF_LIGHT, CiPathLossModel, FrequencyBand,
                      FresnelResult, ci_path_loss, fresnel_power, fspl_ref,
                      raw_resolution)
from .dataset import (CampaignConfig, EvaluationReport, LinkObservation,
                      MeasurementRecord, evaluate, generate_campaign,
                      load_observations, report_to_dict, save_observations)
from .errors import (ConvergenceError, CoverageError, DegenerateGeometryError,
                     FeasibilityError, MapFormatError, ObservationFormatError,
                     ToolkitError)
from .geomenv import (EnvironmentMap, Obstruction, Point2, Ray2, Segment,
                      first_obstruction, load_map, ray_segment_intersect,
                      save_map)
from .locengine import (AnchorFeatures, AnchorNode, BearingObservation,
                        DistanceRankVector, FingerprintRecord, GridSpec,
                        PositionEstimate, RssiObservation, TdoaObservation,
                        aoa_least_squares, fingerprint_localize,
                        fuse_aoa_pathloss, ideal_rank_vector, ml_distance,
                        rank_grid_localize, rank_vector, spearman_rho,
                        tdoa_solve)
from .raytracer import (ChannelPrediction, Interaction, PowerDelayProfile,
                        RayPath, TraceConfig, build_pdp, detection_radius,
                        trace)
from .signal import (ChirpParams, PhaseMeasurement, SampledSignal,
                     chirp_beat_tdoa, dominant_frequency, load_signal,
                     phase_toa_candidates, save_signal, simulate_mixed_chirps,
                     xcorr_tdoa)

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT", "FrequencyBand", "CiPathLossModel", "FresnelResult",
    "raw_resolution", "fspl_ref", "ci_path_loss", "fresnel_power",
    "Point2", "Segment", "Obstruction", "EnvironmentMap", "Ray2",
    "ray_segment_intersect", "first_obstruction", "load_map", "save_map",
    "TraceConfig", "Interaction", "RayPath", "PowerDelayProfile",
    "ChannelPrediction", "trace", "detection_radius", "build_pdp",
    "SampledSignal", "ChirpParams", "PhaseMeasurement", "xcorr_tdoa",
    "chirp_beat_tdoa", "simulate_mixed_chirps", "dominant_frequency",
    "phase_toa_candidates", "save_signal", "load_signal",
    "AnchorNode", "BearingObservation", "TdoaObservation", "RssiObservation",
    "DistanceRankVector", "GridSpec", "PositionEstimate", "AnchorFeatures",
    "FingerprintRecord", "aoa_least_squares", "fuse_aoa_pathloss",
    "ml_distance", "tdoa_solve", "rank_vector", "spearman_rho",
    "ideal_rank_vector", "rank_grid_localize", "fingerprint_localize",
    "CampaignConfig", "LinkObservation", "MeasurementRecord",
    "EvaluationReport", "generate_campaign", "evaluate", "report_to_dict",
    "save_observations", "load_observations",
    "ToolkitError", "MapFormatError", "ObservationFormatError",
    "DegenerateGeometryError", "FeasibilityError", "CoverageError",
    "ConvergenceError",
]
