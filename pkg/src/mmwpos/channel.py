"""Radio-channel math.

Covers the three pieces the rest of the toolkit needs:

* raw time resolution of a band-limited sounder, c / B,
* the close-in (CI) path-loss model referenced to d0 = 1 m,
    PL(d) = FSPL(d0) + 10 * ple * log10(d / d0)
* Fresnel power reflection/transmission fractions at a dielectric
  interface, perpendicular (TE) polarization.

Shadow fading is deliberately absent here: the predictor stays
deterministic and measurement noise is injected by the dataset
generator instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class FrequencyBand:
    """Carrier frequency and sounding bandwidth, both in Hz."""

    carrier_hz: float
    bandwidth_hz: float

    def __post_init__(self):
        if not self.carrier_hz > 0:
            raise ValueError(f"carrier_hz must be > 0, got {self.carrier_hz}")
        if not self.bandwidth_hz > 0:
            raise ValueError(f"bandwidth_hz must be > 0, got {self.bandwidth_hz}")


@dataclass(frozen=True)
class CiPathLossModel:
    """Close-in free-space reference path-loss model.

    The reference distance is pinned to 1 m; ple is the path-loss
    exponent (1.7 fits indoor LOS measurements at 28 and 73 GHz).
    """

    ple: float
    carrier_hz: float
    d0: float = 1.0

    def __post_init__(self):
        if self.d0 != 1.0:
            raise ValueError(f"reference distance is fixed at 1.0 m, got {self.d0}")
        if not self.ple > 0:
            raise ValueError(f"ple must be > 0, got {self.ple}")
        if not self.carrier_hz > 0:
            raise ValueError(f"carrier_hz must be > 0, got {self.carrier_hz}")


@dataclass(frozen=True)
class FresnelResult:
    """Power fractions at a lossless dielectric interface."""

    reflect_power_frac: float
    transmit_power_frac: float

    def __post_init__(self):
        if not (0.0 <= self.reflect_power_frac <= 1.0):
            raise ValueError(f"reflect fraction out of [0,1]: {self.reflect_power_frac}")
        if not (0.0 <= self.transmit_power_frac <= 1.0):
            raise ValueError(f"transmit fraction out of [0,1]: {self.transmit_power_frac}")
        if self.reflect_power_frac + self.transmit_power_frac > 1.0 + 1e-9:
            raise ValueError("interface gains energy")


def raw_resolution(band: FrequencyBand) -> float:
    """Raw delay resolution of the band expressed as a distance, c / B meters.

    20 MHz of bandwidth resolves ~15 m; 4 GHz resolves ~7.5 cm.
    """
    return SPEED_OF_LIGHT / band.bandwidth_hz


def fspl_ref(carrier_hz: float) -> float:
    """Free-space path loss at the 1 m reference distance, in dB."""
    if not carrier_hz > 0:
        raise ValueError(f"carrier_hz must be > 0, got {carrier_hz}")
    return 20.0 * math.log10(4.0 * math.pi * carrier_hz / SPEED_OF_LIGHT)


def ci_path_loss(model: CiPathLossModel, distance_m: float) -> float:
    """CI model path loss in dB at a given distance.

    Defined only at or beyond the 1 m reference distance.
    """
    if distance_m < model.d0:
        raise ValueError(
            f"distance {distance_m} m is below the {model.d0} m model reference")
    return fspl_ref(model.carrier_hz) + 10.0 * model.ple * math.log10(distance_m / model.d0)


def fresnel_power(incidence_angle: float, eps_r: float) -> FresnelResult:
    """Perpendicular-polarization Fresnel power split at an interface.

    incidence_angle is measured from the surface normal, in [0, pi/2).
    The amplitude coefficient is

        r = (cos(t) - sqrt(eps_r - sin(t)^2)) / (cos(t) + sqrt(eps_r - sin(t)^2))

    and the interface is lossless: reflected plus transmitted power
    fractions sum to 1.
    """
    if not (0.0 <= incidence_angle < math.pi / 2.0):
        raise ValueError(f"incidence angle {incidence_angle} not in [0, pi/2)")
    if not eps_r >= 1.0:
        raise ValueError(f"eps_r must be >= 1.0, got {eps_r}")
    cos_t = math.cos(incidence_angle)
    sin_t = math.sin(incidence_angle)
    root = math.sqrt(eps_r - sin_t * sin_t)
    r_amp = (cos_t - root) / (cos_t + root)
    reflect = r_amp * r_amp
    return FresnelResult(reflect, 1.0 - reflect)
