"""Signal-level delay estimators.

Three ways to turn waveforms or phases into propagation delay:

* ``xcorr_tdoa``: dense integer-lag cross-correlation of two captures;
  the lag maximizing the correlation is the TDoA.  No sub-sample
  interpolation, one sample is the resolution quantum.
* ``chirp_beat_tdoa``: for linear FM chirps the mixer beat frequency is
  proportional to delay through the sweep slope B / T_c.
  ``simulate_mixed_chirps`` produces the mixed, low-pass-filtered
  waveform so the whole pipeline can be exercised end to end.
* ``phase_toa_candidates``: carrier phase pins the ToA modulo one
  period; combining several frequencies thins the candidate set, which
  for commensurate frequencies repeats at the LCM of the periods.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

PHASE_MATCH_TOL_RAD = 1e-6


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Real-valued amplitude sequence at a fixed sample rate."""

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class ChirpParams:
    """Linear FM sweep: bandwidth Hz over duration seconds from start_freq."""

    bandwidth: float
    duration: float
    start_freq: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")
        if not self.duration > 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")

    @property
    def slope(self) -> float:
        """Sweep rate in Hz per second."""
        return self.bandwidth / self.duration


@dataclass(frozen=True)
class PhaseMeasurement:
    """Measured carrier phase at one frequency, wrapped to [0, 2*pi)."""

    frequency: float
    phase: float

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"frequency must be > 0, got {self.frequency}")
        if not (0.0 <= self.phase < 2.0 * math.pi):
            raise ValueError(f"phase {self.phase} not in [0, 2*pi)")


def xcorr_tdoa(a: SampledSignal, b: SampledSignal) -> float:
    """Signed lag (seconds) of b relative to a that maximizes their
    cross-correlation.

    Positive result means b is a delayed copy of a.  Correlation is
    evaluated at every integer lag; ties go to the smallest |lag|, then
    to the smaller (more negative) lag.
    """
    if a.sample_rate != b.sample_rate:
        raise ValueError(
            f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    corr = np.correlate(b.samples, a.samples, mode="full")
    lags = np.arange(len(corr)) - (len(a.samples) - 1)
    peak = corr.max()
    tied = lags[np.flatnonzero(corr == peak)]
    best = min(tied, key=lambda lag: (abs(lag), lag))
    return float(best) / a.sample_rate


def chirp_beat_tdoa(beat_freq: float, chirp: ChirpParams) -> float:
    """Invert the LFM slope: delay = beat * T_c / B."""
    if beat_freq < 0:
        raise ValueError(f"beat_freq must be >= 0, got {beat_freq}")
    return beat_freq * chirp.duration / chirp.bandwidth


def simulate_mixed_chirps(chirp: ChirpParams, delta_t: float, fs: float) -> SampledSignal:
    """Mix two unit chirps offset by delta_t and low-pass the product.

    The product of the two sweeps contains a difference tone at
    slope * delta_t (the beat) plus sum-frequency content, which the
    moving-average filter (cutoff at B/10) suppresses.  The product is
    synthesized at an internal multiple of fs so the sum term is
    filtered before decimation; sampling it at fs directly would fold
    it back in band.  Sampling covers the window where both chirps are
    on the air, less a one-twentieth settling head (below t = T_c/20
    the sum term sits under the filter cutoff and no low-pass can take
    it out), so delta_t = 0 gives a DC output and |delta_t| must stay
    below the chirp duration.
    """
    d = abs(delta_t)
    if d >= chirp.duration:
        raise ValueError(
            f"|delta_t| = {d} s does not fit inside the {chirp.duration} s chirp")
    expected_beat = chirp.slope * d
    if not fs > 4.0 * expected_beat:
        raise ValueError(
            f"fs = {fs} Hz too low; need > 4x the {expected_beat} Hz beat")
    top = 2.0 * (chirp.start_freq + chirp.bandwidth)
    over = max(1, int(math.ceil(4.0 * top / fs)))
    fs_int = over * fs
    start = d + chirp.duration / 20.0
    n_int = int(math.floor((chirp.duration - start) * fs_int))
    if n_int > (1 << 24):
        raise ValueError(
            f"simulation would need {n_int} internal samples; "
            "reduce duration, bandwidth, or sample rate")
    if n_int < 8 * over:
        raise ValueError("overlap window too short for the given sample rate")
    t = start + np.arange(n_int) / fs_int

    def phase(tt):
        return 2.0 * math.pi * (chirp.start_freq * tt + 0.5 * chirp.slope * tt * tt)

    mixed = np.cos(phase(t)) * np.cos(phase(t - d))
    window = int(round(fs_int / (chirp.bandwidth / 10.0)))
    window = max(1, min(window, n_int // 4))
    if window > 1:
        sums = np.cumsum(mixed)
        mixed = (sums[window:] - sums[:-window]) / window
    out = mixed[::over]
    if out.size < 8:
        raise ValueError("overlap window too short for the given sample rate")
    return SampledSignal(fs, out)


def dominant_frequency(sig: SampledSignal) -> float:
    """Frequency (Hz) of the strongest magnitude bin in the spectrum.

    This is the peak-pick step of the chirp pipeline; resolution is one
    spectral bin, fs / len(sig).
    """
    spectrum = np.abs(np.fft.rfft(sig.samples))
    return float(np.argmax(spectrum)) * sig.sample_rate / len(sig.samples)


def _wrapped_phase_error(angle: float, target: float) -> float:
    d = (angle - target) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


def phase_toa_candidates(measurements: list[PhaseMeasurement], max_toa: float) -> list[float]:
    """All delays in [0, max_toa) whose synthesized phases match every
    measurement within 1e-6 rad.

    Each matching region is reported by one representative instant: the
    exact phase solutions of the highest-frequency measurement (the
    densest candidate comb) are enumerated and screened against the
    rest.  For commensurate frequencies the survivors are spaced by the
    LCM of the periods; incommensurate sets simply thin out further,
    and mutually inconsistent phases yield an empty list.
    """
    if not measurements:
        raise ValueError("at least one phase measurement is required")
    if not max_toa > 0:
        raise ValueError(f"max_toa must be > 0, got {max_toa}")
    ref = max(measurements, key=lambda m: m.frequency)
    others = [m for m in measurements if m is not ref]
    period = 1.0 / ref.frequency
    t0 = ref.phase / (2.0 * math.pi * ref.frequency)
    out = []
    k = 0
    while True:
        t = t0 + k * period
        if t >= max_toa:
            break
        if all(_wrapped_phase_error(2.0 * math.pi * m.frequency * t, m.phase)
               <= PHASE_MATCH_TOL_RAD for m in others):
            out.append(t)
        k += 1
    return out


def save_signal(sig: SampledSignal, path) -> None:
    """Write a signal as CSV with columns index, amplitude."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "amplitude"])
        for i, v in enumerate(sig.samples):
            writer.writerow([i, repr(float(v))])


def load_signal(path, sample_rate: float) -> SampledSignal:
    """Read a signal CSV (columns index, amplitude) back at a given rate."""
    amplitudes = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["index", "amplitude"]:
            raise ValueError(f"{path}: expected header 'index,amplitude'")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ValueError(f"{path}: line {line_no}: expected 2 fields")
            try:
                amplitudes.append(float(row[1]))
            except ValueError as exc:
                raise ValueError(f"{path}: line {line_no}: bad amplitude {row[1]!r}") from exc
    return SampledSignal(sample_rate, np.asarray(amplitudes))
