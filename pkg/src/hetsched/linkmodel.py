"""Physical and queueing model of the two uplink channels.

The wired channel is lossless, rate-limited and FIFO-buffered; the wireless
channel is lossy with a per-bit error probability derived from the link
budget.  All data sizes are held internally in bits; configuration layers
convert from bytes.  SNR arithmetic is done in the dB domain throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special


@dataclass(frozen=True)
class RadioParams:
    """Link-budget constants for the wireless uplink.

    ``sigma_db`` is the shadowing spread and ``snr_threshold_db`` the
    decision threshold of the bit error model, both in dB.
    """

    tx_power_db: float
    gain_db: float
    noise_db: float
    ref_distance_m: float
    distance_m: float
    pathloss_exp: float
    snr_threshold_db: float
    sigma_db: float

    def __post_init__(self):
        if self.ref_distance_m <= 0:
            raise ValueError(f"ref_distance_m must be > 0, got {self.ref_distance_m}")
        if self.distance_m < self.ref_distance_m:
            raise ValueError(
                f"distance_m ({self.distance_m}) must be >= ref_distance_m "
                f"({self.ref_distance_m})"
            )
        if self.pathloss_exp <= 0:
            raise ValueError(f"pathloss_exp must be > 0, got {self.pathloss_exp}")
        if self.sigma_db <= 0:
            raise ValueError(f"sigma_db must be > 0, got {self.sigma_db}")


@dataclass(frozen=True)
class LinkParams:
    """Rates and the wireless transmission budget of the platform."""

    plc_rate_bps: float
    rb_rate_bps: float
    rb_budget: float
    radio: RadioParams

    def __post_init__(self):
        if self.plc_rate_bps <= 0:
            raise ValueError(f"plc_rate_bps must be > 0, got {self.plc_rate_bps}")
        if self.rb_rate_bps <= 0:
            raise ValueError(f"rb_rate_bps must be > 0, got {self.rb_rate_bps}")
        if self.rb_budget < 0:
            raise ValueError(f"rb_budget must be >= 0, got {self.rb_budget}")


@dataclass(frozen=True)
class SensorSpec:
    """Per-sensor quality-of-service requirements."""

    id: int
    delay_bound_s: float
    min_success_prob: float

    def __post_init__(self):
        if self.delay_bound_s <= 0:
            raise ValueError(f"delay_bound_s must be > 0, got {self.delay_bound_s}")
        if not 0.0 <= self.min_success_prob <= 1.0:
            raise ValueError(
                f"min_success_prob must be in [0, 1], got {self.min_success_prob}"
            )


class TrafficTrace:
    """Per-sensor, per-timestep arrival sizes in bits.

    Stored as an integer matrix indexed ``[sensor][timestep]``.
    """

    def __init__(self, arrivals_bits):
        arr = np.asarray(arrivals_bits)
        if arr.ndim != 2:
            raise ValueError("arrivals_bits must be a 2-D matrix [sensor][timestep]")
        if arr.size and np.any(arr < 0):
            raise ValueError("arrival sizes must be nonnegative")
        self.arrivals_bits = arr.astype(np.int64)

    @property
    def n_sensors(self) -> int:
        return self.arrivals_bits.shape[0]

    @property
    def n_steps(self) -> int:
        return self.arrivals_bits.shape[1]

    def window(self, start: int, length: int) -> "TrafficTrace":
        """Columns ``[start, start+length)``, zero-padded past the end."""
        out = np.zeros((self.n_sensors, length), dtype=np.int64)
        hi = min(self.n_steps, start + length)
        if hi > start:
            out[:, : hi - start] = self.arrivals_bits[:, start:hi]
        return TrafficTrace(out)

    def __eq__(self, other):
        return isinstance(other, TrafficTrace) and np.array_equal(
            self.arrivals_bits, other.arrivals_bits
        )

    def __repr__(self):
        return f"TrafficTrace(shape={self.arrivals_bits.shape})"


@dataclass(frozen=True)
class BufferState:
    """Depth and capacity of the wired channel's FIFO buffer, in bits."""

    depth_bits: float
    capacity_bits: float

    def __post_init__(self):
        if not 0 <= self.depth_bits <= self.capacity_bits:
            raise ValueError(
                f"depth_bits must lie in [0, {self.capacity_bits}], "
                f"got {self.depth_bits}"
            )


class BufferStepResult(NamedTuple):
    state: BufferState
    drained_bits: float
    overflow_bits: float


def avg_snr_db(radio: RadioParams) -> float:
    """Average received SNR in dB: transmit power plus gain, minus log-distance
    path loss and thermal noise."""
    pathloss = 10.0 * radio.pathloss_exp * math.log10(
        radio.distance_m / radio.ref_distance_m
    )
    return radio.tx_power_db + radio.gain_db - pathloss - radio.noise_db


def bit_error_rate(radio: RadioParams) -> float:
    """Bit error probability of the wireless link.

    Half the complementary error function of the (dB-domain) margin between
    the average SNR and the threshold, scaled by the shadowing spread; falls
    monotonically as the average SNR rises.
    """
    margin = (avg_snr_db(radio) - radio.snr_threshold_db) / (
        radio.sigma_db * math.sqrt(2.0)
    )
    return 0.5 * float(special.erfc(margin))


def success_prob(size_bits: float, p_b: float) -> float:
    """Probability that all ``size_bits`` bits survive, per-bit independence.

    Computed as exp(size * log1p(-p_b)) for numerical stability.  ``p_b == 1``
    with a positive size gives exactly 0.
    """
    if size_bits < 0:
        raise ValueError("size_bits must be >= 0")
    if size_bits == 0:
        return 1.0
    if p_b >= 1.0:
        return 0.0
    return math.exp(size_bits * math.log1p(-p_b))


def queue_delay_s(buffer: BufferState, plc_rate_bps: float) -> float:
    """Waiting time of newly queued data: current depth over the wire rate."""
    if plc_rate_bps <= 0:
        raise ValueError("plc_rate_bps must be > 0")
    return buffer.depth_bits / plc_rate_bps


def buffer_step(
    buffer: BufferState,
    arrivals_row,
    decisions_row,
    plc_rate_bps: float,
    dt_s: float,
) -> BufferStepResult:
    """One step of the buffer recursion.

    Wired-assigned arrivals are admitted, each wired-assigned sensor drains
    up to ``plc_rate_bps * dt_s``, and the result is clamped to
    ``[0, capacity]``.  Bits pushed above capacity are reported as overflow
    (callers treat them as dropped).  Conservation holds exactly:
    ``new_depth + drained + overflow == old_depth + admitted``.
    """
    arrivals = np.asarray(arrivals_row, dtype=float)
    decisions = np.asarray(decisions_row, dtype=float)
    if arrivals.shape != decisions.shape:
        raise ValueError("arrivals_row and decisions_row must have equal length")
    if np.any((decisions < 0) | (decisions > 1)):
        raise ValueError("decisions must lie in [0, 1]")

    admitted = float(np.dot(arrivals, decisions))
    drain_capacity = float(plc_rate_bps * dt_s * np.sum(decisions))
    inflow = buffer.depth_bits + admitted
    drained = min(inflow, drain_capacity)
    after_drain = inflow - drained
    overflow = max(0.0, after_drain - buffer.capacity_bits)
    new_depth = after_drain - overflow
    return BufferStepResult(
        BufferState(new_depth, buffer.capacity_bits), drained, overflow
    )


def calibrate_gain(target_pb: float, at_distance_m: float, radio: RadioParams) -> float:
    """Back-solve the system gain so the link hits ``target_pb`` at a distance.

    Inverts the bit error model analytically; substituting the returned gain
    reproduces the target to float precision.
    """
    if not 0.0 < target_pb < 0.5:
        raise ValueError(f"target_pb must be in (0, 0.5), got {target_pb}")
    margin = float(special.erfcinv(2.0 * target_pb)) * radio.sigma_db * math.sqrt(2.0)
    snr_needed = radio.snr_threshold_db + margin
    pathloss = 10.0 * radio.pathloss_exp * math.log10(
        at_distance_m / radio.ref_distance_m
    )
    return snr_needed - radio.tx_power_db + pathloss + radio.noise_db
