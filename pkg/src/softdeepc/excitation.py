"""Open-loop excitation signals for data collection.

The data matrix is only as good as the signal that produced it: the inputs
must be persistently exciting of sufficiently high order or the collected
trajectories cannot represent the behaviors the controller will ask for.
Signals here are generated from a seeded RNG, checked for excitation order,
and regenerated with a fresh seed a bounded number of times before failing
loudly with actionable advice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hankel import is_persistently_exciting

_KINDS = ("ramp_and_hold", "uniform_random")


@dataclass(frozen=True)
class ExcitationSpec:
    """Shape of an open-loop excitation signal.

    ``ramp_and_hold`` draws a random target level per channel, ramps to it
    linearly over ``ramp_steps`` samples, holds it for ``hold_steps``, and
    repeats until ``total_steps`` samples exist. With ``ramp_steps=1`` and
    ``hold_steps=0`` this degenerates to a pure random-step signal.
    ``uniform_random`` draws every sample independently.
    """

    kind: str = "ramp_and_hold"
    amp_lower: float = 0.0
    amp_upper: float = 70.0
    ramp_steps: int = 4
    hold_steps: int = 8
    total_steps: int = 1500
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.ramp_steps < 1:
            raise ValueError("ramp_steps must be at least 1")
        if self.hold_steps < 0:
            raise ValueError("hold_steps must be nonnegative")
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        lo = np.asarray(self.amp_lower, dtype=float)
        hi = np.asarray(self.amp_upper, dtype=float)
        if np.any(lo > hi):
            raise ValueError("amp_lower must not exceed amp_upper")

    def amplitude_bounds(self, channels: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel (lower, upper) amplitude arrays."""
        lo = np.broadcast_to(np.asarray(self.amp_lower, float), (channels,)).copy()
        hi = np.broadcast_to(np.asarray(self.amp_upper, float), (channels,)).copy()
        return lo, hi


def _raw_signal(spec: ExcitationSpec, channels: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo, hi = spec.amplitude_bounds(channels)
    if spec.kind == "uniform_random":
        return rng.uniform(lo, hi, size=(spec.total_steps, channels))

    samples = np.empty((spec.total_steps, channels))
    level = rng.uniform(lo, hi)  # starting level, not emitted
    written = 0
    while written < spec.total_steps:
        target = rng.uniform(lo, hi)
        ramp = level + (target - level) * (
            np.arange(1, spec.ramp_steps + 1)[:, None] / spec.ramp_steps
        )
        segment = np.vstack([ramp, np.tile(target, (spec.hold_steps, 1))])
        take = min(len(segment), spec.total_steps - written)
        samples[written : written + take] = segment[:take]
        written += take
        level = target
    return samples


def minimum_length(order: int, channels: int) -> int:
    """Shortest signal that can be persistently exciting of ``order``."""
    # the depth-`order` Hankel matrix needs at least channels*order columns
    return (channels + 1) * order - 1


def generate_excitation(
    spec: ExcitationSpec,
    pe_order: int | None = None,
    channels: int = 3,
    max_retries: int = 8,
) -> np.ndarray:
    """Generate a (total_steps, channels) excitation signal.

    When ``pe_order`` is given the signal must be persistently exciting of
    that order; failing draws are regenerated from consecutive seeds at most
    ``max_retries`` times before raising.
    """
    if channels < 1:
        raise ValueError("channels must be positive")
    if pe_order is None:
        return _raw_signal(spec, channels, spec.seed)
    if pe_order < 1:
        raise ValueError("pe_order must be positive")
    needed = minimum_length(pe_order, channels)
    if spec.total_steps < needed:
        raise ValueError(
            f"total_steps={spec.total_steps} cannot be persistently exciting of "
            f"order {pe_order} with {channels} channels; need at least {needed} steps"
        )
    last_rank = 0
    for attempt in range(max_retries + 1):
        signal = _raw_signal(spec, channels, spec.seed + attempt)
        exciting, rank = is_persistently_exciting(signal, pe_order)
        if exciting:
            return signal
        last_rank = max(last_rank, rank)
    raise ValueError(
        f"failed to generate a persistently exciting signal of order {pe_order} "
        f"after {max_retries + 1} attempts (best rank {last_rank} of "
        f"{channels * pe_order}); increase total_steps or widen the amplitude range"
    )
