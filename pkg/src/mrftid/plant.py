"""Linear time-delay plants.

A plant is stored in the factored form

    W(s) = K * prod(T_N s + 1) / (s**n_i * prod(T_D s + 1)) * exp(-tau s)

which keeps the static gain separate from the time parameters, so gain and
time scaling act on disjoint fields.  Frequencies are in rad/s throughout this
module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDrag, InvalidFrequency, InvalidParameter

__all__ = [
    "TimeDelayLTI",
    "SoiptdParams",
    "soiptd",
    "as_soiptd",
    "freq_response",
    "magnitude",
    "phase",
    "gain_scale",
    "time_scale",
    "attitude_plant",
    "altitude_plant",
    "state_space",
]


def _check_time_constants(values, name):
    out = tuple(float(v) for v in values)
    for v in out:
        if not (math.isfinite(v) and v > 0):
            raise InvalidParameter(f"{name} must be finite and positive, got {v!r}")
    return out


@dataclass(frozen=True)
class TimeDelayLTI:
    """Strictly proper rational plant with an integrator block and a delay."""

    gain: float
    integrators: int = 0
    num_tc: tuple = ()
    den_tc: tuple = ()
    delay: float = 0.0

    def __post_init__(self):
        gain = float(self.gain)
        if not math.isfinite(gain) or gain == 0.0:
            raise InvalidParameter(f"gain must be finite and nonzero, got {self.gain!r}")
        n_i = int(self.integrators)
        if n_i != self.integrators or n_i < 0:
            raise InvalidParameter(f"integrator count must be a non-negative integer, got {self.integrators!r}")
        num = _check_time_constants(self.num_tc, "numerator time constant")
        den = _check_time_constants(self.den_tc, "denominator time constant")
        delay = float(self.delay)
        if not (math.isfinite(delay) and delay >= 0):
            raise InvalidParameter(f"delay must be finite and >= 0, got {self.delay!r}")
        if n_i + len(den) <= len(num):
            raise InvalidParameter("plant must be strictly proper")
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "integrators", n_i)
        object.__setattr__(self, "num_tc", num)
        object.__setattr__(self, "den_tc", den)
        object.__setattr__(self, "delay", delay)

    @property
    def relative_degree(self) -> int:
        return self.integrators + len(self.den_tc) - len(self.num_tc)

    @property
    def time_sum(self) -> float:
        """Sum of all time parameters, a rough inverse bandwidth."""
        return sum(self.num_tc) + sum(self.den_tc) + self.delay

    def to_dict(self) -> dict:
        return {
            "gain": self.gain,
            "integrators": self.integrators,
            "num_tc": list(self.num_tc),
            "den_tc": list(self.den_tc),
            "delay": self.delay,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimeDelayLTI":
        return cls(d["gain"], d.get("integrators", 0), tuple(d.get("num_tc", ())),
                   tuple(d.get("den_tc", ())), d.get("delay", 0.0))


@dataclass(frozen=True)
class SoiptdParams:
    """Second-order-plus-integrator-plus-delay parameters.

    ``G(s) = K T_d exp(-tau s) / (s (T_p s + 1) (T_d s + 1))``
    """

    K: float
    T_p: float
    T_d: float
    tau: float = 0.0

    def __post_init__(self):
        for name in ("K", "T_p", "T_d"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise InvalidParameter(f"{name} must be finite and positive, got {v!r}")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise InvalidParameter(f"tau must be finite and >= 0, got {self.tau!r}")


def soiptd(params: SoiptdParams | None = None, *, K=None, T_p=None, T_d=None, tau=0.0) -> TimeDelayLTI:
    """Build the SOIPTD plant; accepts a `SoiptdParams` or keyword values."""
    if params is None:
        params = SoiptdParams(K, T_p, T_d, tau)
    return TimeDelayLTI(params.K * params.T_d, 1, (), (params.T_p, params.T_d), params.tau)


def as_soiptd(plant: TimeDelayLTI) -> SoiptdParams:
    """Inverse of `soiptd`; the first denominator constant is taken as T_p."""
    if plant.integrators != 1 or plant.num_tc or len(plant.den_tc) != 2:
        raise InvalidParameter("plant does not have SOIPTD structure")
    T_p, T_d = plant.den_tc
    return SoiptdParams(plant.gain / T_d, T_p, T_d, plant.delay)


def _omega(omega):
    w = np.asarray(omega, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise InvalidFrequency("frequency must be positive")
    return w


def magnitude(plant: TimeDelayLTI, omega):
    """|W(j omega)| from the product form."""
    w = _omega(omega)
    mag = abs(plant.gain) / w ** plant.integrators
    for T in plant.num_tc:
        mag = mag * np.sqrt((T * w) ** 2 + 1.0)
    for T in plant.den_tc:
        mag = mag / np.sqrt((T * w) ** 2 + 1.0)
    return mag


def phase(plant: TimeDelayLTI, omega):
    """Unwrapped arg W(j omega) in radians; may lie well below -pi."""
    w = _omega(omega)
    ph = -plant.integrators * (np.pi / 2) - plant.delay * w
    for T in plant.num_tc:
        ph = ph + np.arctan(T * w)
    for T in plant.den_tc:
        ph = ph - np.arctan(T * w)
    if plant.gain < 0:
        ph = ph - np.pi
    return ph


def freq_response(plant: TimeDelayLTI, omega):
    """Complex frequency response W(j omega); `omega` may be an array."""
    out = magnitude(plant, omega) * np.exp(1j * phase(plant, omega))
    return out[()] if np.ndim(out) == 0 else out


def gain_scale(plant: TimeDelayLTI, alpha: float) -> TimeDelayLTI:
    if alpha == 0 or not math.isfinite(alpha):
        raise InvalidParameter("gain scale must be finite and nonzero")
    return TimeDelayLTI(plant.gain * alpha, plant.integrators, plant.num_tc, plant.den_tc, plant.delay)


def time_scale(plant: TimeDelayLTI, gamma: float) -> TimeDelayLTI:
    """Multiply every time constant and the delay by `gamma`."""
    if not (math.isfinite(gamma) and gamma > 0):
        raise InvalidParameter(f"time scale must be positive, got {gamma!r}")
    return TimeDelayLTI(
        plant.gain,
        plant.integrators,
        tuple(gamma * T for T in plant.num_tc),
        tuple(gamma * T for T in plant.den_tc),
        gamma * plant.delay,
    )


def attitude_plant(J_x, B_x, k_M, T_p, tau_p, tau_imu=0.0) -> TimeDelayLTI:
    """Near-hover roll/pitch channel.

    States (angle, rate, moment) with rate' = (M - B_x rate)/J_x and a
    first-order propulsion lag on M.  The transfer function is
    ``(k_M / B_x) / (s (T_p s + 1) (T_d s + 1))`` with ``T_d = J_x / B_x``, i.e.
    SOIPTD gain ``K = k_M / J_x``.
    """
    if B_x == 0:
        raise DegenerateDrag("B_x = 0 gives an infinite aerodynamic time constant")
    for name, v in (("J_x", J_x), ("B_x", B_x), ("k_M", k_M), ("T_p", T_p), ("tau_p", tau_p)):
        if not v > 0:
            raise InvalidParameter(f"{name} must be positive, got {v!r}")
    if tau_imu < 0:
        raise InvalidParameter("tau_imu must be >= 0")
    return soiptd(SoiptdParams(k_M / J_x, T_p, J_x / B_x, tau_p + tau_imu))


def altitude_plant(m, k_F, mu_n, D_z, T_p, tau_p, tau_pos=0.0) -> TimeDelayLTI:
    """Near-hover altitude channel with linear vertical drag ``D_z``.

    SOIPTD with ``T_d = 1 / D_z`` and ``K = mu_n k_F / m``.
    """
    if D_z == 0:
        raise DegenerateDrag("D_z = 0 gives an infinite aerodynamic time constant")
    for name, v in (("m", m), ("k_F", k_F), ("mu_n", mu_n), ("D_z", D_z), ("T_p", T_p), ("tau_p", tau_p)):
        if not v > 0:
            raise InvalidParameter(f"{name} must be positive, got {v!r}")
    if tau_pos < 0:
        raise InvalidParameter("tau_pos must be >= 0")
    return soiptd(SoiptdParams(mu_n * k_F / m, T_p, 1.0 / D_z, tau_p + tau_pos))


def state_space(plant: TimeDelayLTI):
    """Controllable-canonical realization (A, B, C) of the delay-free part.

    The delay is not part of the realization; the caller delays the input.
    """
    num = np.array([plant.gain])
    for T in plant.num_tc:
        num = np.polymul(num, [T, 1.0])
    den = np.array([1.0])
    for T in plant.den_tc:
        den = np.polymul(den, [T, 1.0])
    den = np.polymul(den, np.r_[1.0, np.zeros(plant.integrators)])
    num = num / den[0]
    den = den / den[0]
    n = len(den) - 1
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den[:0:-1]
    B = np.zeros(n)
    B[-1] = 1.0
    C = np.zeros(n)
    C[: len(num)] = num[::-1]
    return A, B, C
