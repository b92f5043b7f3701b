"""Exact MRFT limit cycles from the periodic output of the plant.

For a symmetric square-wave relay output of amplitude h and frequency omega
(``u = +h`` on the first half period) the plant output in periodic steady
state is the odd-harmonic series

    y(t) = 4h/pi * sum_k A((2k-1) w) / (2k-1) * sin((2k-1) w t + phi((2k-1) w))

with ``A``/``phi`` the plant magnitude and phase.  With ``a_y = max |y|`` and
``y_s = y(pi/w)`` the value at the ``+h -> -h`` switch, the MRFT switching
condition is ``y_s = beta a_y`` and the locus value is
``Phi(w) = -sqrt(a_y**2 - y_s**2) + j y_s``.

Everything is computed at ``h = 1`` and rescaled, since ``y`` is linear in h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import InvalidFrequency, NoLimitCycle, SeriesNotConverged
from .mrft import LimitCycle, MrftConfig
from .plant import TimeDelayLTI, freq_response, magnitude, phase

__all__ = [
    "EPS_SERIES",
    "K_MAX",
    "N_SAMPLES",
    "PeriodicSolution",
    "harmonic_count",
    "periodic_output",
    "output_amplitude",
    "periodic_solution",
    "phi",
    "switching_function",
    "solve_limit_cycle",
    "solve_limit_cycles",
    "df_frequency",
    "df_predict",
]

EPS_SERIES = 1e-8
K_MAX = 100_000
N_SAMPLES = 2048
ROOT_RTOL = 1e-13
# bracket search around the describing-function estimate
SCAN_FACTOR = 4.0
SCAN_POINTS = 49
# fallback scan, relative to 1 / (sum of time parameters)
WIDE_SCAN = (1e-3, 1e3, 200)


@dataclass(frozen=True)
class PeriodicSolution:
    omega: float
    a_y: float
    y_switch: float
    phi: complex
    harmonics_used: int
    truncation_error_bound: float


def harmonic_count(plant: TimeDelayLTI, omega: float, eps: float = EPS_SERIES, kmax: int = K_MAX):
    """Smallest harmonic count whose analytic tail bound is below `eps`.

    The bound is relative to the fundamental, ``4/pi * A(omega)``.  For
    ``w >= w0`` the magnitude obeys ``A(w) <= B / w**r`` (r = relative degree),
    so the neglected tail is at most ``B / w**r * (2K-1)**-r / (2r)``.
    Returns ``(K, bound)``.
    """
    r = plant.relative_degree
    a1 = float(magnitude(plant, omega))
    base = abs(plant.gain)
    for T in plant.den_tc:
        base /= T
    for T in plant.num_tc:
        base *= T

    def bound(K):
        w0 = (2 * K + 1) * omega
        B = base
        for T in plant.num_tc:
            B *= math.sqrt(1.0 + 1.0 / (T * w0) ** 2)
        return B / omega ** r * (2 * K - 1) ** (-r) / (2 * r) / a1

    K = 1
    for _ in range(60):
        b = bound(K)
        if b < eps:
            return K, b
        # B only shrinks as K grows, so this estimate never overshoots the need by much
        need = (b * (2 * K - 1) ** r / eps) ** (1.0 / r)
        K_new = max(K + 1, int(math.ceil((need + 1) / 2)))
        if K_new > kmax:
            raise SeriesNotConverged(
                f"tail bound needs more than {kmax} harmonics at omega = {omega:.6g} rad/s"
            )
        K = K_new
    raise SeriesNotConverged("harmonic count iteration did not settle")


class _Series:
    """Harmonic coefficients of y(t) for h = 1 at one frequency."""

    __slots__ = ("omega", "m", "c", "bound", "_dense", "_peak")

    def __init__(self, plant, omega, eps=EPS_SERIES, kmax=K_MAX):
        omega = float(omega)
        if not (math.isfinite(omega) and omega > 0):
            raise InvalidFrequency(f"frequency must be positive, got {omega!r}")
        K, self.bound = harmonic_count(plant, omega, eps, kmax)
        self.omega = omega
        self.m = np.arange(1, 2 * K, 2, dtype=float)
        self.c = (4.0 / math.pi) * freq_response(plant, self.m * omega) / self.m
        self._dense = None
        self._peak = None

    @property
    def period(self):
        return 2 * math.pi / self.omega

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.imag(np.exp(1j * self.omega * np.outer(t, self.m)) @ self.c)

    def dense(self, n=N_SAMPLES):
        """y at ``t_n = n T / N`` via one inverse FFT (harmonics folded mod N)."""
        if self._dense is None:
            half = n // 2
            K = len(self.c)
            rows = -(-K // half)
            buf = np.zeros(rows * half, dtype=complex)
            buf[:K] = self.c
            spec = np.zeros(n, dtype=complex)
            spec[1::2] = buf.reshape(rows, half).sum(axis=0)
            self._dense = np.imag(np.fft.ifft(spec) * n)
        return self._dense

    @property
    def y_switch(self):
        # exp(j m pi) = -1 for odd m
        return -float(np.imag(self.c.sum()))

    def peak(self):
        """``(a_y, t_peak)``: dense argmax of y refined by bounded scalar search."""
        if self._peak is None:
            y = self.dense()
            n = len(y)
            i = int(np.argmax(y))
            step = self.period / n
            t_i = i * step
            res = minimize_scalar(
                lambda t: -self(t)[0],
                bounds=(t_i - step, t_i + step),
                method="bounded",
                options={"xatol": step * 1e-10},
            )
            if -res.fun > y[i]:
                self._peak = (float(-res.fun), float(res.x))
            else:
                self._peak = (float(y[i]), t_i)
        return self._peak

    def g(self, beta, refine=True):
        a = self.peak()[0] if refine else float(self.dense().max())
        return self.y_switch - beta * a


def periodic_output(plant: TimeDelayLTI, h: float, omega: float, t):
    """Steady periodic plant output y(t) under a square wave of amplitude h."""
    return h * _Series(plant, omega)(t)


def output_amplitude(plant: TimeDelayLTI, h: float, omega: float) -> float:
    return h * _Series(plant, omega).peak()[0]


def periodic_solution(plant: TimeDelayLTI, h: float, omega: float) -> PeriodicSolution:
    s = _Series(plant, omega)
    a = h * s.peak()[0]
    ys = h * s.y_switch
    assert a >= abs(ys), "amplitude below switching value"
    return PeriodicSolution(
        omega=float(omega),
        a_y=a,
        y_switch=ys,
        phi=complex(-math.sqrt(max(a * a - ys * ys, 0.0)), ys),
        harmonics_used=len(s.c),
        truncation_error_bound=s.bound,
    )


def phi(plant: TimeDelayLTI, h: float, omega: float) -> complex:
    """Locus value ``-sqrt(a_y^2 - y_s^2) + j y_s``."""
    return periodic_solution(plant, h, omega).phi


def switching_function(plant: TimeDelayLTI, beta: float, omega: float) -> float:
    """``g(w) = y(pi/w) - beta a_y(w)`` at h = 1; positive below the cycle frequency."""
    return _Series(plant, omega).g(beta)


def df_frequency(plant: TimeDelayLTI, beta: float, n_scan: int = 400):
    """Lowest omega with ``arg W(j w) = -pi + arcsin(beta)``, or None."""
    target = -math.pi + math.asin(beta)
    ref = 1.0 / max(plant.time_sum, 1e-12)
    w = np.geomspace(1e-6 * ref, 1e6 * ref, n_scan)
    d = phase(plant, w) - target
    cross = np.flatnonzero((d[:-1] > 0) & (d[1:] <= 0))
    if len(cross) == 0:
        return None
    i = cross[0]
    f = lambda x: float(phase(plant, x)) - target
    return brentq(f, w[i], w[i + 1], xtol=1e-15 * w[i], rtol=ROOT_RTOL)


def df_predict(plant: TimeDelayLTI, cfg: MrftConfig) -> LimitCycle:
    """Describing-function (first-harmonic) estimate of the MRFT cycle."""
    w = df_frequency(plant, cfg.beta)
    if w is None:
        raise NoLimitCycle(f"plant phase never reaches -pi + asin({cfg.beta})")
    amp = 4.0 * cfg.h / math.pi * float(magnitude(plant, w))
    return LimitCycle(w / (2 * math.pi), amp, method="describing-function", omega=w)


def _roots(plant, beta, grid):
    series = []
    gd = np.empty(len(grid))
    for i, w in enumerate(grid):
        s = _Series(plant, w)
        series.append(s)
        gd[i] = s.g(beta, refine=False)
    roots = []
    for i in np.flatnonzero(np.sign(gd[:-1]) != np.sign(gd[1:])):
        lo, hi = grid[i], grid[i + 1]
        g_lo, g_hi = series[i].g(beta), series[i + 1].g(beta)
        if g_lo == 0:
            w = lo
        elif g_hi == 0:
            w = hi
        elif np.sign(g_lo) != np.sign(g_hi):
            w = brentq(lambda x: _Series(plant, x).g(beta), lo, hi, xtol=1e-15 * lo, rtol=ROOT_RTOL)
        else:
            continue
        roots.append((w, hi / lo))
    return roots


def solve_limit_cycles(plant: TimeDelayLTI, cfg: MrftConfig) -> list[LimitCycle]:
    """All solutions of the switching condition, the principal one first.

    The principal solution is the one closest (in log frequency) to the
    describing-function estimate.  Brackets are sought around that estimate
    first and over a wide fixed range only if none is found there.
    """
    w_df = df_frequency(plant, cfg.beta)
    roots = []
    if w_df is not None:
        grid = np.geomspace(w_df / SCAN_FACTOR, w_df * SCAN_FACTOR, SCAN_POINTS)
        roots = _roots(plant, cfg.beta, grid)
    if not roots:
        ref = 1.0 / plant.time_sum
        lo, hi, n = WIDE_SCAN
        try:
            roots = _roots(plant, cfg.beta, np.geomspace(lo * ref, hi * ref, n))
        except SeriesNotConverged:
            roots = []
    if not roots:
        raise NoLimitCycle("switching condition has no sign change in the scan range")
    anchor = w_df if w_df is not None else roots[0][0]
    roots.sort(key=lambda r: abs(math.log(r[0] / anchor)))
    out = []
    for w, _ in roots:
        s = _Series(plant, w)
        a, _t = s.peak()
        out.append(
            LimitCycle(
                frequency_hz=w / (2 * math.pi),
                amplitude=cfg.h * a,
                method="lprs",
                residual=abs(cfg.h * s.g(cfg.beta)),
                omega=w,
            )
        )
    return out


def solve_limit_cycle(plant: TimeDelayLTI, cfg: MrftConfig) -> LimitCycle:
    """Exact MRFT limit cycle (principal solution)."""
    return solve_limit_cycles(plant, cfg)[0]
