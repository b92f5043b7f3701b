"""Modified relay feedback test: relay law, closed-loop simulation, cycle detection.

The relay runs in closed loop with zero reference, ``e = -y``.  The plant is
integrated with fixed-step classical RK4; the relay is evaluated once per
sample, but its switch instant is located inside the step by linear
interpolation of the error and the delayed command is applied at exactly that
instant plus the plant delay.  This keeps the detected frequency free of the
O(dt) bias a sample-and-hold relay would introduce.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    Diverged,
    FormatError,
    InvalidParameter,
    NoOscillation,
    NotConverged,
    SamplingError,
)
from .plant import TimeDelayLTI, state_space

__all__ = [
    "MrftConfig",
    "MrftState",
    "LimitCycle",
    "SignalLog",
    "mrft_update",
    "simulate_mrft",
    "detect_limit_cycle",
    "default_dt",
    "ingest_log",
    "write_log",
    "N_MIN_SWITCHES",
    "M_PERIODS",
    "EPS_CONV",
]

N_MIN_SWITCHES = 12
M_PERIODS = 5
EPS_CONV = 5e-3
TRANSIENT_PERIODS = 6
# samples predicted per vectorised simulation chunk
CHUNK = 64


@dataclass(frozen=True)
class MrftConfig:
    beta: float
    h: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and -1 < self.beta < 1):
            raise InvalidParameter(f"beta must lie in (-1, 1), got {self.beta!r}")
        if not (math.isfinite(self.h) and self.h > 0):
            raise InvalidParameter(f"relay amplitude h must be positive, got {self.h!r}")


@dataclass(frozen=True)
class MrftState:
    """Relay memory.

    ``e_max``/``e_min`` are the extrema of the error since the last switch,
    clipped at zero (trackers restart from 0 at every switch).  Before the
    first switch (``primed`` false) the relay is an ideal zero-crossing relay.
    """

    output: float = 1.0
    e_max: float = 0.0
    e_min: float = 0.0
    primed: bool = False

    @classmethod
    def initial(cls, cfg: MrftConfig) -> "MrftState":
        return cls(output=cfg.h)


@dataclass(frozen=True)
class LimitCycle:
    """Steady oscillation: frequency in Hz, error-signal amplitude."""

    frequency_hz: float
    amplitude: float
    method: str = ""
    period_spread: float | None = None
    n_cycles: int | None = None
    residual: float | None = None
    omega: float | None = None

    @property
    def omega_rad(self) -> float:
        return 2 * math.pi * self.frequency_hz


def switch_threshold(state: MrftState, cfg: MrftConfig) -> float:
    """Error level at which the relay leaves its current output."""
    if not state.primed:
        return 0.0
    if state.output > 0:
        return -cfg.beta * state.e_max
    return -cfg.beta * state.e_min


def _relay(out, e_max, e_min, primed, beta, h, e):
    """Relay law on plain floats; returns the new ``(out, e_max, e_min, primed)``."""
    if out > 0:
        e_max = max(e_max, e)
        if primed:
            thr = -beta * e_max
            # a zero threshold (beta = 0) behaves as an ideal relay: hold at e = 0
            fire = e_max > 0 and (e <= thr if thr != 0 else e < 0)
        else:
            fire = e < 0
        if fire:
            return -h, 0.0, min(0.0, e), True
        return out, e_max, e_min, primed
    e_min = min(e_min, e)
    if primed:
        thr = -beta * e_min
        fire = e_min < 0 and (e >= thr if thr != 0 else e > 0)
    else:
        fire = e > 0
    if fire:
        return h, max(0.0, e), 0.0, True
    return out, e_max, e_min, primed


def mrft_update(state: MrftState, cfg: MrftConfig, e: float):
    """One relay evaluation; returns ``(u, new_state)``.

    With ``b1 = -beta e_min`` and ``b2 = beta e_max`` the relay goes to ``+h``
    once ``e >= b1`` and to ``-h`` once ``e <= -b2``, each test armed only after
    the error has crossed zero since the previous switch.  For ``beta < 0``
    this arming is what keeps the leading switch from firing twice.
    """
    new = _relay(state.output, state.e_max, state.e_min, state.primed, cfg.beta, cfg.h, e)
    return new[0], MrftState(*new)


@dataclass(frozen=True)
class SignalLog:
    t: np.ndarray
    e: np.ndarray
    u: np.ndarray
    y: np.ndarray | None = None
    dt: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("t", "e", "u", "y"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.t) == len(self.e) == len(self.u)) or (self.y is not None and len(self.y) != len(self.t)):
            raise FormatError("signal columns differ in length")
        if not self.dt and len(self.t) > 1:
            object.__setattr__(self, "dt", float(self.t[1] - self.t[0]))

    def __len__(self):
        return len(self.t)


def default_dt(plant: TimeDelayLTI) -> float:
    scales = [T for T in plant.num_tc + plant.den_tc] + ([plant.delay] if plant.delay > 0 else [])
    if not scales:
        return 1e-3
    return max(min(scales) / 50.0, 1e-5)


def _rk4_matrices(A, B, h):
    """One RK4 step for x' = A x + B u with u constant, as x+ = P x + Q u."""
    n = A.shape[0]
    hA = h * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    P = np.eye(n) + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    Q = h * (np.eye(n) + hA / 2 + hA2 / 6 + hA3 / 24) @ B
    return P, Q


def simulate_mrft(
    plant: TimeDelayLTI,
    cfg: MrftConfig,
    duration: float,
    dt: float | None = None,
    state: MrftState | None = None,
    y_bound: float = 1e6,
) -> SignalLog:
    """Simulate the MRFT loop from rest and return the sampled log."""
    if dt is None:
        dt = default_dt(plant)
    if not (dt > 0 and math.isfinite(dt)):
        raise InvalidParameter("dt must be positive")
    if not (duration > 0 and math.isfinite(duration)):
        raise InvalidParameter("duration must be positive")
    A, B, C = state_space(plant)
    P, Q = _rk4_matrices(A, B, dt)
    tau = plant.delay
    n = int(round(duration / dt)) + 1
    if state is None:
        state = MrftState.initial(cfg)

    # Between command changes the sampled output is affine in the state:
    # y[k + j] = CP[j] x[k] + CS[j] u, so it is predicted a chunk at a time and
    # only the scalar relay runs per sample.
    P_pow = [np.eye(A.shape[0])]
    S_pow = [np.zeros(A.shape[0])]
    for _ in range(CHUNK):
        S_pow.append(P @ S_pow[-1] + Q)
        P_pow.append(P @ P_pow[-1])
    P_pow, S_pow = np.array(P_pow), np.array(S_pow)
    CP, CS = C @ P_pow, S_pow @ C

    def advance(x, u, span):
        Pb, Qb = _rk4_matrices(A, B, span)
        return Pb @ x + Qb * u

    ts = np.arange(n) * dt
    es = np.empty(n)
    us = np.empty(n)
    ys = np.empty(n)
    beta, h = cfg.beta, cfg.h
    out, e_max, e_min, primed = state.output, state.e_max, state.e_min, state.primed
    # delayed command changes: (time it reaches the plant, value)
    pending = deque([(tau, out)])
    u_plant = 0.0
    e_prev = 0.0
    x = np.zeros(A.shape[0])
    k = 0
    while k < n:
        # samples up to the next command change see a constant input
        span = CHUNK if not pending else int(math.floor((pending[0][0] - k * dt) / dt)) + 1
        J = max(1, min(CHUNK, n - k, span))
        yc = CP[:J] @ x + CS[:J] * u_plant
        if not np.all(np.abs(yc) < y_bound):
            bad = int(np.argmax(~(np.abs(yc) < y_bound)))
            raise Diverged(f"|y| exceeded {y_bound:g} at t = {(k + bad) * dt:.6g} s")
        j = 0
        while j < J:
            e = -float(yc[j])
            new = _relay(out, e_max, e_min, primed, beta, h, e)
            if new[0] != out:
                # threshold crossed inside the last step: interpolate the instant
                if primed:
                    thr = -beta * (max(e_max, e) if out > 0 else min(e_min, e))
                else:
                    thr = 0.0
                t = (k + j) * dt
                if k + j > 0 and e != e_prev:
                    frac = min(max((thr - e_prev) / (e - e_prev), 0.0), 1.0)
                    t_sw = t - dt + frac * dt
                else:
                    t_sw = t
                pending.append((t_sw + tau, new[0]))
                if len(pending) == 1:
                    J = max(j + 1, min(J, int(math.floor((t_sw + tau - k * dt) / dt)) + 1))
            out, e_max, e_min, primed = new
            us[k + j] = out
            e_prev = e
            j += 1
        ys[k:k + J] = yc[:J]
        es[k:k + J] = -yc[:J]

        # state at the last sample of the chunk, then across its final step
        last = k + J - 1
        x = P_pow[J - 1] @ x + S_pow[J - 1] * u_plant
        t, t_end = last * dt, (last + 1) * dt
        tc = t
        while pending and pending[0][0] < t_end:
            tb, ub = pending.popleft()
            if tb > tc:
                x = advance(x, u_plant, tb - tc)
                tc = tb
            u_plant = ub
        x = P @ x + Q * u_plant if tc == t else advance(x, u_plant, t_end - tc)
        k = last + 1
    return SignalLog(ts, es, us, ys, dt, meta={"beta": cfg.beta, "h": cfg.h})


def _peak(values, i):
    """Parabolic refinement of a sampled extremum at index i."""
    if 0 < i < len(values) - 1:
        a, b, c = values[i - 1], values[i], values[i + 1]
        den = a - 2 * b + c
        if den != 0:
            return b - (a - c) ** 2 / (8 * den)
    return values[i]


def _switch_times(log: SignalLog, cfg: MrftConfig | None):
    t, e, u = log.t, log.e, log.u
    idx = np.flatnonzero(np.diff(np.sign(u)) != 0) + 1
    times = t[idx].astype(float)
    if cfg is None or len(idx) < 2:
        return idx, times
    dt = log.dt
    for j in range(1, len(idx)):
        k = idx[j]
        lobe = e[idx[j - 1]:k + 1]
        if u[k] < 0:
            thr = -cfg.beta * max(lobe.max(), 0.0)
        else:
            thr = -cfg.beta * min(lobe.min(), 0.0)
        de = e[k] - e[k - 1]
        if de != 0:
            frac = min(max((thr - e[k - 1]) / de, 0.0), 1.0)
            times[j] = t[k - 1] + frac * dt
    return idx, times


def detect_limit_cycle(
    log: SignalLog,
    cfg: MrftConfig | None = None,
    m_periods: int = M_PERIODS,
    eps_conv: float = EPS_CONV,
    n_min: int = N_MIN_SWITCHES,
) -> LimitCycle:
    """Frequency and amplitude of the steady oscillation in a relay log.

    Uses the last `m_periods` full periods after the transient (first half of
    the log, or the first 6 periods, whichever is longer).  Periods are
    measured between consecutive rising switches of ``u``.
    """
    if cfg is None and "beta" in log.meta:
        cfg = MrftConfig(log.meta["beta"], log.meta.get("h", 1.0))
    idx, times = _switch_times(log, cfg)
    if len(idx) == 0:
        raise NoOscillation("relay output never switched")
    if len(idx) < n_min:
        raise NotConverged(f"only {len(idx)} switches, need {n_min}")
    t_skip = max(log.t[0] + 0.5 * (log.t[-1] - log.t[0]), times[min(2 * TRANSIENT_PERIODS, len(times) - 1)])
    rising = np.flatnonzero((log.u[idx] > 0) & (times >= t_skip))
    if len(rising) < m_periods + 1:
        raise NotConverged(f"only {max(len(rising) - 1, 0)} steady periods after the transient, need {m_periods}")
    sel = rising[-(m_periods + 1):]
    periods = np.diff(times[sel])
    mean_period = periods.mean()
    spread = (periods.max() - periods.min()) / mean_period
    if not spread < eps_conv:
        raise NotConverged(f"relative period spread {spread:.3g} >= {eps_conv:g}")
    amps = []
    for a, b in zip(idx[sel[:-1]], idx[sel[1:]]):
        seg = log.e[a:b]
        amps.append((_peak(log.e, a + int(np.argmax(seg))) - _peak(log.e, a + int(np.argmin(seg)))) / 2)
    return LimitCycle(
        frequency_hz=float(1.0 / mean_period),
        amplitude=float(np.mean(amps)),
        method="simulation",
        period_spread=float(spread),
        n_cycles=m_periods,
    )


_REQUIRED = ("t", "e", "u")


def ingest_log(source, rtol: float = 1e-6) -> SignalLog:
    """Read a ``t,e,u[,y]`` CSV log from a path, text stream or string.

    Lines starting with ``#`` are comments.
    """
    if isinstance(source, (str, Path)) and Path(str(source)).exists():
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError("empty log")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    missing = [c for c in _REQUIRED if c not in header]
    if missing:
        raise FormatError(f"missing column(s): {', '.join(missing)}")
    try:
        rows = np.array([[float(v) for v in row] for row in reader], dtype=float)
    except ValueError as exc:
        raise FormatError(f"non-numeric value: {exc}") from None
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[1] != len(header):
        raise FormatError("malformed rows")
    col = {name: rows[:, i] for i, name in enumerate(header)}
    t = col["t"]
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise SamplingError("timestamps are not strictly increasing")
    dt = float(np.median(steps))
    if np.any(np.abs(steps - dt) > rtol * dt + 1e-12 * np.abs(t[1:])):
        raise SamplingError("sampling is not uniform")
    u = col["u"]
    levels = np.unique(u)
    if len(levels) > 2 or (len(levels) == 2 and not np.isclose(levels[0], -levels[1])):
        raise FormatError(f"relay command must take two values +-h, found {len(levels)} levels")
    meta = {"h": float(abs(levels[-1]))}
    return SignalLog(t, col["e"], u, col.get("y"), dt, meta=meta)


def write_log(log: SignalLog, sink, comment: str | None = None) -> None:
    """Write a log in the CSV format read by `ingest_log`."""
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    cols = ["t", "e", "u"] + (["y"] if log.y is not None else [])
    buf.write(",".join(cols) + "\n")
    data = np.column_stack([getattr(log, c) for c in cols])
    for row in data:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    if hasattr(sink, "write"):
        sink.write(buf.getvalue())
    else:
        Path(sink).write_text(buf.getvalue(), encoding="utf-8")
