"""First-order-plus-delay fit of a propulsion step response.

The thrust (or moment) record ``f(t)`` after a step command at ``t_step`` is
modelled as

    f(t) = f0 + k (1 - exp(-(t - t_step - tau_p) / T_p))   for t >= t_step + tau_p
    f(t) = f0                                               otherwise.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .errors import FormatError, NoStepDetected, SamplingError

__all__ = ["StepFit", "fit_step_response", "read_step_log", "write_step_log"]

# settled step must exceed this many baseline noise deviations
DETECT_RATIO = 5.0


@dataclass(frozen=True)
class StepFit:
    k: float
    T_p: float
    tau_p: float
    offset: float
    rms: float

    def model(self, t, t_step: float = 0.0):
        return _response(np.asarray(t, dtype=float) - t_step, self.tau_p, self.T_p) * self.k + self.offset


def _response(s, tau, T):
    x = np.clip(s - tau, 0.0, None)
    return -np.expm1(-x / T)


def _linear_fit(phi, f):
    """Closed-form offset and gain for a fixed shape; returns (sse, f0, k)."""
    A = np.column_stack([np.ones_like(phi), phi])
    coef, *_ = np.linalg.lstsq(A, f, rcond=None)
    r = f - A @ coef
    return float(r @ r), float(coef[0]), float(coef[1])


def fit_step_response(t, f, t_step: float = 0.0) -> StepFit:
    """Least-squares FOPDT fit.

    ``tau_p`` is searched over the sample instants after the step, ``T_p`` by
    a bounded scalar minimisation for each, with offset and gain in closed
    form; the best grid point is then polished jointly.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    if t.ndim != 1 or t.shape != f.shape or len(t) < 8:
        raise FormatError("step log needs matching t and f columns with at least 8 samples")
    if np.any(np.diff(t) <= 0):
        raise SamplingError("time stamps must be strictly increasing")
    s = t - t_step
    post = s >= 0
    if post.sum() < 6:
        raise NoStepDetected("too few samples after the step")

    base = f[~post]
    tail = f[post][-max(3, int(post.sum()) // 5):]
    ref = base if len(base) >= 3 else tail
    step = abs(tail.mean() - (base.mean() if len(base) else f[post][0]))
    noise = float(np.std(ref))
    if not step > max(DETECT_RATIO * noise, 1e-12 * max(1.0, float(np.abs(f).max()))):
        raise NoStepDetected(f"step of {step:.3g} is not distinguishable from noise {noise:.3g}")

    span = float(s[-1])
    dt = float(np.median(np.diff(t)))
    t_lo, t_hi = math.log(dt / 10), math.log(span)
    taus = s[post][s[post] <= 0.5 * span]

    def profile(tau):
        res = minimize_scalar(
            lambda lt: _linear_fit(_response(s, tau, math.exp(lt)), f)[0],
            bounds=(t_lo, t_hi),
            method="bounded",
            options={"xatol": 1e-6},
        )
        return res.fun, res.x

    best = min(((*profile(tau), tau) for tau in taus), key=lambda r: r[0])
    _, lt, tau = best

    def residual(p):
        phi = _response(s, p[0], math.exp(p[1]))
        return phi * p[3] + p[2] - f

    _, f0, k = _linear_fit(_response(s, tau, math.exp(lt)), f)
    sol = least_squares(residual, [tau, lt, f0, k], bounds=([0.0, t_lo, -np.inf, -np.inf], [span, t_hi, np.inf, np.inf]),
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    tau, lt, f0, k = sol.x
    rms = math.sqrt(float(np.mean(residual(sol.x) ** 2)))
    return StepFit(k=float(k), T_p=math.exp(lt), tau_p=float(tau), offset=float(f0), rms=rms)


def read_step_log(source):
    """Read a ``t,f`` CSV (``#`` comment lines allowed)."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, Path) or "\n" not in str(source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    rows = [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    reader = csv.reader(rows)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("empty step log") from None
    if "t" not in header or "f" not in header:
        raise FormatError(f"step log header must contain t and f, got {header}")
    it, jf = header.index("t"), header.index("f")
    try:
        data = np.array([[float(r[it]), float(r[jf])] for r in reader])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"bad step log row: {exc}") from None
    if len(data) == 0:
        raise FormatError("step log has no samples")
    return data[:, 0], data[:, 1]


def write_step_log(t, f, sink):
    buf = io.StringIO()
    buf.write("t,f\n")
    for a, b in zip(t, f):
        buf.write(f"{float(a)!r},{float(b)!r}\n")
    if hasattr(sink, "write"):
        sink.write(buf.getvalue())
    else:
        Path(sink).write_text(buf.getvalue(), encoding="utf-8")
