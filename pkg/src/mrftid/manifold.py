"""Unit frequency / unit gain manifolds for the SOIPTD family.

A manifold stores, on a log-spaced ``(T_p, T_d)`` grid, the delay ``tau`` that
makes ``SOIPTD(K=1, T_p, T_d, tau)`` oscillate at exactly 1 Hz under an MRFT
with a given beta (the UFM), and the oscillation amplitude at h = 1 (the UGM).
Cells that oscillate below 1 Hz even without delay are infeasible and hold NaN
(``null`` on disk).

A pure delay only shifts the periodic output in time, so at fixed frequency
the amplitude does not depend on ``tau`` and the switching condition becomes
``y0(T/2 - tau) = beta a_y`` for the delay-free output ``y0``.  Each cell is
therefore a one-dimensional root search over ``tau``.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import (
    CellSolveFailed,
    CorruptManifold,
    InvalidFrequency,
    InvalidParameter,
    OutOfGridRange,
    StaleManifold,
    UnsupportedVersion,
)
from .lprs import EPS_SERIES, K_MAX, N_SAMPLES, ROOT_RTOL, _Series, solve_limit_cycle
from .mrft import MrftConfig
from .plant import soiptd

__all__ = [
    "FORMAT_VERSION",
    "GridSpec",
    "Manifold",
    "ScaledManifold",
    "ManifoldSlice",
    "solve_cell",
    "generate_ufm",
    "scale_manifold",
    "slice_at_tp",
    "interpolate",
    "save_manifold",
    "load_manifold",
    "manifold_to_dict",
    "manifold_from_dict",
]

FORMAT_VERSION = "1.0"
SOLVER_VERSION = "lprs-fourier-1"


@dataclass(frozen=True)
class GridSpec:
    tp_range: tuple = (0.005, 0.5)
    td_range: tuple = (0.05, 20.0)
    n_tp: int = 60
    n_td: int = 120

    def axes(self):
        for lo, hi in (self.tp_range, self.td_range):
            if not (0 < lo < hi and math.isfinite(hi)):
                raise InvalidParameter(f"grid range must satisfy 0 < lo < hi, got {(lo, hi)}")
        if self.n_tp < 2 or self.n_td < 2:
            raise InvalidParameter("grid needs at least two points per axis")
        return (np.geomspace(*self.tp_range, self.n_tp), np.geomspace(*self.td_range, self.n_td))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Manifold:
    beta: float
    tp_axis: np.ndarray
    td_axis: np.ndarray
    tau: np.ndarray
    amp: np.ndarray
    freq_hz: float = 1.0
    gain: float = 1.0
    h_ref: float = 1.0
    model: str = "SOIPTD"
    generator: dict = field(default_factory=dict)
    failed_cells: tuple = ()

    def __post_init__(self):
        for name in ("tp_axis", "td_axis", "tau", "amp"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.tau.shape != (len(self.tp_axis), len(self.td_axis)) or self.amp.shape != self.tau.shape:
            raise InvalidParameter("table shape does not match the axes")
        for ax in (self.tp_axis, self.td_axis):
            if np.any(np.diff(ax) <= 0):
                raise InvalidParameter("manifold axes must be strictly increasing")

    @property
    def feasible(self):
        return np.isfinite(self.tau)

    @property
    def n_feasible(self) -> int:
        return int(self.feasible.sum())

    @cached_property
    def checksum(self) -> str:
        return _checksum(manifold_to_dict(self, with_checksum=False))

    def __eq__(self, other):
        if not isinstance(other, Manifold):
            return NotImplemented
        same = lambda a, b: a.shape == b.shape and np.array_equal(a, b, equal_nan=True)
        return (
            self.beta == other.beta
            and self.freq_hz == other.freq_hz
            and self.gain == other.gain
            and self.model == other.model
            and same(self.tp_axis, other.tp_axis)
            and same(self.td_axis, other.td_axis)
            and same(self.tau, other.tau)
            and same(self.amp, other.amp)
        )

    __hash__ = None


def solve_cell(beta: float, tp: float, td: float, freq_hz: float = 1.0, eps: float = EPS_SERIES):
    """Delay and amplitude of the unit-gain cell oscillating at `freq_hz`.

    Returns ``(tau, amp)``; ``tau`` is NaN when the delay-free plant already
    oscillates at or below `freq_hz`.  The smallest non-negative root is taken,
    which is the branch continuously connected to ``tau = 0``.
    """
    series = _Series(soiptd(K=1.0, T_p=tp, T_d=td, tau=0.0), 2 * math.pi * freq_hz, eps, K_MAX)
    a = series.peak()[0]
    y = series.dense(N_SAMPLES)
    n = len(y)
    half = n // 2
    T = series.period
    g = y[(half - np.arange(half + 1)) % n] - beta * a
    if not g[0] > 0:
        return math.nan, a
    below = np.flatnonzero(g < 0)
    if len(below) == 0:
        raise CellSolveFailed(f"switching condition has no root within half a period (tp={tp}, td={td})", (tp, td))
    j = int(below[0])
    lo, hi = (j - 1) * T / n, j * T / n
    f = lambda tau: series(T / 2 - tau)[0] - beta * a
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo, a
    if not (f_lo > 0 > f_hi):
        # refined values disagree with the dense ones: not a clean decreasing crossing
        raise CellSolveFailed(f"non-monotone switching condition near tau = {lo:.6g} (tp={tp}, td={td})", (tp, td))
    return brentq(f, lo, hi, xtol=1e-15, rtol=ROOT_RTOL), a


def _solve_row(args):
    beta, tp, td_axis, freq_hz = args
    taus, amps, failed = [], [], []
    for j, td in enumerate(td_axis):
        try:
            tau, amp = solve_cell(beta, tp, td, freq_hz)
        except CellSolveFailed:
            tau, amp = math.nan, math.nan
            failed.append(j)
        taus.append(tau)
        amps.append(amp if math.isfinite(tau) else math.nan)
    return taus, amps, failed


def generate_ufm(beta: float, grid: GridSpec | None = None, workers: int = 1, freq_hz: float = 1.0) -> Manifold:
    """Tabulate the unit frequency / unit gain manifold for one beta.

    Cells whose solve fails are stored as infeasible and listed in
    ``failed_cells``; generation continues.  Rows are independent, so
    ``workers > 1`` spreads them over processes with identical results.
    """
    MrftConfig(beta)  # validates beta
    grid = grid or GridSpec()
    tp_axis, td_axis = grid.axes()
    jobs = [(beta, float(tp), td_axis, freq_hz) for tp in tp_axis]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_solve_row, jobs))
    else:
        rows = [_solve_row(job) for job in jobs]
    tau = np.array([r[0] for r in rows])
    amp = np.array([r[1] for r in rows])
    failed = tuple((i, j) for i, r in enumerate(rows) for j in r[2])
    generator = {
        "solver": SOLVER_VERSION,
        "tolerances": {"eps_series": EPS_SERIES, "k_max": K_MAX, "n_samples": N_SAMPLES, "root_rtol": ROOT_RTOL},
        "grid": {"tp_range": list(grid.tp_range), "td_range": list(grid.td_range), "n_tp": grid.n_tp, "n_td": grid.n_td},
        "failed_cells": len(failed),
    }
    return Manifold(beta, tp_axis, td_axis, tau, amp, freq_hz=freq_hz, generator=generator, failed_cells=failed)


@dataclass(frozen=True, eq=False)
class ScaledManifold:
    """A manifold mapped to a measured frequency; times scale by ``gamma = 1/f``."""

    base: Manifold
    omega_hz: float
    gamma: float
    tp_axis: np.ndarray
    td_axis: np.ndarray
    tau: np.ndarray
    amp: np.ndarray

    @property
    def beta(self):
        return self.base.beta


def scale_manifold(man: Manifold, omega_hz: float) -> ScaledManifold:
    """Scale every time parameter by ``gamma = f_ref / omega_hz``.

    Amplitudes are multiplied by ``gamma`` (one integrator); note that this
    keeps the factored gain fixed, so a SOIPTD-convention gain K picks up an
    extra ``1/gamma`` -- see `identify_single_test`.
    """
    if not (math.isfinite(omega_hz) and omega_hz > 0):
        raise InvalidFrequency(f"measured frequency must be positive, got {omega_hz!r}")
    g = man.freq_hz / omega_hz
    return ScaledManifold(man, omega_hz, g, man.tp_axis * g, man.td_axis * g, man.tau * g, man.amp * g)


@dataclass(frozen=True, eq=False)
class ManifoldSlice:
    """Curve ``tau(T_d)`` (and amplitude) at fixed known ``T_p``."""

    beta: float
    tp: float
    gamma: float
    td: np.ndarray
    tau: np.ndarray
    amp: np.ndarray

    def at(self, td, table: str = "tau"):
        """Linear interpolation in log T_d; NaN outside the curve or in gaps.

        Scalar in, float out.
        """
        values = getattr(self, table)
        x = np.log(np.atleast_1d(np.asarray(td, dtype=float)))
        xs = np.log(self.td)
        out = np.full(x.shape, np.nan)
        inside = (x >= xs[0]) & (x <= xs[-1])
        j = np.clip(np.searchsorted(xs, x[inside], side="right") - 1, 0, len(xs) - 2)
        w = (x[inside] - xs[j]) / (xs[j + 1] - xs[j])
        lo, hi = values[j], values[j + 1]
        v = np.where(w == 0, lo, np.where(w == 1, hi, (1 - w) * lo + w * hi))
        out[inside] = v
        return float(out[0]) if np.ndim(td) == 0 else out


def _interp_rows(axis, table, value, name):
    x = math.log(value)
    xs = np.log(axis)
    # tolerate round-off at the ends of the axis
    if x < xs[0] - 1e-12 or x > xs[-1] + 1e-12:
        raise OutOfGridRange(
            f"{name} = {value:.6g} outside grid coverage [{axis[0]:.6g}, {axis[-1]:.6g}]",
            (float(axis[0]), float(axis[-1])),
        )
    x = min(max(x, xs[0]), xs[-1])
    i = min(max(int(np.searchsorted(xs, x, side="right")) - 1, 0), len(xs) - 2)
    w = (x - xs[i]) / (xs[i + 1] - xs[i])
    if w == 0:
        return table[i].copy()
    if w == 1:
        return table[i + 1].copy()
    return (1 - w) * table[i] + w * table[i + 1]


def slice_at_tp(sm: ScaledManifold | Manifold, tp_known: float) -> ManifoldSlice:
    """Cut the (scaled) manifold at the known propulsion time constant."""
    if isinstance(sm, Manifold):
        sm = scale_manifold(sm, sm.freq_hz)
    tau = _interp_rows(sm.tp_axis, sm.tau, tp_known, "T_p")
    amp = _interp_rows(sm.tp_axis, sm.amp, tp_known, "T_p")
    return ManifoldSlice(sm.beta, float(tp_known), sm.gamma, sm.td_axis.copy(), tau, amp)


def interpolate(man: Manifold | ScaledManifold, tp: float, td: float, table: str = "tau") -> float:
    """Bilinear value in (log T_p, log T_d); NaN if a corner is infeasible."""
    row = _interp_rows(man.tp_axis, getattr(man, table), tp, "T_p")
    x, xs = math.log(td), np.log(man.td_axis)
    if x < xs[0] - 1e-12 or x > xs[-1] + 1e-12:
        raise OutOfGridRange(f"T_d = {td:.6g} outside grid coverage", (float(man.td_axis[0]), float(man.td_axis[-1])))
    return float(np.interp(min(max(x, xs[0]), xs[-1]), xs, row))


# --- persistence -------------------------------------------------------------

_CHECKED_FIELDS = ("format_version", "model", "beta", "freq_hz", "gain", "h_ref", "tp_axis", "td_axis", "tau", "amp")


def _table(a):
    return [[None if not math.isfinite(v) else float(v) for v in row] for row in a.tolist()]


def _checksum(doc: dict) -> str:
    payload = json.dumps({k: doc[k] for k in _CHECKED_FIELDS}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def manifold_to_dict(man: Manifold, with_checksum: bool = True) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "model": man.model,
        "beta": float(man.beta),
        "freq_hz": float(man.freq_hz),
        "gain": float(man.gain),
        "h_ref": float(man.h_ref),
        "tp_axis": [float(v) for v in man.tp_axis],
        "td_axis": [float(v) for v in man.td_axis],
        "tau": _table(man.tau),
        "amp": _table(man.amp),
        "generator": dict(man.generator),
    }
    if with_checksum:
        doc["checksum"] = _checksum(doc)
    return doc


def manifold_from_dict(doc: dict) -> Manifold:
    if doc.get("format_version") != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported manifold format {doc.get('format_version')!r}")
    try:
        if doc.get("checksum") != _checksum(doc):
            raise CorruptManifold("checksum mismatch")
        arr = lambda rows: np.array([[math.nan if v is None else v for v in row] for row in rows], dtype=float)
        return Manifold(
            beta=float(doc["beta"]),
            tp_axis=np.array(doc["tp_axis"], dtype=float),
            td_axis=np.array(doc["td_axis"], dtype=float),
            tau=arr(doc["tau"]),
            amp=arr(doc["amp"]),
            freq_hz=float(doc["freq_hz"]),
            gain=float(doc["gain"]),
            h_ref=float(doc.get("h_ref", 1.0)),
            model=doc["model"],
            generator=dict(doc.get("generator", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifold(f"malformed manifold document: {exc}") from None


def save_manifold(man: Manifold, sink) -> None:
    """Write the JSON form; floats are written with full round-trip precision."""
    text = json.dumps(manifold_to_dict(man), indent=1, sort_keys=True)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text, encoding="utf-8")


def spot_check(man: Manifold, cells, rtol: float = 5e-3):
    """Re-solve the given ``(i, j)`` cells; returns the worst relative frequency error."""
    worst = 0.0
    for i, j in cells:
        plant = soiptd(K=man.gain, T_p=float(man.tp_axis[i]), T_d=float(man.td_axis[j]), tau=float(man.tau[i, j]))
        f = solve_limit_cycle(plant, MrftConfig(man.beta)).frequency_hz
        err = abs(f - man.freq_hz) / man.freq_hz
        worst = max(worst, err)
        if err > rtol:
            raise StaleManifold(f"cell {(i, j)} re-solves to {f:.6g} Hz, expected {man.freq_hz:g} Hz")
    return worst


def load_manifold(source, n_spot: int = 8, seed: int | None = 0, cells=None) -> Manifold:
    """Read, verify checksum, and spot-check `n_spot` random feasible cells.

    `cells` overrides the random selection with explicit ``(i, j)`` indices.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptManifold(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CorruptManifold("manifold document must be a JSON object")
    man = manifold_from_dict(doc)
    if cells is None and n_spot > 0:
        feas = np.argwhere(man.feasible)
        if len(feas):
            rng = np.random.default_rng(seed)
            pick = rng.choice(len(feas), size=min(n_spot, len(feas)), replace=False)
            cells = [tuple(int(v) for v in feas[k]) for k in pick]
    if cells:
        spot_check(man, cells)
    return man
