"""Recover ``(T_d, tau)`` of a SOIPTD plant from MRFT measurements.

Two tests at different beta give two curves ``tau(T_d)`` on the manifolds
scaled to the measured frequencies; their crossing is the estimate.  A single
test uses the known gain and the measured amplitude instead of the second
frequency.  Both paths locate candidates on the tabulated grid, refine them
with exact cell solves, and verify them with a full limit-cycle solve.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    CellSolveFailed,
    InvalidParameter,
    MrftError,
    NoAmplitudeMatch,
    NoFeasibleEstimate,
    NoIntersection,
    UnreliableStatistics,
)
from .lprs import solve_limit_cycle
from .manifold import Manifold, scale_manifold, slice_at_tp, solve_cell
from .mrft import MrftConfig
from .plant import soiptd

__all__ = [
    "TestObservation",
    "PriorKnowledge",
    "Candidate",
    "IdentResult",
    "identify_two_freq",
    "identify_single_test",
    "monte_carlo",
]

# relative frequency mismatch above which a candidate is rejected
RESIDUAL_TOL = 1e-3
MAX_FAILURE_RATE = 0.5


@dataclass(frozen=True)
class TestObservation:
    """One MRFT experiment: beta, measured frequency in Hz, relay h, amplitude."""

    __test__ = False  # keep pytest from collecting this class

    beta: float
    omega_hz: float
    h: float = 1.0
    amplitude: float | None = None

    def __post_init__(self):
        MrftConfig(self.beta, self.h)
        if not (math.isfinite(self.omega_hz) and self.omega_hz > 0):
            raise InvalidParameter(f"measured frequency must be positive, got {self.omega_hz!r}")
        if self.amplitude is not None and not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise InvalidParameter(f"measured amplitude must be non-negative, got {self.amplitude!r}")


@dataclass(frozen=True)
class PriorKnowledge:
    """Known propulsion constant, admissible box for the unknowns, optional gain."""

    T_p: float
    td_bounds: tuple = (0.0, math.inf)
    tau_bounds: tuple = (0.0, math.inf)
    K: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.T_p) and self.T_p > 0):
            raise InvalidParameter(f"T_p must be positive, got {self.T_p!r}")
        for lo, hi in (self.td_bounds, self.tau_bounds):
            if not lo <= hi:
                raise InvalidParameter(f"empty bounds {(lo, hi)}")
        if self.K is not None and not (math.isfinite(self.K) and self.K > 0):
            raise InvalidParameter(f"K must be positive, got {self.K!r}")

    def admits(self, td, tau) -> bool:
        return self.td_bounds[0] <= td <= self.td_bounds[1] and self.tau_bounds[0] <= tau <= self.tau_bounds[1]


@dataclass(frozen=True)
class Candidate:
    T_d: float
    tau: float
    residuals: tuple
    admissible: bool = True

    @property
    def score(self) -> float:
        return math.sqrt(sum(r * r for r in self.residuals))


@dataclass
class IdentResult:
    T_d: float
    tau: float
    T_p: float
    method: str
    residuals: tuple = ()
    candidates: list = field(default_factory=list)
    stats: dict | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residuals"] = list(self.residuals)
        d["candidates"] = [
            {"T_d": c.T_d, "tau": c.tau, "residuals": list(c.residuals), "admissible": c.admissible}
            for c in self.candidates
        ]
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "IdentResult":
        cands = [Candidate(c["T_d"], c["tau"], tuple(c["residuals"]), c["admissible"]) for c in d.get("candidates", [])]
        return cls(d["T_d"], d["tau"], d["T_p"], d["method"], tuple(d.get("residuals", ())), cands,
                   d.get("stats"), d.get("provenance", {}))


def _manifold_for(manifolds, beta) -> Manifold:
    if isinstance(manifolds, Manifold):
        manifolds = [manifolds]
    if isinstance(manifolds, dict):
        manifolds = list(manifolds.values())
    for m in manifolds:
        if abs(m.beta - beta) <= 1e-12:
            return m
    raise InvalidParameter(f"no manifold for beta = {beta}")


def _exact_tau(obs: TestObservation, man: Manifold, tp: float, td: float) -> float:
    """Exact curve value: delay giving `obs.omega_hz` at ``(tp, td)``."""
    g = man.freq_hz / obs.omega_hz
    return solve_cell(man.beta, tp / g, td / g, man.freq_hz)[0] * g


def _freq_residual(obs: TestObservation, tp: float, td: float, tau: float) -> float:
    lc = solve_limit_cycle(soiptd(K=1.0, T_p=tp, T_d=td, tau=tau), MrftConfig(obs.beta))
    return (lc.frequency_hz - obs.omega_hz) / obs.omega_hz


def _sign_changes(x, d):
    ok = np.isfinite(d)
    out = []
    for k in range(len(x) - 1):
        if ok[k] and ok[k + 1] and (d[k] == 0 or np.sign(d[k]) != np.sign(d[k + 1])):
            if d[k] == 0:
                out.append((x[k], x[k], x[k]))
            elif d[k + 1] != 0:
                # linear interpolation of the difference in log T_d
                w = d[k] / (d[k] - d[k + 1])
                out.append((x[k], x[k + 1], math.exp((1 - w) * math.log(x[k]) + w * math.log(x[k + 1]))))
    return out


def _refine(f, nodes, a, b, x, reach=4):
    """Root of the exact function `f` near the tabulated bracket ``[a, b]``.

    Interpolation along T_p can move the true root a node or two away from
    the tabulated crossing, so exact values are taken on a few nodes either
    side and the sign change closest to the estimate `x` is polished.
    Falls back to `x` when no exact bracket exists.
    """
    i = int(np.searchsorted(nodes, a))
    j = int(np.searchsorted(nodes, b))
    pts = np.unique(np.r_[nodes[max(i - reach, 0): j + reach + 1], x])
    vals = []
    for t in pts:
        try:
            vals.append(f(t))
        except CellSolveFailed:
            vals.append(math.nan)
    vals = np.array(vals)
    best = None
    for k in range(len(pts) - 1):
        va, vb = vals[k], vals[k + 1]
        if not (np.isfinite(va) and np.isfinite(vb)):
            continue
        if va == 0 or np.sign(va) != np.sign(vb):
            dist = 0.0 if pts[k] <= x <= pts[k + 1] else min(abs(math.log(x / pts[k])), abs(math.log(x / pts[k + 1])))
            if best is None or dist < best[0]:
                best = (dist, k)
    if best is None:
        return x
    k = best[1]
    lo, hi = pts[k], pts[k + 1]
    if vals[k] == 0:
        return float(lo)
    if vals[k + 1] == 0:
        return float(hi)
    try:
        return brentq(f, lo, hi, xtol=1e-14 * lo, rtol=1e-13)
    except CellSolveFailed:
        return x


def _provenance(*mans):
    return {
        "manifolds": [{"beta": m.beta, "checksum": m.checksum, **m.generator} for m in mans],
        "residual_tol": RESIDUAL_TOL,
    }


def identify_two_freq(obs, prior: PriorKnowledge, manifolds, refine: bool = True) -> IdentResult:
    """Estimate ``(T_d, tau)`` from two tests at different beta.

    Raises `NoIntersection` when the curves do not cross (or no crossing
    reproduces both frequencies) and `NoFeasibleEstimate` when every crossing
    lies outside the admissible box.
    """
    o1, o2 = obs
    if o1.beta == o2.beta:
        raise InvalidParameter("the two tests must use different beta")
    m1, m2 = _manifold_for(manifolds, o1.beta), _manifold_for(manifolds, o2.beta)
    s1 = slice_at_tp(scale_manifold(m1, o1.omega_hz), prior.T_p)
    s2 = slice_at_tp(scale_manifold(m2, o2.omega_hz), prior.T_p)
    lo, hi = max(s1.td[0], s2.td[0]), min(s1.td[-1], s2.td[-1])
    td = np.unique(np.concatenate([s1.td, s2.td]))
    td = td[(td >= lo) & (td <= hi)]
    d = s1.at(td) - s2.at(td)
    brackets = _sign_changes(td, d)
    if not brackets:
        diag = {"overlap": (float(lo), float(hi))}
        if np.any(np.isfinite(d)):
            k = int(np.nanargmin(np.abs(d)))
            diag.update(closest_T_d=float(td[k]), closest_gap=float(d[k]))
        raise NoIntersection("manifold curves do not intersect at the known T_p", diag)

    tp = prior.T_p
    cands = []
    diff = lambda t: _exact_tau(o1, m1, tp, t) - _exact_tau(o2, m2, tp, t)
    for a, b, x in brackets:
        if refine:
            x = _refine(diff, td, a, b, x)
        t1, t2 = _exact_tau(o1, m1, tp, x), _exact_tau(o2, m2, tp, x)
        if not (np.isfinite(t1) and np.isfinite(t2)):
            continue
        tau = 0.5 * (t1 + t2)
        try:
            res = (_freq_residual(o1, tp, x, tau), _freq_residual(o2, tp, x, tau))
        except MrftError:
            continue
        cands.append(Candidate(float(x), float(tau), res, prior.admits(x, tau)))

    good = [c for c in cands if max(abs(r) for r in c.residuals) <= RESIDUAL_TOL]
    if not good:
        raise NoIntersection("no crossing reproduces both measured frequencies",
                             {"candidates": [(c.T_d, c.tau, c.residuals) for c in cands]})
    ok = [c for c in good if c.admissible]
    if not ok:
        raise NoFeasibleEstimate(
            f"all {len(good)} candidate(s) fall outside T_d in {prior.td_bounds}, tau in {prior.tau_bounds}"
        )
    best = min(ok, key=lambda c: c.score)
    return IdentResult(best.T_d, best.tau, tp, "two-frequency", best.residuals, cands,
                       provenance=_provenance(m1, m2))


def identify_single_test(obs: TestObservation, prior: PriorKnowledge, manifold, refine: bool = True) -> IdentResult:
    """Estimate ``(T_d, tau)`` from one test using the known gain and amplitude.

    With ``G = K T_d e^{-tau s} / (s (T_p s + 1)(T_d s + 1))`` the predicted
    amplitude is ``h K gamma**2 a_unit`` for a unit-manifold amplitude
    ``a_unit``: one ``gamma`` from the integrator, one from ``K T_d``.
    """
    if prior.K is None:
        raise InvalidParameter("single-test identification needs the gain K")
    if obs.amplitude is None:
        raise InvalidParameter("single-test identification needs the measured amplitude")
    man = _manifold_for(manifold, obs.beta)
    sm = scale_manifold(man, obs.omega_hz)
    sl = slice_at_tp(sm, prior.T_p)
    g = sm.gamma
    scale = obs.h * prior.K * g
    d = scale * sl.amp - obs.amplitude
    brackets = _sign_changes(sl.td, d)
    if not brackets:
        diag = {}
        if np.any(np.isfinite(d)):
            k = int(np.nanargmin(np.abs(d)))
            diag = {"closest_T_d": float(sl.td[k]), "closest_gap": float(d[k])}
        raise NoAmplitudeMatch("measured amplitude is not reached along the manifold slice", diag)

    tp = prior.T_p
    cands = []

    def amp_gap(t):
        return scale * g * solve_cell(man.beta, tp / g, t / g, man.freq_hz)[1] - obs.amplitude

    for a, b, x in brackets:
        if refine:
            x = _refine(amp_gap, sl.td, a, b, x)
        tau = _exact_tau(obs, man, tp, x)
        if not np.isfinite(tau):
            continue
        try:
            res = (_freq_residual(obs, tp, x, tau), amp_gap(x) / obs.amplitude)
        except MrftError:
            continue
        cands.append(Candidate(float(x), float(tau), res, prior.admits(x, tau)))

    good = [c for c in cands if max(abs(r) for r in c.residuals) <= RESIDUAL_TOL]
    if not good:
        raise NoAmplitudeMatch("no amplitude match reproduces the measured frequency")
    ok = [c for c in good if c.admissible]
    if not ok:
        raise NoFeasibleEstimate(
            f"all {len(good)} candidate(s) fall outside T_d in {prior.td_bounds}, tau in {prior.tau_bounds}"
        )
    best = min(ok, key=lambda c: c.score)
    return IdentResult(best.T_d, best.tau, tp, "single-test", best.residuals, cands,
                       provenance=_provenance(man))


def _perturb(obs, rng, sigma):
    amp = obs.amplitude
    w = obs.omega_hz * (1 + sigma * rng.standard_normal())
    if amp is not None:
        amp = amp * (1 + sigma * rng.standard_normal())
    return TestObservation(obs.beta, w, obs.h, amp)


def _draw(args):
    method, obs, prior, manifolds, sigma, seq = args
    rng = np.random.default_rng(seq)
    try:
        noisy = [_perturb(o, rng, sigma) for o in obs]
        if method == "two-frequency":
            r = identify_two_freq(noisy, prior, manifolds)
        else:
            r = identify_single_test(noisy[0], prior, manifolds)
        return r.T_d, r.tau, None
    except MrftError as exc:
        return math.nan, math.nan, type(exc).__name__


def _moments(x):
    if len(x) == 0:
        return {"mean": math.nan, "std": math.nan}
    if np.ptp(x) == 0:
        return {"mean": float(x[0]), "std": 0.0}
    return {"mean": float(np.mean(x)), "std": float(np.std(x, ddof=1)) if len(x) > 1 else 0.0}


def monte_carlo(obs, prior: PriorKnowledge, manifolds, sigma_rel: float, n: int = 1000,
                seed: int = 0, method: str | None = None, workers: int = 1) -> IdentResult:
    """Sensitivity of the estimate to multiplicative Gaussian measurement noise.

    Every measured frequency (and amplitude, for single tests) is multiplied
    by ``1 + sigma_rel * N(0, 1)``.  Draw ``i`` uses its own spawned substream
    so results do not depend on `workers`.  Failed draws are counted; more
    than half failing raises `UnreliableStatistics`.
    """
    obs = list(obs) if not isinstance(obs, TestObservation) else [obs]
    if method is None:
        method = "two-frequency" if len(obs) == 2 else "single-test"
    if method not in ("two-frequency", "single-test"):
        raise InvalidParameter(f"unknown method {method!r}")
    if sigma_rel < 0 or n < 1:
        raise InvalidParameter("sigma_rel must be >= 0 and n >= 1")
    if method == "two-frequency":
        point = identify_two_freq(obs, prior, manifolds)
    else:
        point = identify_single_test(obs[0], prior, manifolds)

    seqs = np.random.SeedSequence(seed).spawn(n)
    jobs = [(method, obs, prior, manifolds, sigma_rel, s) for s in seqs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            draws = list(pool.map(_draw, jobs, chunksize=max(1, n // (4 * workers))))
    else:
        draws = [_draw(j) for j in jobs]

    td = np.array([d[0] for d in draws])
    tau = np.array([d[1] for d in draws])
    ok = np.isfinite(td)
    failures = {}
    for d in draws:
        if d[2] is not None:
            failures[d[2]] = failures.get(d[2], 0) + 1
    n_fail = int((~ok).sum())
    stats = {
        "n": n,
        "n_ok": int(ok.sum()),
        "n_failed": n_fail,
        "failures": failures,
        "sigma_rel": sigma_rel,
        "seed": seed,
        "T_d": _moments(td[ok]),
        "tau": _moments(tau[ok]),
    }
    if n_fail > MAX_FAILURE_RATE * n:
        raise UnreliableStatistics(f"{n_fail} of {n} draws failed", stats)
    point.stats = stats
    return point
