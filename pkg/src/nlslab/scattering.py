"""Scattering evidence from trajectories: pull-backs, Cauchy tables, decay series.

The pull-back w(t) = (free flow)^{-1} u(t) converges in H^1 exactly when the
trajectory scatters; the Cauchy table of H^1 differences quantifies that.
Space-time accumulators shadow the finiteness of the global mixed-norm
bounds: saturating integrals are the numerical signature of membership in
the corresponding L^q_t spaces.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Dict, List, Sequence

import numpy as np

from .exponents import (
    AuxPair,
    ProblemParams,
    StrichartzTuple,
    ThetaTuple,
    verify_tuple,
)
from .field import (
    SpectralField,
    free_evolve,
    lebesgue_norm,
    mixed_norm,
    sobolev_h1,
)


def pullback(fld: SpectralField) -> SpectralField:
    """w(t) = free flow run backward to the t = 0 reference frame."""
    return free_evolve(fld, -fld.time_tag)


def _check_increasing(snapshots: Sequence[SpectralField], minimum: int) -> None:
    if len(snapshots) < minimum:
        raise ValueError(f"need at least {minimum} snapshots, got {len(snapshots)}")
    times = [f.time_tag for f in snapshots]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("snapshot times must be strictly increasing")


def cauchy_table(snapshots: Sequence[SpectralField]) -> np.ndarray:
    """C_ij = ||w(t_i) - w(t_j)||_{H^1}; symmetric with zero diagonal."""
    _check_increasing(snapshots, 3)
    ws = [pullback(f) for f in snapshots]
    m = len(ws)
    C = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            diff = SpectralField(ws[i].grid,
                                 ws[i].coefficients - ws[j].coefficients)
            C[i, j] = C[j, i] = sobolev_h1(diff)
    return C


def cauchy_tail_maxima(C: np.ndarray) -> List[float]:
    """tail[k] = max over j > i >= k of C_ij."""
    m = C.shape[0]
    return [float(C[k:, k:].max()) for k in range(m - 1)]


def cauchy_tail_decreasing(C: np.ndarray) -> bool:
    tail = cauchy_tail_maxima(C)
    return all(b < a for a, b in zip(tail, tail[1:]))


@dataclass
class DecaySeries:
    q: float
    times: List[float]
    values: List[float]
    ratio_last_to_max: float
    monotone_tail: bool
    outside_range: bool


def decay_series(snapshots: Sequence[SpectralField], q_list: Sequence[float],
                 transient: float = 1.0) -> Dict[float, DecaySeries]:
    """L^q norm series per q with a monotone-tail flag for t >= transient.

    q values outside 2 < q < 2(d+1)/(d-1) (any q > 2 for d = 1) are still
    computed but flagged, with a warning.
    """
    _check_increasing(snapshots, 2)
    d = snapshots[0].grid.d
    q_hi = np.inf if d == 1 else 2.0 * (d + 1) / (d - 1)
    times = [f.time_tag for f in snapshots]
    out: Dict[float, DecaySeries] = {}
    for q in q_list:
        outside = not (2.0 < q <= q_hi)
        if outside:
            warnings.warn(
                f"q = {q} lies outside the dispersive-decay range (2, {q_hi}]",
                RuntimeWarning,
            )
        vals = [lebesgue_norm(f, q) for f in snapshots]
        tail = [v for t, v in zip(times, vals) if t >= transient]
        monotone = len(tail) >= 2 and all(
            b <= a * (1.0 + 1e-8) for a, b in zip(tail, tail[1:]))
        out[q] = DecaySeries(
            q=q, times=list(times), values=vals,
            ratio_last_to_max=vals[-1] / max(vals),
            monotone_tail=monotone, outside_range=outside)
    return out


# ---------------------------------------------------------------------------
# space-time accumulators
# ---------------------------------------------------------------------------

def _grad_x_mixed_norm(fld: SpectralField, p: float) -> float:
    """L^p_x L^2_y norm of |grad_x u|."""
    g = fld.grid
    h_sq = np.zeros((g.Nx,) * g.d)
    from scipy import fft as sfft
    for xg in g.xi_grids():
        du = sfft.ifftn(fld.coefficients * (1j * xg) * g.x_phase(),
                        workers=-1) * g.ntot
        h_sq += np.sum(np.abs(du) ** 2, axis=-1) * g.dy
    if p == np.inf:
        return float(np.sqrt(h_sq.max()))
    return float((np.sum(h_sq ** (p / 2.0)) * g.cell) ** (1.0 / p))


def _dy_field(fld: SpectralField) -> SpectralField:
    g = fld.grid
    return SpectralField(g, fld.coefficients * (1j * g.n_grid()), fld.time_tag)


@dataclass
class SpacetimeAccumulators:
    """Trapezoid folds of the global space-time norms along a run.

    theta_norm: ||u||^{q_theta} in L^{r_theta}_x H^{1/2+delta}_y
    u_lp, dy_lp, grad_lp: ||u||^l, ||d_y u||^l, ||grad_x u||^l in L^p_x L^2_y
    """

    params: ProblemParams
    base: StrichartzTuple
    theta: ThetaTuple
    aux: AuxPair
    delta: Fraction = Fraction(1, 20)

    def __post_init__(self):
        if not verify_tuple(self.theta, self.params, base=self.base).feasible:
            raise ValueError("theta tuple fails its feasibility constraints")
        if not verify_tuple(self.aux, self.params, base=self.base).feasible:
            raise ValueError("auxiliary pair fails its feasibility constraints")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if Fraction(1, 2) + self.delta + self.base.s > 1:
            raise ValueError(
                f"1/2 + delta + s = {Fraction(1, 2) + self.delta + self.base.s} "
                "exceeds 1"
            )
        self.totals = {"theta_norm": 0.0, "u_lp": 0.0, "dy_lp": 0.0,
                       "grad_lp": 0.0}
        self.increments: Dict[str, List[float]] = {k: [] for k in self.totals}
        self._last_t = None
        self._last_vals = None

    def _instant(self, fld: SpectralField) -> Dict[str, float]:
        q_th = float(self.theta.q_theta)
        r_th = float(self.theta.r_theta)
        gamma = 0.5 + float(self.delta)
        ell = float(self.aux.l)
        p = float(self.aux.p)
        return {
            "theta_norm": mixed_norm(fld, r_th, gamma) ** q_th,
            "u_lp": mixed_norm(fld, p, 0.0) ** ell,
            "dy_lp": mixed_norm(_dy_field(fld), p, 0.0) ** ell,
            "grad_lp": _grad_x_mixed_norm(fld, p) ** ell,
        }

    def update(self, t: float, fld: SpectralField) -> Dict[str, float]:
        vals = self._instant(fld)
        if self._last_t is not None:
            if t <= self._last_t:
                raise ValueError("stream must be strictly time-ordered")
            dt = t - self._last_t
            for key, v in vals.items():
                inc = 0.5 * (v + self._last_vals[key]) * dt
                self.totals[key] += inc
                self.increments[key].append(inc)
        self._last_t, self._last_vals = t, vals
        return dict(self.totals)

    def saturation(self) -> Dict[str, float]:
        """Last increment relative to the peak increment, per accumulator."""
        out = {}
        for key, incs in self.increments.items():
            peak = max(incs) if incs else 0.0
            out[key] = (incs[-1] / peak) if peak > 0 else 0.0
        return out


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def geometric_sample_times(t0: float, t_end: float, dt: float,
                           growth: float = 1.3) -> List[float]:
    """t_i = t0 * growth^i snapped to the step grid, strictly increasing."""
    times = []
    t = t0
    while t <= t_end * (1 + 1e-12):
        snapped = round(round(t / dt) * dt, 12)
        if not times or snapped > times[-1]:
            times.append(snapped)
        t *= growth
    return times


@dataclass
class ScatterReport:
    times: List[float]
    cauchy: np.ndarray
    decay: Dict[float, DecaySeries]
    accumulator_totals: Dict[str, float]
    accumulator_saturation: Dict[str, float]
    flags: Dict[str, bool]
    f_plus: SpectralField

    def to_json_dict(self) -> dict:
        return {
            "times": self.times,
            "cauchy_matrix": [float(v) for v in self.cauchy.ravel()],
            "decay": {
                str(q): {
                    "values": s.values,
                    "ratio_last_to_max": s.ratio_last_to_max,
                    "monotone_tail": s.monotone_tail,
                    "outside_range": s.outside_range,
                }
                for q, s in self.decay.items()
            },
            "accumulators": self.accumulator_totals,
            "saturation": self.accumulator_saturation,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def make_scatter_report(snapshots: Sequence[SpectralField],
                        q_list: Sequence[float],
                        accumulators: SpacetimeAccumulators | None = None,
                        transient: float = 1.0) -> ScatterReport:
    _check_increasing(snapshots, 3)
    C = cauchy_table(snapshots)
    decay = decay_series(snapshots, q_list, transient)
    totals = accumulators.totals if accumulators else {}
    sat = accumulators.saturation() if accumulators else {}
    flags = {
        "cauchy_tail_decreasing": cauchy_tail_decreasing(C),
        "all_monotone_tails": all(s.monotone_tail for s in decay.values()),
    }
    return ScatterReport(
        times=[f.time_tag for f in snapshots],
        cauchy=C,
        decay=decay,
        accumulator_totals=dict(totals),
        accumulator_saturation=dict(sat),
        flags=flags,
        f_plus=pullback(snapshots[-1]),
    )
