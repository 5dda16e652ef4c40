"""Energy-optimal frequency search, unimodality checks and sensitivity sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DvfsEnergyError, InsufficientDataError
from .model import (
    DvfsTable,
    EnergyModel,
    ThermalParams,
    celsius_to_kelvin,
    cpu_energy,
    energy_derivative,
    optimality_residual,
    scale_gamma,
)

DEFAULT_TOL = 1e-4  # GHz
INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

DERIVATIVE_ROOT = "derivative-root"
GOLDEN_SECTION = "golden-section"
DISCRETE_ARGMIN = "discrete-argmin"


@dataclass(frozen=True)
class OptResult:
    f_opt: float
    e_min: float
    method: str
    bracket: tuple[float, float]
    residual_at_opt: float
    boundary: bool = False
    degenerate: bool = False

    @property
    def interior(self) -> bool:
        return not self.boundary and not self.degenerate


def golden_section(fn: Callable[[float], float], a: float, b: float, tol: float) -> tuple[float, float]:
    """Shrink [a, b] around the minimum of a unimodal ``fn`` until b - a <= tol."""
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = fn(d)
    return a, b


def _is_flat(m: EnergyModel, rtol: float = 1e-12) -> bool:
    grid = np.linspace(m.f_min, m.f_max, 17)
    d = np.asarray(energy_derivative(m, grid))
    e = np.asarray(cpu_energy(m, grid))
    return bool(np.all(np.abs(d) * (m.f_max - m.f_min) <= rtol * np.abs(e)))


def _boundary_result(m: EnergyModel, degenerate: bool = False) -> OptResult:
    e_lo, e_hi = cpu_energy(m, m.f_min), cpu_energy(m, m.f_max)
    f = m.f_min if e_lo <= e_hi or degenerate else m.f_max
    return OptResult(
        f_opt=f,
        e_min=cpu_energy(m, f),
        method=DERIVATIVE_ROOT,
        bracket=(f, f),
        residual_at_opt=float(optimality_residual(m, f)),
        boundary=True,
        degenerate=degenerate,
    )


def find_fopt_continuous(m: EnergyModel, tol: float = DEFAULT_TOL) -> OptResult:
    """Minimise the CPU energy over the model's frequency range.

    Bisects on the sign of the analytic derivative when it changes from negative
    to positive across the range.  A single-signed derivative gives a boundary
    optimum (the endpoint with lower energy).  A perfectly flat curve returns
    ``f_min`` flagged ``degenerate``.  Any other sign pattern, or a non-finite
    derivative, falls back to golden-section search on the energy itself.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if _is_flat(m):
        return _boundary_result(m, degenerate=True)
    lo, hi = m.f_min, m.f_max
    d_lo, d_hi = float(energy_derivative(m, lo)), float(energy_derivative(m, hi))

    if math.isfinite(d_lo) and math.isfinite(d_hi):
        if d_lo < 0 < d_hi:
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                d_mid = float(energy_derivative(m, mid))
                if not math.isfinite(d_mid):
                    break
                if d_mid < 0:
                    lo = mid
                elif d_mid > 0:
                    hi = mid
                else:
                    lo = hi = mid
            else:
                f = 0.5 * (lo + hi)
                return OptResult(
                    f, cpu_energy(m, f), DERIVATIVE_ROOT, (lo, hi), float(optimality_residual(m, f))
                )
            if lo == hi:
                return OptResult(lo, cpu_energy(m, lo), DERIVATIVE_ROOT, (lo, hi), 0.0)
        elif d_lo >= 0 and d_hi >= 0 or d_lo <= 0 and d_hi <= 0:
            return _boundary_result(m)

    a, b = golden_section(lambda x: float(cpu_energy(m, x)), m.f_min, m.f_max, tol)
    f = 0.5 * (a + b)
    candidates = [(cpu_energy(m, f), f), (cpu_energy(m, m.f_min), m.f_min), (cpu_energy(m, m.f_max), m.f_max)]
    e, f = min(candidates)
    boundary = f in (m.f_min, m.f_max)
    return OptResult(
        f, e, GOLDEN_SECTION, (f, f) if boundary else (a, b), float(optimality_residual(m, f)), boundary
    )


def find_fopt_discrete(m: EnergyModel, table: DvfsTable) -> OptResult:
    """Argmin of CPU energy over the table entries, using the table voltages.

    Entries outside the model range or at/below the asymptote are skipped.  Ties
    go to the lower frequency.
    """
    lo, hi = m.freq_range
    feasible = [
        (f, v)
        for f, v in table.entries
        if lo <= f <= hi and f**m.time.beta > m.time.cc_k
    ]
    if not feasible:
        raise InsufficientDataError("no DVFS entry lies inside the model's feasible range")
    best = None
    for idx, (f, v) in enumerate(feasible):
        e = cpu_energy(m, f, voltage=v)
        if best is None or e < best[0]:
            best = (e, idx)
    e, idx = best
    f = feasible[idx][0]
    below = feasible[idx - 1][0] if idx > 0 else f
    above = feasible[idx + 1][0] if idx + 1 < len(feasible) else f
    return OptResult(
        f_opt=f,
        e_min=e,
        method=DISCRETE_ARGMIN,
        bracket=(below, above),
        residual_at_opt=float(optimality_residual(m, f)),
        boundary=idx in (0, len(feasible) - 1) and len(feasible) > 1,
    )


@dataclass(frozen=True)
class UnimodalCheck:
    unimodal: bool
    violations: tuple[int, ...]
    argmin: int
    grid: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


def check_unimodal_values(values: Sequence[float], rtol: float = 1e-12) -> UnimodalCheck:
    """Check that successive differences go (<= 0)* then (>= 0)*.

    Differences smaller than ``rtol`` times the local magnitude count as zero.
    Each violation is the index of a sample that drops after the curve has
    already started rising.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("need at least three samples")
    d = np.diff(v)
    thresh = rtol * np.maximum(np.abs(v[1:]), np.abs(v[:-1]))
    rising = False
    violations = []
    for i, (di, ti) in enumerate(zip(d, thresh)):
        if di > ti:
            rising = True
        elif di < -ti and rising:
            violations.append(i + 1)
    return UnimodalCheck(not violations, tuple(violations), int(np.argmin(v)))


def check_unimodal(m: EnergyModel, n_grid: int = 1000, rtol: float = 1e-12) -> UnimodalCheck:
    if n_grid < 3:
        raise ValueError("n_grid must be >= 3")
    grid = np.linspace(m.f_min, m.f_max, n_grid)
    res = check_unimodal_values(cpu_energy(m, grid), rtol)
    return UnimodalCheck(res.unimodal, res.violations, res.argmin, grid)


# ---------------------------------------------------------------------------
# Sensitivity sweeps
# ---------------------------------------------------------------------------

SWEEP_PARAMS = ("beta", "cc_k", "asymptote", "m1", "gamma")


@dataclass(frozen=True)
class SweepPoint:
    value: float
    f_opt: float
    e_min: float
    ok: bool
    message: str = ""
    result: Optional[OptResult] = None


def _swept(m: EnergyModel, param: str, value: float) -> EnergyModel:
    if param == "asymptote":
        # Hold beta; move the asymptote by adjusting cc_k.
        return m.with_params(cc_k=value**m.time.beta)
    return m.with_params(**{param: value})


def sensitivity_sweep(
    m: EnergyModel, param: str, values: Sequence[float], tol: float = DEFAULT_TOL
) -> list[SweepPoint]:
    """f_opt for each value of one parameter, others held at ``m``'s values.

    ``param`` is one of beta, cc_k, asymptote (cc_k set to value**beta), m1 or
    gamma.  Values producing an invalid model are flagged and skipped.
    """
    if param not in SWEEP_PARAMS:
        raise KeyError(f"cannot sweep {param!r}; choose from {SWEEP_PARAMS}")
    out = []
    for value in values:
        try:
            res = find_fopt_continuous(_swept(m, param, float(value)), tol)
        except DvfsEnergyError as exc:
            out.append(SweepPoint(float(value), math.nan, math.nan, False, str(exc)))
            continue
        msg = "degenerate" if res.degenerate else ("boundary" if res.boundary else "")
        out.append(SweepPoint(float(value), res.f_opt, res.e_min, True, msg, res))
    return out


def temperature_sweep(
    m: EnergyModel,
    thermal: ThermalParams,
    temps_c: Sequence[float],
    ref_temp_c: float = 37.0,
    tol: float = DEFAULT_TOL,
) -> list[SweepPoint]:
    """Sweep f_opt over temperature, rescaling the model's gamma (fitted at ``ref_temp_c``)."""
    gammas = np.atleast_1d(
        scale_gamma(m.power.gamma, thermal, celsius_to_kelvin(np.asarray(temps_c)), celsius_to_kelvin(ref_temp_c))
    )
    out = []
    for t, g in zip(temps_c, gammas):
        pt = sensitivity_sweep(m, "gamma", [float(g)], tol)[0]
        out.append(SweepPoint(float(t), pt.f_opt, pt.e_min, pt.ok, pt.message or f"gamma={g:.9g}", pt.result))
    return out
