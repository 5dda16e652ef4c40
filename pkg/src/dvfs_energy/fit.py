"""Bounded Levenberg-Marquardt least squares and the model-specific fitters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import (
    FitError,
    InfeasibleFitError,
    InsufficientDataError,
    SingularFitError,
)
from .model import (
    DvfsTable,
    EnergyModel,
    PowerModelParams,
    TimeModelParams,
    cpu_energy,
    fit_linear_vf,
)
from .traces import TraceSet, group_mean, select_at_temperature

FTOL = 1e-10
XTOL = 1e-10
MAX_ITER = 500

_FREQ_DECIMALS = 9


def _key(f: float) -> float:
    return round(float(f), _FREQ_DECIMALS)


@dataclass
class FitReport:
    """Outcome of a fit, with per-frequency absolute percent errors."""

    params: Any
    per_freq_abs_pct_error: list[tuple[float, float]]
    mean_abs_pct_error: float
    iterations: int
    converged: bool
    cost: float = math.nan
    excluded: list[tuple[float, float]] = field(default_factory=list)
    cost_history: list[float] = field(default_factory=list)

    def error_map(self) -> dict[float, float]:
        return dict(self.per_freq_abs_pct_error)


def abs_pct_errors(
    predict: Callable[[np.ndarray], np.ndarray], pairs: Sequence[tuple[float, float]]
) -> list[tuple[float, float]]:
    """|pred - mean(measured)| / mean(measured) * 100 for every distinct x."""
    means = group_mean(pairs)
    xs = np.array(list(means))
    ys = np.array(list(means.values()))
    pred = np.asarray(predict(xs), dtype=float)
    out = []
    for x, p, y in zip(xs, pred, ys):
        # Percent error is undefined against a zero observation.
        err = abs(p - y) / abs(y) * 100.0 if y != 0 else (0.0 if p == 0 else math.inf)
        out.append((float(x), float(err)))
    return out


def _mean(errors: list[tuple[float, float]]) -> float:
    return math.fsum(e for _, e in errors) / len(errors) if errors else math.nan


# ---------------------------------------------------------------------------
# Generic solver
# ---------------------------------------------------------------------------


def _jacobian(resid, p, free, lo, hi):
    r0 = resid(p)
    J = np.empty((r0.size, len(free)))
    for col, j in enumerate(free):
        h = 1e-6 * max(abs(p[j]), 1e-3)
        plus, minus = p.copy(), p.copy()
        plus[j] += h
        minus[j] -= h
        rp, rm = resid(plus), resid(minus)
        if np.all(np.isfinite(rp)) and np.all(np.isfinite(rm)):
            J[:, col] = (rp - rm) / (2 * h)
        elif np.all(np.isfinite(rp)):
            J[:, col] = (rp - r0) / h
        elif np.all(np.isfinite(rm)):
            J[:, col] = (r0 - rm) / h
        else:
            raise FitError(f"model is not finite around parameter {j}")
    return J


def nls_fit(
    model_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    samples: Sequence[tuple[float, float]],
    init: Sequence[float],
    bounds: Optional[Sequence[tuple[float, float]]] = None,
    *,
    relative: bool = False,
    ftol: float = FTOL,
    xtol: float = XTOL,
    max_iter: int = MAX_ITER,
) -> FitReport:
    """Minimise the sum of squared residuals of ``model_fn(x, params) - y``.

    Damped Gauss-Newton (Levenberg-Marquardt, Marquardt diagonal scaling) with a
    central-difference Jacobian.  Bounds are enforced by projecting every trial
    point onto the box; a parameter with equal lower and upper bounds is held
    fixed.  With ``relative`` the residuals are divided by ``y``.  The model may
    return non-finite values for infeasible parameters; such trial steps are
    rejected.

    Stops when the relative cost reduction of an accepted step or the relative
    step length falls below ``ftol``/``xtol``.  Hitting ``max_iter`` returns a
    report with ``converged=False``.
    """
    x = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    p = np.array(init, dtype=float)
    n = p.size
    if bounds is None:
        bounds = [(-np.inf, np.inf)] * n
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(p < lo) or np.any(p > hi):
        raise ValueError("init must lie within bounds")
    free = [j for j in range(n) if lo[j] < hi[j]]
    if x.size < len(free):
        raise InsufficientDataError(f"{x.size} samples cannot determine {len(free)} parameters")
    scale = np.abs(y) if relative else np.ones_like(y)
    if relative and np.any(scale == 0):
        raise ValueError("relative residuals need non-zero observations")

    def resid(q):
        with np.errstate(all="ignore"):
            return (np.asarray(model_fn(x, q), dtype=float) - y) / scale

    def cost_of(r):
        return 0.5 * float(r @ r) if np.all(np.isfinite(r)) else math.inf

    r = resid(p)
    cost = cost_of(r)
    if not math.isfinite(cost):
        raise FitError("model is not finite at the initial parameters")
    history = [cost]
    lam = 1e-3
    converged = False
    iterations = 0

    while iterations < max_iter and free:
        iterations += 1
        if cost == 0.0:
            converged = True
            break
        J = _jacobian(resid, p, free, lo, hi)
        col_norm = np.linalg.norm(J, axis=0)
        if np.any(col_norm == 0) or np.linalg.matrix_rank(J / col_norm) < len(free):
            raise SingularFitError("normal equations are singular; parameters not identifiable")
        A = J.T @ J
        g = J.T @ r
        D = np.diag(np.diag(A))
        accepted = False
        while lam < 1e16:
            try:
                delta = np.linalg.solve(A + lam * D, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p.copy()
            trial[free] = np.clip(p[free] + delta, lo[free], hi[free])
            r_new = resid(trial)
            cost_new = cost_of(r_new)
            if cost_new < cost:
                step = np.linalg.norm(trial - p) / (np.linalg.norm(p) + xtol)
                reduction = (cost - cost_new) / cost
                p, r, cost = trial, r_new, cost_new
                history.append(cost)
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                if reduction < ftol or step < xtol:
                    converged = True
                break
            step = np.linalg.norm(trial - p) / (np.linalg.norm(p) + xtol)
            if step < xtol:
                # No descent direction left at machine precision: a local optimum.
                converged = True
                break
            lam *= 4.0
        if converged:
            break
        if not accepted:
            # Damping exhausted without a usable step.
            break
    if not free:
        converged = True

    errors = abs_pct_errors(lambda xs: model_fn(xs, p), list(zip(x, y)))
    return FitReport(
        params=p,
        per_freq_abs_pct_error=errors,
        mean_abs_pct_error=_mean(errors),
        iterations=iterations,
        converged=converged,
        cost=cost,
        cost_history=history,
    )


# ---------------------------------------------------------------------------
# Model fitters
# ---------------------------------------------------------------------------


def _split_excluded(pairs, exclude):
    ex = {_key(f) for f in exclude}
    kept = [(f, y) for f, y in pairs if _key(f) not in ex]
    dropped = [(f, y) for f, y in pairs if _key(f) in ex]
    return kept, dropped



def _time_fn(f, q):
    cc_b, cc_k, beta = q
    denom = f**beta - cc_k
    return np.where(denom > 0, cc_b / np.where(denom > 0, denom, 1.0), np.inf)


def default_time_init(pairs) -> TimeModelParams:
    f = np.array([p[0] for p in pairs])
    t = np.array([p[1] for p in pairs])
    beta = 1.0
    cc_k = (0.5 * f.min()) ** beta
    at_max = t[f == f.max()].mean()
    return TimeModelParams(cc_b=float(at_max * (f.max() ** beta - cc_k)), cc_k=cc_k, beta=beta)


TIME_BOUNDS = ((1e-12, np.inf), (0.0, np.inf), (0.05, 10.0))
POWER_BOUNDS = ((0.0, np.inf), (0.0, np.inf), (1e-12, np.inf))


def fit_time_model(
    samples: Sequence[tuple[float, float]],
    init: Optional[TimeModelParams] = None,
    bounds=TIME_BOUNDS,
    exclude: Sequence[float] = (),
    relative: bool = True,
) -> FitReport:
    """Fit ``t = cc_b / (f**beta - cc_k)`` to (frequency GHz, time s) pairs."""
    pairs, dropped = _split_excluded(list(samples), exclude)
    if len({_key(f) for f, _ in pairs}) < 4:
        raise InsufficientDataError("time fit needs samples at >= 4 distinct frequencies")
    init = init or default_time_init(pairs)
    report = nls_fit(
        _time_fn, pairs, (init.cc_b, init.cc_k, init.beta), bounds, relative=relative
    )
    cc_b, cc_k, beta = (float(v) for v in report.params)
    params = TimeModelParams(cc_b, cc_k, beta)
    f_min = min(f for f, _ in pairs)
    if not params.asymptote < f_min:
        raise InfeasibleFitError(
            f"fitted asymptote {params.asymptote:.6g} GHz is not below the lowest "
            f"sample frequency {f_min} GHz"
        )
    report.params = params
    if dropped:
        report.excluded = abs_pct_errors(lambda xs: _time_fn(xs, _as_vector(params)), dropped)
    return report


def _as_vector(params) -> np.ndarray:
    if isinstance(params, TimeModelParams):
        return np.array([params.cc_b, params.cc_k, params.beta])
    return np.array([params.p_system, params.gamma, params.eta_alpha_c])


def default_power_init(pairs, table: DvfsTable) -> PowerModelParams:
    means = group_mean(pairs)
    p_sys = min(means.values())
    f_top = max(means)
    v_top = table.voltage_for(f_top)
    eta = (means[f_top] - p_sys) / (f_top * v_top**2)
    if not eta > 0:
        eta = means[f_top] / (f_top * v_top**2)
    return PowerModelParams(p_system=p_sys, gamma=0.1, eta_alpha_c=eta)


def fit_power_model(
    samples: Sequence[tuple[float, float]],
    table: DvfsTable,
    init: Optional[PowerModelParams] = None,
    bounds=POWER_BOUNDS,
    exclude: Sequence[float] = (),
    fix_gamma: Optional[float] = None,
    relative: bool = True,
) -> FitReport:
    """Fit ``P = p_system + (1 + gamma V) eta_alpha_c f V**2`` with V from the table."""
    pairs, dropped = _split_excluded(list(samples), exclude)
    for f, _ in pairs + dropped:
        if not table.contains(f):
            raise InsufficientDataError(f"{f} GHz has no voltage in the DVFS table")
    if len({_key(f) for f, _ in pairs}) < 4:
        raise InsufficientDataError("power fit needs samples at >= 4 distinct frequencies")
    init = init or default_power_init(pairs, table)
    bounds = [tuple(b) for b in bounds]
    q0 = [init.p_system, init.gamma, init.eta_alpha_c]
    if fix_gamma is not None:
        bounds[1] = (fix_gamma, fix_gamma)
        q0[1] = fix_gamma

    volts = {_key(f): v for f, v in table.entries}

    def fn(f, q):
        p_sys, gamma, eta = q
        V = np.array([volts[_key(x)] for x in np.atleast_1d(f)])
        return p_sys + (1.0 + gamma * V) * eta * f * V**2

    report = nls_fit(fn, pairs, q0, bounds, relative=relative)
    p_sys, gamma, eta = (float(v) for v in report.params)
    params = PowerModelParams(max(p_sys, 0.0), max(gamma, 0.0), eta)
    report.params = params
    if dropped:
        report.excluded = abs_pct_errors(lambda xs: fn(xs, _as_vector(params)), dropped)
    return report


def energy_fit_error(
    m: EnergyModel,
    traces: TraceSet,
    table: Optional[DvfsTable] = None,
    n_log2: Optional[int] = None,
) -> list[tuple[float, float]]:
    """Per-frequency |E_model - E_measured| / E_measured in percent.

    Measured CPU energy is ``(mean power - p_system) * mean elapsed time`` at each
    frequency present in both power and time records.  The model is evaluated
    with table voltages when ``table`` is given, else with its own voltage map.
    """
    sizes = traces.sizes()
    if n_log2 is None:
        if len(sizes) > 1:
            raise InsufficientDataError(f"traces hold several input sizes {sizes}; pick one")
        n_log2 = sizes[0] if sizes else None
    p_mean = {_key(f): v for f, v in group_mean(traces.power_pairs()).items()}
    t_mean = {_key(f): v for f, v in group_mean(traces.time_pairs(n_log2)).items()}
    common = sorted(set(p_mean) & set(t_mean))
    if not common:
        raise InsufficientDataError("no frequencies carry both power and time records")
    out = []
    for f in common:
        measured = (p_mean[f] - m.power.p_system) * t_mean[f]
        V = table.voltage_for(f) if table is not None else None
        predicted = cpu_energy(m, f, voltage=V)
        out.append((f, abs(predicted - measured) / abs(measured) * 100.0))
    return out


# ---------------------------------------------------------------------------
# Whole-trace orchestration
# ---------------------------------------------------------------------------


@dataclass
class SizeFit:
    n_log2: int
    time: FitReport
    energy_errors: list[tuple[float, float]]
    model: EnergyModel


@dataclass
class TraceFit:
    power: Optional[FitReport]
    sizes: list[SizeFit]
    excluded: list[float]

    def pooled_time_errors(self) -> list[tuple[float, float]]:
        return _pool([s.time.per_freq_abs_pct_error for s in self.sizes])

    def pooled_energy_errors(self) -> list[tuple[float, float]]:
        return _pool([s.energy_errors for s in self.sizes])


def _pool(rows: list[list[tuple[float, float]]]) -> list[tuple[float, float]]:
    acc: dict[float, list[float]] = {}
    for row in rows:
        for f, e in row:
            acc.setdefault(f, []).append(e)
    return [(f, math.fsum(es) / len(es)) for f, es in sorted(acc.items())]


def fit_traces(
    traces: TraceSet,
    table: DvfsTable,
    *,
    exclude: Sequence[float] = (),
    ref_temp_c: Optional[float] = None,
    temp_tol: float = 0.5,
    fit_time: bool = True,
    fit_power: bool = True,
) -> TraceFit:
    """Fit power once and time per input size, then score energy per size.

    Power samples are first restricted to ``ref_temp_c +- temp_tol`` when a
    reference temperature is given.
    """
    power_report = None
    if fit_power:
        if not traces.power:
            raise InsufficientDataError("power fit requested but the traces have no power section")
        ptraces = traces
        if ref_temp_c is not None:
            ptraces = select_at_temperature(traces, ref_temp_c, temp_tol)
        power_report = fit_power_model(ptraces.power_pairs(), table, exclude=exclude)
        traces = ptraces

    sizes: list[SizeFit] = []
    if fit_time:
        if not traces.time:
            raise InsufficientDataError("time fit requested but the traces have no time section")
        vf = fit_linear_vf(table)
        f_lo, f_hi = float(table.frequencies[0]), float(table.frequencies[-1])
        for n in traces.sizes():
            t_report = fit_time_model(traces.time_pairs(n), exclude=exclude)
            energy_errors: list[tuple[float, float]] = []
            model = None
            if power_report is not None:
                model = EnergyModel(t_report.params, power_report.params, vf, (f_lo, f_hi))
                ex = {_key(f) for f in exclude}
                energy_errors = [
                    (f, e)
                    for f, e in energy_fit_error(model, traces, table, n_log2=n)
                    if f not in ex
                ]
            sizes.append(SizeFit(n, t_report, energy_errors, model))
    return TraceFit(power_report, sizes, sorted(_key(f) for f in exclude))


def format_error_table(rows: dict[str, list[tuple[float, float]]], excluded=()) -> str:
    """Render per-frequency errors with one column per frequency.

    Excluded frequencies show ``excluded`` instead of a number.
    """
    freqs = sorted({f for r in rows.values() for f, _ in r} | {_key(f) for f in excluded})
    ex = {_key(f) for f in excluded}
    lines = ["f_ghz," + ",".join(f"{f:.9g}" for f in freqs)]
    for name, row in rows.items():
        values = dict(row)
        cells = []
        for f in freqs:
            if f in ex:
                cells.append("excluded")
            elif f in values:
                cells.append(f"{values[f]:.9g}")
            else:
                cells.append("")
        lines.append(name + "," + ",".join(cells))
    return "\n".join(lines)
