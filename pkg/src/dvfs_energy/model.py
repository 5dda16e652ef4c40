"""Closed-form evaluators for the DVFS time, power and energy laws.

Units throughout: frequency in GHz, voltage in volts, temperature in kelvin,
time in seconds, power in watts, energy in joules.  ``cc_k`` therefore carries
units of GHz**beta.

All evaluators accept scalars or numpy arrays and are pure functions of
immutable (frozen dataclass) parameter bundles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, InvalidModelError, TraceFormatError

ArrayLike = Union[float, np.ndarray]

KELVIN_OFFSET = 273.15


def celsius_to_kelvin(t_c):
    return _out(np.asarray(t_c, dtype=float) + KELVIN_OFFSET)


def _out(x):
    # Collapse 0-d arrays back to floats so scalar calls return scalars.
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# DVFS table and voltage maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DvfsTable:
    """Discrete frequency -> voltage map of a platform."""

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self):
        entries = tuple((float(f), float(v)) for f, v in self.entries)
        object.__setattr__(self, "entries", entries)
        for f, v in entries:
            if not (f > 0 and v > 0):
                raise InvalidModelError(f"DVFS entry ({f}, {v}) must have f > 0 and V > 0")
        for (f0, v0), (f1, v1) in zip(entries, entries[1:]):
            if not f1 > f0:
                raise InvalidModelError("DVFS frequencies must be strictly increasing")
            if v1 < v0:
                raise InvalidModelError(f"voltage decreases between {f0} and {f1} GHz")

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([f for f, _ in self.entries])

    @property
    def voltages(self) -> np.ndarray:
        return np.array([v for _, v in self.entries])

    def __len__(self):
        return len(self.entries)

    def voltage_for(self, f: float, atol: float = 1e-9) -> float:
        """Exact table lookup; raises KeyError when ``f`` is not a table frequency."""
        for ft, v in self.entries:
            if abs(ft - f) <= atol:
                return v
        raise KeyError(f"{f} GHz is not in the DVFS table")

    def contains(self, f: float, atol: float = 1e-9) -> bool:
        return any(abs(ft - f) <= atol for ft, _ in self.entries)


def load_dvfs_table(path) -> DvfsTable:
    """Read a two-column table.

    The header names the units: ``freq_mhz,voltage_mv`` or ``freq_ghz,voltage_v``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise TraceFormatError(f"{path}: empty DVFS table")
    header = [h.strip().lower() for h in rows[0]]
    scales = {"freq_mhz": 1e-3, "freq_ghz": 1.0, "voltage_mv": 1e-3, "voltage_v": 1.0}
    if len(header) != 2 or header[0] not in scales or header[1] not in scales:
        raise TraceFormatError(f"unrecognised DVFS header {rows[0]!r}", line=1)
    fs, vs = scales[header[0]], scales[header[1]]
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            f, v = (float(x) for x in row)
        except ValueError as exc:
            raise TraceFormatError(f"bad DVFS row {row!r}", line=lineno) from exc
        # Round away the binary noise introduced by unit scaling (e.g. 0.3000000004).
        entries.append((round(f * fs, 12), round(v * vs, 12)))
    try:
        return DvfsTable(tuple(entries))
    except InvalidModelError as exc:
        raise TraceFormatError(f"{path}: {exc}") from exc


def default_table_path() -> Path:
    return Path(str(resources.files("dvfs_energy") / "data" / "dvfs_table.csv"))


def default_table() -> DvfsTable:
    """The bundled Exynos 4 (Galaxy S2) DVFS table, 0.2-1.6 GHz."""
    return load_dvfs_table(default_table_path())


@dataclass(frozen=True)
class LinearVF:
    """Affine voltage map ``V = m1 * f + m2``."""

    m1: float
    m2: float

    def __post_init__(self):
        if self.m1 < 0:
            raise InvalidModelError("m1 must be >= 0")

    def voltage(self, f):
        return self.m1 * np.asarray(f, dtype=float) + self.m2

    def slope(self, f):
        return np.full_like(np.asarray(f, dtype=float), self.m1)


@dataclass(frozen=True)
class PiecewiseLinearVF:
    """Linear interpolant through the points of a DVFS table."""

    table: DvfsTable

    def voltage(self, f):
        return np.interp(np.asarray(f, dtype=float), self.table.frequencies, self.table.voltages)

    def slope(self, f):
        fs, vs = self.table.frequencies, self.table.voltages
        if len(fs) < 2:
            return np.zeros_like(np.asarray(f, dtype=float))
        seg = np.clip(np.searchsorted(fs, f, side="right") - 1, 0, len(fs) - 2)
        return (vs[seg + 1] - vs[seg]) / (fs[seg + 1] - fs[seg])


def voltage_at(vf, f):
    return _out(vf.voltage(f))


def fit_linear_vf(table: DvfsTable) -> LinearVF:
    """Ordinary least-squares line through the table's (f, V) pairs."""
    if len(table) < 2:
        raise InvalidModelError("need at least two DVFS entries to fit a line")
    f, v = table.frequencies, table.voltages
    fc = f - f.mean()
    sxx = float(fc @ fc)
    if sxx == 0.0:
        raise InvalidModelError("all frequencies equal; line is not identifiable")
    m1 = float(fc @ (v - v.mean())) / sxx
    m2 = float(v.mean() - m1 * f.mean())
    # Constant-voltage tables may give -0.0 or a tiny negative slope from rounding.
    if m1 < 0 and abs(m1) < 1e-12:
        m1 = 0.0
    return LinearVF(m1, m2)


# ---------------------------------------------------------------------------
# Execution time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeModelParams:
    """Execution time ``t = cc_b / (f**beta - cc_k)``."""

    cc_b: float
    cc_k: float
    beta: float

    def __post_init__(self):
        if not (self.cc_b > 0 and self.cc_k >= 0 and self.beta > 0):
            raise InvalidModelError(f"invalid time-model parameters {self}")

    @property
    def asymptote(self) -> float:
        """Frequency of the vertical asymptote, ``cc_k ** (1 / beta)``."""
        return self.cc_k ** (1.0 / self.beta)


def exec_time(p: TimeModelParams, f):
    f = np.asarray(f, dtype=float)
    denom = f**p.beta - p.cc_k
    if np.any(denom <= 0):
        raise DomainError(f"frequency at or below the asymptote {p.asymptote:.6g} GHz")
    return _out(p.cc_b / denom)


# ---------------------------------------------------------------------------
# Leakage and power
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThermalParams:
    """Reference constants for the temperature dependence of the leakage ratio."""

    R0: float
    V0: float
    T0: float
    B: float

    def __post_init__(self):
        if not all(x > 0 for x in (self.R0, self.V0, self.T0, self.B)):
            raise InvalidModelError("thermal constants must all be > 0")


# Only the synthetic generator falls back on these; fitting never does.
ILLUSTRATIVE_THERMAL = ThermalParams(R0=0.1, V0=1.0, T0=310.0, B=1000.0)


def leakage_ratio(t: ThermalParams, T, V):
    """Leakage-to-dynamic power ratio at temperature ``T`` (K) and voltage ``V``."""
    T = np.asarray(T, dtype=float)
    V = np.asarray(V, dtype=float)
    coef = t.R0 / (t.V0 * t.T0**2)
    # exp(B/T0 - B/T) keeps the exponent small compared with evaluating each factor.
    return _out(coef * V * T**2 * np.exp(t.B / t.T0 - t.B / T))


def gamma_at(t: ThermalParams, T):
    return _out(leakage_ratio(t, T, 1.0))


def scale_gamma(gamma_ref: float, t: ThermalParams, T, T_ref: float):
    """Extrapolate a ``gamma`` fitted at ``T_ref`` to temperature ``T`` (both K)."""
    return _out(gamma_ref * np.asarray(gamma_at(t, T)) / gamma_at(t, T_ref))


@dataclass(frozen=True)
class PowerModelParams:
    """Total power ``p_system + (1 + gamma V) eta_alpha_c f V**2``."""

    p_system: float
    gamma: float
    eta_alpha_c: float

    def __post_init__(self):
        if not (self.p_system >= 0 and self.gamma >= 0 and self.eta_alpha_c > 0):
            raise InvalidModelError(f"invalid power-model parameters {self}")


def cpu_power(p: PowerModelParams, f, V):
    f = np.asarray(f, dtype=float)
    V = np.asarray(V, dtype=float)
    return _out((1.0 + p.gamma * V) * p.eta_alpha_c * f * V**2)


def total_power(p: PowerModelParams, f, V):
    return _out(p.p_system + np.asarray(cpu_power(p, f, V)))


# ---------------------------------------------------------------------------
# Energy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyModel:
    time: TimeModelParams
    power: PowerModelParams
    vf: Union[LinearVF, PiecewiseLinearVF]
    freq_range: tuple[float, float] = field(default=(0.2, 1.6))

    def __post_init__(self):
        f_min, f_max = (float(x) for x in self.freq_range)
        object.__setattr__(self, "freq_range", (f_min, f_max))
        if not f_min < f_max:
            raise InvalidModelError("freq_range must satisfy f_min < f_max")
        if not f_min**self.time.beta > self.time.cc_k:
            raise InvalidModelError(
                f"f_min={f_min} GHz is not above the asymptote {self.time.asymptote:.6g} GHz"
            )
        v = self.vf.voltage(np.array([f_min, f_max]))
        if np.any(v <= 0):
            raise InvalidModelError("voltage map is non-positive inside freq_range")

    @property
    def f_min(self) -> float:
        return self.freq_range[0]

    @property
    def f_max(self) -> float:
        return self.freq_range[1]

    def with_params(self, **changes) -> "EnergyModel":
        """Copy with any of beta, cc_k, cc_b, gamma, p_system, eta_alpha_c, m1, m2 replaced."""
        time_keys = {"cc_b", "cc_k", "beta"}
        power_keys = {"p_system", "gamma", "eta_alpha_c"}
        vf_keys = {"m1", "m2"}
        unknown = set(changes) - time_keys - power_keys - vf_keys - {"freq_range"}
        if unknown:
            raise KeyError(f"unknown parameters {sorted(unknown)}")
        time = replace(self.time, **{k: v for k, v in changes.items() if k in time_keys})
        power = replace(self.power, **{k: v for k, v in changes.items() if k in power_keys})
        vf = self.vf
        vf_changes = {k: v for k, v in changes.items() if k in vf_keys}
        if vf_changes:
            if not isinstance(vf, LinearVF):
                raise InvalidModelError("m1/m2 only apply to a linear voltage map")
            vf = replace(vf, **vf_changes)
        return EnergyModel(time, power, vf, changes.get("freq_range", self.freq_range))


def _check_range(m: EnergyModel, f: np.ndarray, rtol: float = 1e-12):
    lo, hi = m.freq_range
    slack = rtol * hi
    if np.any(f < lo - slack) or np.any(f > hi + slack):
        raise DomainError(f"frequency outside model range [{lo}, {hi}] GHz")


def cpu_energy(m: EnergyModel, f, voltage=None):
    """CPU-only energy (system power excluded) at frequency ``f``.

    ``voltage`` overrides the model's voltage map, e.g. with DVFS table values.
    """
    f = np.asarray(f, dtype=float)
    _check_range(m, f)
    V = m.vf.voltage(f) if voltage is None else np.asarray(voltage, dtype=float)
    return _out(np.asarray(cpu_power(m.power, f, V)) * np.asarray(exec_time(m.time, f)))


def system_energy(m: EnergyModel, f, voltage=None):
    """Whole-system energy: CPU energy plus ``p_system * t``."""
    f = np.asarray(f, dtype=float)
    return _out(
        np.asarray(cpu_energy(m, f, voltage))
        + m.power.p_system * np.asarray(exec_time(m.time, f))
    )


def energy_derivative(m: EnergyModel, f):
    """Closed-form dE_cpu/df (J/GHz) using the model's voltage map."""
    f = np.asarray(f, dtype=float)
    _check_range(m, f)
    g, e = m.power.gamma, m.power.eta_alpha_c
    tp = m.time
    V = m.vf.voltage(f)
    dV = m.vf.slope(f)
    P = (1.0 + g * V) * e * f * V**2
    dP = e * (g * dV * f * V**2 + (1.0 + g * V) * (V**2 + 2.0 * f * V * dV))
    u = f**tp.beta - tp.cc_k
    T = tp.cc_b / u
    dT = -tp.cc_b * tp.beta * f ** (tp.beta - 1.0) / u**2
    return _out(dP * T + P * dT)


def optimality_residual(m: EnergyModel, f):
    """Normalised stationarity residual ``(rhs - lhs) / rhs``.

    ``lhs = (1+gV) V f^b b / (f^b - cc_k)`` and ``rhs = f m1 (3 g V + 2) + (1+gV) V``.
    The two balance exactly where dE/df = 0.  The orientation is chosen so the
    residual has the same sign as dE/df; both sides are positive, so dividing by
    ``rhs`` does not change that sign.
    """
    f = np.asarray(f, dtype=float)
    _check_range(m, f)
    g = m.power.gamma
    tp = m.time
    V = m.vf.voltage(f)
    m1 = m.vf.slope(f)
    fb = f**tp.beta
    lhs = (1.0 + g * V) * V * fb * tp.beta / (fb - tp.cc_k)
    rhs = f * m1 * (3.0 * g * V + 2.0) + (1.0 + g * V) * V
    return _out((rhs - lhs) / rhs)


# ---------------------------------------------------------------------------
# Reference parameter sets
# ---------------------------------------------------------------------------

# Ground truth for the synthetic fit-recovery experiments.
GENERATOR_TIME = TimeModelParams(cc_b=3.0, cc_k=0.115, beta=1.0)
GENERATOR_POWER = PowerModelParams(p_system=0.4, gamma=0.3, eta_alpha_c=0.8)

# Representative Galaxy S2 model: asymptote at 115 MHz with beta free, the
# least-squares line through the DVFS table, and the generator's power constants.
CANONICAL_BETA = 1.4
CANONICAL_TIME = TimeModelParams(cc_b=3.0, cc_k=0.115**CANONICAL_BETA, beta=CANONICAL_BETA)
CANONICAL_POWER = GENERATOR_POWER


def canonical_model(table: DvfsTable | None = None) -> EnergyModel:
    table = table if table is not None else default_table()
    f = table.frequencies
    return EnergyModel(
        CANONICAL_TIME, CANONICAL_POWER, fit_linear_vf(table), (float(f[0]), float(f[-1]))
    )


def model_from_mapping(values: dict, default_range: Sequence[float] = (0.2, 1.6)) -> EnergyModel:
    """Build an :class:`EnergyModel` from flat ``name: number`` pairs."""
    try:
        time = TimeModelParams(float(values["cc_b"]), float(values["cc_k"]), float(values["beta"]))
        power = PowerModelParams(
            float(values.get("p_system", 0.0)), float(values["gamma"]), float(values["eta_alpha_c"])
        )
        vf = LinearVF(float(values["m1"]), float(values["m2"]))
    except KeyError as exc:
        raise InvalidModelError(f"model is missing parameter {exc.args[0]!r}") from None
    f_min = float(values.get("f_min", default_range[0]))
    f_max = float(values.get("f_max", default_range[1]))
    return EnergyModel(time, power, vf, (f_min, f_max))


def model_to_mapping(m: EnergyModel) -> dict:
    if not isinstance(m.vf, LinearVF):
        raise InvalidModelError("only models with a linear voltage map can be serialised")
    return {
        "cc_b": m.time.cc_b,
        "cc_k": m.time.cc_k,
        "beta": m.time.beta,
        "p_system": m.power.p_system,
        "gamma": m.power.gamma,
        "eta_alpha_c": m.power.eta_alpha_c,
        "m1": m.vf.m1,
        "m2": m.vf.m2,
        "f_min": m.f_min,
        "f_max": m.f_max,
    }

