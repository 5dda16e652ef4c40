"""Trace records, the columnar trace file format, energy integration and the
synthetic ground-truth generator.

File layout (comma-separated, one header line per section)::

    #meta:device="synthetic"
    #meta:ref_temp_c=37.0
    #section:power
    t_s,power_w,freq_ghz,temp_c
    0.0,0.61,0.2,37.0
    #section:time
    freq_ghz,n_log2,elapsed_s,reps
    0.2,10,35.29,1

``temp_c`` may be left empty.  ``#meta:`` values are JSON literals.  Floats are
written with ``repr`` so a save/load round trip is bit-exact.  Frequencies are
GHz; ``cc_k`` in any accompanying model carries units of GHz**beta.
"""

from __future__ import annotations

import bisect
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, TraceFormatError
from .model import (
    ILLUSTRATIVE_THERMAL,
    DvfsTable,
    PowerModelParams,
    ThermalParams,
    TimeModelParams,
    celsius_to_kelvin,
    exec_time,
    scale_gamma,
    total_power,
)

POWER_COLUMNS = ("t_s", "power_w", "freq_ghz", "temp_c")
TIME_COLUMNS = ("freq_ghz", "n_log2", "elapsed_s", "reps")

# Truncation of the multiplicative noise, in standard deviations.
NOISE_TRUNCATION = 4.0


@dataclass(frozen=True)
class PowerSample:
    timestamp: float
    power: float
    frequency: float
    temperature: Optional[float] = None  # degrees C

    def __post_init__(self):
        if not self.power >= 0:
            raise ValueError(f"power must be >= 0, got {self.power}")


@dataclass(frozen=True)
class TimeSample:
    frequency: float
    input_size_log2: int
    elapsed: float
    repetitions: int = 1

    def __post_init__(self):
        if not self.elapsed > 0:
            raise ValueError(f"elapsed must be > 0, got {self.elapsed}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class TraceSet:
    power: tuple[PowerSample, ...] = ()
    time: tuple[TimeSample, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "power", tuple(self.power))
        object.__setattr__(self, "time", tuple(self.time))
        ts = [s.timestamp for s in self.power]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("power timestamps must be non-decreasing")

    @property
    def ref_temp_c(self) -> Optional[float]:
        return self.metadata.get("ref_temp_c")

    def power_frequencies(self) -> list[float]:
        return sorted({s.frequency for s in self.power})

    def time_frequencies(self) -> list[float]:
        return sorted({s.frequency for s in self.time})

    def sizes(self) -> list[int]:
        return sorted({s.input_size_log2 for s in self.time})

    def power_pairs(self) -> list[tuple[float, float]]:
        return [(s.frequency, s.power) for s in self.power]

    def time_pairs(self, n_log2: Optional[int] = None) -> list[tuple[float, float]]:
        return [
            (s.frequency, s.elapsed)
            for s in self.time
            if n_log2 is None or s.input_size_log2 == n_log2
        ]

    def check_table(self, table: DvfsTable):
        missing = sorted(
            {s.frequency for s in self.power} | {s.frequency for s in self.time}
        )
        missing = [f for f in missing if not table.contains(f)]
        if missing:
            raise ValueError(f"frequencies {missing} are not in the DVFS table")


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def save_traces(traces: TraceSet, path) -> None:
    lines = []
    for key in sorted(traces.metadata):
        lines.append(f"#meta:{key}={json.dumps(traces.metadata[key], sort_keys=True)}")
    lines.append("#section:power")
    lines.append(",".join(POWER_COLUMNS))
    for s in traces.power:
        lines.append(",".join(_fmt(v) for v in (s.timestamp, s.power, s.frequency, s.temperature)))
    lines.append("#section:time")
    lines.append(",".join(TIME_COLUMNS))
    for s in traces.time:
        lines.append(
            ",".join(_fmt(v) for v in (s.frequency, s.input_size_log2, s.elapsed, s.repetitions))
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_float(text: str, what: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise TraceFormatError(f"{what}: cannot parse {text!r} as a number", line=lineno) from None


def _parse_int(text: str, what: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise TraceFormatError(f"{what}: cannot parse {text!r} as an integer", line=lineno) from None


def load_traces(path, strict: bool = True) -> TraceSet:
    """Parse a trace file.

    Unknown columns raise :class:`TraceFormatError` when ``strict``; otherwise
    they are ignored with a warning.
    """
    text = Path(path).read_text()
    metadata: dict = {}
    power: list[PowerSample] = []
    time: list[TimeSample] = []
    section = None
    columns: Optional[list[str]] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#meta:"):
            key, sep, value = line[len("#meta:"):].partition("=")
            if not sep:
                raise TraceFormatError("metadata line needs key=value", line=lineno)
            try:
                metadata[key] = json.loads(value)
            except json.JSONDecodeError:
                raise TraceFormatError(f"bad metadata value for {key!r}", line=lineno) from None
            continue
        if line.startswith("#section:"):
            section = line[len("#section:"):]
            if section not in ("power", "time"):
                raise TraceFormatError(f"unknown section {section!r}", line=lineno)
            columns = None
            continue
        if line.startswith("#"):
            continue
        if section is None:
            raise TraceFormatError("data before any #section: line", line=lineno)

        cells = [c.strip() for c in raw.split(",")]
        known = POWER_COLUMNS if section == "power" else TIME_COLUMNS
        if columns is None:
            columns = cells
            unknown = [c for c in columns if c not in known]
            if unknown:
                msg = f"unknown {section} columns {unknown}"
                if strict:
                    raise TraceFormatError(msg, line=lineno)
                warnings.warn(f"line {lineno}: {msg}; ignoring them")
            required = [c for c in known if c != "temp_c"]
            absent = [c for c in required if c not in columns]
            if absent:
                raise TraceFormatError(f"missing {section} columns {absent}", line=lineno)
            if len(set(columns)) != len(columns):
                raise TraceFormatError("duplicate column names", line=lineno)
            continue

        if len(cells) != len(columns):
            raise TraceFormatError(
                f"expected {len(columns)} fields, found {len(cells)}", line=lineno
            )
        row = dict(zip(columns, cells))
        try:
            if section == "power":
                temp = row.get("temp_c", "")
                power.append(
                    PowerSample(
                        timestamp=_parse_float(row["t_s"], "t_s", lineno),
                        power=_parse_float(row["power_w"], "power_w", lineno),
                        frequency=_parse_float(row["freq_ghz"], "freq_ghz", lineno),
                        temperature=_parse_float(temp, "temp_c", lineno) if temp else None,
                    )
                )
                if len(power) > 1 and power[-1].timestamp < power[-2].timestamp:
                    raise ValueError("timestamps must be non-decreasing")
            else:
                time.append(
                    TimeSample(
                        frequency=_parse_float(row["freq_ghz"], "freq_ghz", lineno),
                        input_size_log2=_parse_int(row["n_log2"], "n_log2", lineno),
                        elapsed=_parse_float(row["elapsed_s"], "elapsed_s", lineno),
                        repetitions=_parse_int(row["reps"], "reps", lineno),
                    )
                )
        except ValueError as exc:
            if isinstance(exc, TraceFormatError):
                raise
            raise TraceFormatError(f"invalid {section} row: {exc}", line=lineno) from None

    return TraceSet(tuple(power), tuple(time), metadata)


# ---------------------------------------------------------------------------
# Integration and filtering
# ---------------------------------------------------------------------------


def integrate_energy(
    samples: Sequence[PowerSample], window: Optional[tuple[float, float]] = None
) -> float:
    """Trapezoidal integral of power over ``window`` (default: the whole trace).

    Window edges that fall between samples are linearly interpolated, so the
    integral is additive over adjacent windows for any split point.  Parts of
    the window outside the sampled span contribute nothing.
    """
    t = np.array([s.timestamp for s in samples], dtype=float)
    p = np.array([s.power for s in samples], dtype=float)
    if np.any(np.diff(t) < 0):
        raise ValueError("timestamps must be sorted")
    if window is not None:
        t0, t1 = window
        if t1 < t0:
            raise ValueError("window end precedes its start")
        inside = (t >= t0) & (t <= t1)
        if np.count_nonzero(inside) < 2:
            raise InsufficientDataError("need at least two power samples inside the window")
        lo, hi = max(t0, t[0]), min(t1, t[-1])
        keep = (t > lo) & (t < hi)
        t_all, p_all = t, p
        t = np.concatenate(([lo], t[keep], [hi]))
        p = np.concatenate(([np.interp(lo, t_all, p_all)], p[keep], [np.interp(hi, t_all, p_all)]))
    if t.size < 2:
        raise InsufficientDataError("need at least two power samples inside the window")
    return float(np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(t)))


def mean_power_energy(mean_power: float, elapsed: float) -> float:
    """Energy under the constant-power assumption: mean power times elapsed time."""
    return mean_power * elapsed


def select_at_temperature(traces: TraceSet, ref: float, tol: float = 0.5) -> TraceSet:
    """Keep power samples within ``tol`` degrees C of ``ref``; time samples pass through."""
    if any(s.temperature is None for s in traces.power):
        raise InsufficientDataError("power samples carry no temperature readings")
    kept = tuple(s for s in traces.power if abs(s.temperature - ref) <= tol)
    if not kept:
        raise InsufficientDataError(
            f"no power samples within {tol} C of {ref} C; widen the tolerance"
        )
    return replace(traces, power=kept)


def align_temperatures(
    power_times: Sequence[float], temp_times: Sequence[float], temps: Sequence[float]
) -> list[Optional[float]]:
    """Assign each power timestamp the latest temperature reading at or before it.

    Power samples earlier than the first reading get ``None``.
    """
    out: list[Optional[float]] = []
    for t in power_times:
        i = bisect.bisect_right(temp_times, t) - 1
        out.append(temps[i] if i >= 0 else None)
    return out


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------


def _noise(rng: np.random.Generator, sigma: float, size: int) -> np.ndarray:
    """Zero-mean normal noise, rejection-truncated at +-NOISE_TRUNCATION sigma."""
    if sigma == 0:
        return np.zeros(size)
    eps = rng.normal(0.0, sigma, size)
    bad = np.abs(eps) > NOISE_TRUNCATION * sigma
    while np.any(bad):
        eps[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = np.abs(eps) > NOISE_TRUNCATION * sigma
    return eps


def synth_generate(
    time_p: TimeModelParams,
    power_p: PowerModelParams,
    table: DvfsTable,
    noise_pct: float = 0.0,
    seed: int = 0,
    *,
    samples_per_freq: int = 32,
    n_log2: int = 10,
    ref_temp_c: float = 37.0,
    temp_spread_c: float = 0.0,
    thermal: ThermalParams = ILLUSTRATIVE_THERMAL,
    sample_rate_hz: float = 5000.0,
) -> TraceSet:
    """Generate ground-truth traces at every table frequency.

    One :class:`TimeSample` per frequency follows the execution-time law and
    ``samples_per_freq`` power samples follow the total-power law with the table
    voltage.  Each value is multiplied by ``1 + eps``, ``eps ~ N(0, noise_pct/100)``
    truncated at 4 sigma.  With ``temp_spread_c > 0`` the power samples are spread
    uniformly over ``ref_temp_c +- temp_spread_c`` and ``gamma`` is rescaled to each
    sample's temperature with ``thermal``; ``power_p.gamma`` is the value at
    ``ref_temp_c``.
    """
    if noise_pct < 0:
        raise ValueError("noise_pct must be >= 0")
    if samples_per_freq < 1:
        raise ValueError("samples_per_freq must be >= 1")
    freqs = table.frequencies
    if np.any(freqs**time_p.beta <= time_p.cc_k):
        bad = freqs[freqs**time_p.beta <= time_p.cc_k]
        raise InsufficientDataError(
            f"table frequencies {bad.tolist()} are at or below the asymptote"
        )
    rng = np.random.default_rng(seed)
    sigma = noise_pct / 100.0
    dt = 1.0 / sample_rate_hz
    t_ref_k = celsius_to_kelvin(ref_temp_c)

    power: list[PowerSample] = []
    time: list[TimeSample] = []
    clock = 0.0
    for f, v in table.entries:
        t_true = exec_time(time_p, f)
        time.append(TimeSample(f, n_log2, t_true * (1.0 + float(_noise(rng, sigma, 1)[0])), 1))

        if temp_spread_c > 0:
            temps = ref_temp_c + rng.uniform(-temp_spread_c, temp_spread_c, samples_per_freq)
            gammas = scale_gamma(power_p.gamma, thermal, celsius_to_kelvin(temps), t_ref_k)
        else:
            temps = np.full(samples_per_freq, ref_temp_c)
            gammas = np.full(samples_per_freq, power_p.gamma)
        eps = _noise(rng, sigma, samples_per_freq)
        for k in range(samples_per_freq):
            p_true = total_power(replace(power_p, gamma=float(gammas[k])), f, v)
            power.append(PowerSample(clock, p_true * (1.0 + float(eps[k])), f, float(temps[k])))
            clock += dt

    metadata = {
        "device": "synthetic",
        "ref_temp_c": ref_temp_c,
        "seed": seed,
        "noise_pct": noise_pct,
        "notes": "generated by synth_generate",
    }
    return TraceSet(tuple(power), tuple(time), metadata)


def group_mean(pairs: Iterable[tuple[float, float]]) -> dict[float, float]:
    """Mean of y per distinct x."""
    acc: dict[float, list[float]] = {}
    for x, y in pairs:
        acc.setdefault(x, []).append(y)
    return {x: math.fsum(ys) / len(ys) for x, ys in sorted(acc.items())}
