"""Gold-Rader bit-reverse kernel and a single-threaded timing harness.

The harness never changes the host CPU frequency on its own.  Samples are
tagged with the nominal frequency; a DVFS sweep needs an explicit shell
command (``set_freq_cmd``) that the platform provides.  Never run two timing
sessions concurrently.
"""

from __future__ import annotations

import logging
import statistics
import subprocess
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .traces import TimeSample, TraceSet

log = logging.getLogger(__name__)

MIN_LOG2 = 6
MAX_LOG2 = 20


def make_complex_array(n_log2: int, seed: int = 0) -> np.ndarray:
    """Random array of 2**n_log2 complex values stored as int32 (re, im) pairs."""
    if not MIN_LOG2 <= n_log2 <= MAX_LOG2:
        raise ValueError(f"n_log2 must lie in [{MIN_LOG2}, {MAX_LOG2}]")
    rng = np.random.default_rng(seed)
    return rng.integers(-(2**31), 2**31, size=(2**n_log2, 2), dtype=np.int32)


def _as_words(data: np.ndarray) -> np.ndarray:
    # One 64-bit word per complex element, so a swap moves both halves together.
    if data.ndim == 2 and data.shape[1] == 2 and data.dtype == np.int32 and data.flags.c_contiguous:
        return data.view(np.int64).reshape(-1)
    return data


def bit_reverse_gold_rader(data):
    """Permute ``data`` in place into bit-reversed index order and return it.

    Follows the reference Gold-Rader loop: ``j`` tracks the reversed counterpart
    of ``i`` and is advanced by the carry-propagating ``k`` loop.
    """
    n = len(data)
    if n < 1 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    a = _as_words(data) if isinstance(data, np.ndarray) else data
    nm1 = n - 1
    j = 0
    for i in range(nm1):
        k = n >> 1
        if i < j:
            a[i], a[j] = a[j], a[i]
        while k <= j:
            j -= k
            k >>= 1
        j += k
    return data


def naive_bit_reverse_index(i: int, n_bits: int) -> int:
    if n_bits < 0 or not 0 <= i < (1 << n_bits):
        raise ValueError(f"index {i} out of range for {n_bits} bits")
    out = 0
    for _ in range(n_bits):
        out = (out << 1) | (i & 1)
        i >>= 1
    return out


def nominal_frequency_ghz() -> float:
    """Best-effort nominal CPU frequency of the host."""
    try:
        import psutil

        freq = psutil.cpu_freq()
        if freq is not None:
            mhz = freq.max or freq.current
            if mhz:
                return mhz / 1000.0
    except (ImportError, NotImplementedError, OSError):
        pass
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.lower().startswith("cpu mhz"):
                return float(line.split(":")[1]) / 1000.0
    except OSError:
        pass
    raise RuntimeError("cannot determine the CPU frequency; pass it explicitly")


def set_frequency(cmd_template: str, f_ghz: float) -> None:
    """Run the platform hook, e.g. ``cpupower frequency-set -f {mhz}MHz``."""
    cmd = cmd_template.format(ghz=f_ghz, mhz=round(f_ghz * 1000), khz=round(f_ghz * 1e6))
    subprocess.run(cmd, shell=True, check=True)


def _run_unit(buf: np.ndarray, copies: int) -> None:
    for _ in range(copies):
        bit_reverse_gold_rader(buf)


def run_timing(
    n_values: Sequence[int],
    min_duration: float = 3.0,
    copies: int = 128,
    repeats: int = 32,
    *,
    frequency_ghz: Optional[float] = None,
    timer: Callable[[], float] = time.perf_counter,
    notes: Optional[list] = None,
) -> list[TimeSample]:
    """Time the kernel with the 32-repeat, 128-copy, 3-second protocol.

    A unit is ``copies`` sequential kernel calls.  For every N and each of
    ``repeats`` repetitions, units run back to back until ``min_duration`` has
    elapsed.  Each repetition yields one :class:`TimeSample` whose ``elapsed`` is
    seconds per unit per element and whose ``repetitions`` is the unit count.
    One untimed warm-up unit precedes each N.  Use :func:`median_samples` to
    reduce repetitions to one row per N.
    """
    if copies < 1 or repeats < 1:
        raise ValueError("copies and repeats must be >= 1")
    f = frequency_ghz if frequency_ghz is not None else nominal_frequency_ghz()
    resolution = time.get_clock_info("perf_counter").resolution
    out: list[TimeSample] = []
    for n_log2 in n_values:
        elems = 2**n_log2
        buf = make_complex_array(n_log2)
        _run_unit(buf, copies)
        for _ in range(repeats):
            units = 0
            start = timer()
            while True:
                _run_unit(buf, copies)
                units += 1
                elapsed = timer() - start
                if elapsed >= min_duration:
                    break
            # Coarse or fake timers can report zero; fall back to one resolution step.
            per_unit = max(elapsed, resolution, 1e-12) / units
            if resolution > 0.01 * per_unit and notes is not None:
                msg = f"timer resolution {resolution:.3g}s exceeds 1% of unit time at N={n_log2}"
                if msg not in notes:
                    notes.append(msg)
                    log.warning(msg)
            out.append(TimeSample(f, n_log2, per_unit / elems, units))
    return out


def median_samples(samples: Sequence[TimeSample]) -> list[TimeSample]:
    """Collapse repetitions to the median per (frequency, N)."""
    groups: dict[tuple[float, int], list[TimeSample]] = {}
    for s in samples:
        groups.setdefault((s.frequency, s.input_size_log2), []).append(s)
    return [
        TimeSample(f, n, statistics.median(s.elapsed for s in group), len(group))
        for (f, n), group in groups.items()
    ]


def bench_traces(
    n_values: Sequence[int],
    min_duration: float = 3.0,
    copies: int = 128,
    repeats: int = 32,
    frequencies: Optional[Sequence[float]] = None,
    set_freq_cmd: Optional[str] = None,
    frequency_ghz: Optional[float] = None,
) -> tuple[TraceSet, TraceSet]:
    """Run the protocol and return (median traces, raw repetition traces).

    With ``frequencies`` and ``set_freq_cmd`` the hook is invoked before each
    frequency; otherwise a single run is tagged with ``frequency_ghz`` or the
    host's nominal frequency.
    """
    notes: list[str] = []
    raw: list[TimeSample] = []
    if frequencies:
        if not set_freq_cmd:
            raise ValueError("sweeping frequencies needs a set_freq_cmd hook")
        for f in frequencies:
            set_frequency(set_freq_cmd, f)
            raw += run_timing(n_values, min_duration, copies, repeats, frequency_ghz=f, notes=notes)
    else:
        raw = run_timing(
            n_values, min_duration, copies, repeats, frequency_ghz=frequency_ghz, notes=notes
        )
    meta = {
        "device": "host",
        "notes": "; ".join(notes) or "single-threaded timing run",
        "protocol": {"copies": copies, "repeats": repeats, "min_duration_s": min_duration},
    }
    return TraceSet((), tuple(median_samples(raw)), meta), TraceSet((), tuple(raw), dict(meta))
