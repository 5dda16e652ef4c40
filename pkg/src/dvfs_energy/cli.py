"""Command-line entry point: ``dvfs-energy <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical failure.
Numbers in reports and plot data use 9 significant digits.  Trace files use the
lossless traces format.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench, fit, model, optimize, traces
from .errors import DomainError, DvfsEnergyError, FitError, InvalidModelError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def g9(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def parse_values(text: str) -> list[float]:
    """``"a,b,c"`` or ``"lo..hi:step"`` (inclusive) into a list of floats."""
    text = text.strip()
    if ".." in text:
        span, _, step = text.partition(":")
        lo, _, hi = span.partition("..")
        try:
            lo_f, hi_f = float(lo), float(hi)
            step_f = float(step) if step else 1.0
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
        if step_f <= 0 or hi_f < lo_f:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        n = int(math.floor((hi_f - lo_f) / step_f + 1e-9)) + 1
        return [round(lo_f + k * step_f, 12) for k in range(n)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None


def parse_int_values(text: str) -> list[int]:
    vals = parse_values(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers in {text!r}")
    return [int(v) for v in vals]


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _non_negative(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _load_table(args) -> model.DvfsTable:
    return model.load_dvfs_table(args.table) if args.table else model.default_table()


def _thermal(args) -> model.ThermalParams:
    return model.ThermalParams(args.r0, args.v0, args.t0, args.b)


def _add_thermal(p):
    g = p.add_argument_group("thermal constants (leakage temperature scaling)")
    d = model.ILLUSTRATIVE_THERMAL
    g.add_argument("--r0", type=_positive, default=d.R0)
    g.add_argument("--v0", type=_positive, default=d.V0, help="volts")
    g.add_argument("--t0", type=_positive, default=d.T0, help="kelvin")
    g.add_argument("--b", type=_positive, default=d.B, help="kelvin")


# ---------------------------------------------------------------------------
# Structured text documents
# ---------------------------------------------------------------------------


def parse_sections(text: str) -> dict[str, dict[str, str]]:
    """``[name]`` headed blocks of ``key = value`` lines; other lines are ignored."""
    sections: dict[str, dict[str, str]] = {"": {}}
    current = ""
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            sections.setdefault(current, {})
            continue
        key, sep, value = s.partition(" = ")
        if sep:
            sections[current][key.strip()] = value.strip()
    return sections


def load_model_file(path, n_log2: Optional[int] = None) -> model.EnergyModel:
    """Read a model from a plain ``key = value`` file or a fit report."""
    sections = parse_sections(Path(path).read_text())
    names = [n for n in sections if n == "model" or n.startswith("model ")]
    if n_log2 is not None:
        names = [n for n in names if n == f"model n_log2={n_log2}"]
        if not names:
            raise InvalidModelError(f"{path} holds no model for n_log2={n_log2}")
    values = sections[names[0]] if names else sections[""]
    try:
        return model.model_from_mapping({k: float(v) for k, v in values.items()})
    except ValueError as exc:
        raise InvalidModelError(f"{path}: {exc}") from None


def format_model(m: model.EnergyModel) -> list[str]:
    return [f"{k} = {g9(v)}" for k, v in model.model_to_mapping(m).items()]


def _config_lines(args) -> list[str]:
    lines = ["[config]"]
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        if isinstance(v, (list, tuple)):
            v = ",".join(g9(x) for x in v)
        lines.append(f"{k} = {g9(v) if v is not None else ''}")
    return lines


def _write(text: str, output) -> None:
    if output is None or str(output) == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _resolve_model(args) -> model.EnergyModel:
    if args.model in (None, "canonical"):
        return model.canonical_model(_load_table(args))
    return load_model_file(args.model, getattr(args, "n_log2", None))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    table = _load_table(args)
    tp = model.TimeModelParams(args.cc_b, args.cc_k, args.beta)
    pp = model.PowerModelParams(args.p_system, args.gamma, args.eta_alpha_c)
    ts = traces.synth_generate(
        tp,
        pp,
        table,
        args.noise,
        args.seed,
        samples_per_freq=args.samples_per_freq,
        n_log2=args.n_log2,
        ref_temp_c=args.ref_temp,
        temp_spread_c=args.temp_spread,
        thermal=_thermal(args),
    )
    traces.save_traces(ts, args.output)
    return EXIT_OK


def cmd_fit(args) -> int:
    table = _load_table(args)
    ts = traces.load_traces(args.traces, strict=not args.lenient)
    ts.check_table(table)
    want_time = args.only in ("all", "time")
    want_power = args.only in ("all", "power")
    ref = None
    if want_power and not args.no_temp_filter:
        ref = args.ref_temp if args.ref_temp is not None else ts.ref_temp_c
        if ref is not None and any(s.temperature is None for s in ts.power):
            ref = None
    result = fit.fit_traces(
        ts,
        table,
        exclude=args.exclude,
        ref_temp_c=ref,
        temp_tol=args.temp_tol,
        fit_time=want_time,
        fit_power=want_power,
    )

    lines = ["# dvfs_energy fit report"] + _config_lines(args)
    lines.append(f"effective_ref_temp_c = {g9(ref) if ref is not None else ''}")
    failed = []
    p = result.power
    if p is not None:
        lines += [
            "[power]",
            f"p_system = {g9(p.params.p_system)}",
            f"gamma = {g9(p.params.gamma)}",
            f"eta_alpha_c = {g9(p.params.eta_alpha_c)}",
            f"mean_abs_pct_error = {g9(p.mean_abs_pct_error)}",
            f"iterations = {p.iterations}",
            f"converged = {g9(p.converged)}",
        ]
        if not p.converged:
            failed.append("power")
    for s in result.sizes:
        t = s.time
        lines += [
            f"[time n_log2={s.n_log2}]",
            f"cc_b = {g9(t.params.cc_b)}",
            f"cc_k = {g9(t.params.cc_k)}",
            f"beta = {g9(t.params.beta)}",
            f"asymptote_ghz = {g9(t.params.asymptote)}",
            f"mean_abs_pct_error = {g9(t.mean_abs_pct_error)}",
            f"iterations = {t.iterations}",
            f"converged = {g9(t.converged)}",
        ]
        if not t.converged:
            failed.append(f"time n_log2={s.n_log2}")
        if s.model is not None:
            lines += [f"[model n_log2={s.n_log2}]"] + format_model(s.model)
        rows = {"error t": t.per_freq_abs_pct_error}
        if p is not None:
            rows["error P"] = p.per_freq_abs_pct_error
            rows["error E"] = s.energy_errors
        lines += [f"[errors n_log2={s.n_log2}]", fit.format_error_table(rows, result.excluded)]
    if len(result.sizes) > 1:
        rows = {"error t": result.pooled_time_errors()}
        if p is not None:
            rows["error P"] = p.per_freq_abs_pct_error
            rows["error E"] = result.pooled_energy_errors()
        lines += ["[errors pooled]", fit.format_error_table(rows, result.excluded)]
    elif not result.sizes and p is not None:
        lines += ["[errors]", fit.format_error_table({"error P": p.per_freq_abs_pct_error}, result.excluded)]
    _write("\n".join(lines) + "\n", args.output)
    if failed:
        print(f"fit did not converge: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def curve_data(m: model.EnergyModel, points: int, f_min=None, f_max=None):
    lo = m.f_min if f_min is None else f_min
    hi = m.f_max if f_max is None else f_max
    if not hi > lo:
        raise UsageError("--f-max must exceed --f-min")
    grid = np.linspace(lo, hi, points)
    feasible = grid**m.time.beta > m.time.cc_k
    if not np.all(feasible):
        print(
            f"warning: {int((~feasible).sum())} grid points at or below the asymptote "
            f"{m.time.asymptote:.6g} GHz were clipped",
            file=sys.stderr,
        )
        grid = grid[feasible]
    if grid.size < 2:
        raise DomainError("grid lies entirely below the asymptote")
    wide = m.with_params(freq_range=(float(grid[0]), float(grid[-1])))
    V = wide.vf.voltage(grid)
    return {
        "freq_ghz": grid,
        "time_s": np.asarray(model.exec_time(wide.time, grid)),
        "power_w": np.asarray(model.total_power(wide.power, grid, V)),
        "energy_j": np.asarray(model.cpu_energy(wide, grid)),
        "denergy_dfreq": np.asarray(model.energy_derivative(wide, grid)),
    }


def _columns_text(cols: dict) -> str:
    names = list(cols)
    lines = [",".join(names)]
    for row in zip(*(cols[n] for n in names)):
        lines.append(",".join(g9(float(v)) if not isinstance(v, str) else v for v in row))
    return "\n".join(lines) + "\n"


def cmd_curve(args) -> int:
    m = _resolve_model(args)
    _write(_columns_text(curve_data(m, args.points, args.f_min, args.f_max)), args.output)
    return EXIT_OK


def _opt_lines(name: str, r: optimize.OptResult) -> list[str]:
    return [
        f"[{name}]",
        f"f_opt_ghz = {g9(r.f_opt)}",
        f"e_min_j = {g9(r.e_min)}",
        f"method = {r.method}",
        f"bracket_lo_ghz = {g9(r.bracket[0])}",
        f"bracket_hi_ghz = {g9(r.bracket[1])}",
        f"residual_at_opt = {g9(r.residual_at_opt)}",
        f"boundary = {g9(r.boundary)}",
        f"degenerate = {g9(r.degenerate)}",
    ]


def cmd_fopt(args) -> int:
    m = _resolve_model(args)
    cont = optimize.find_fopt_continuous(m, args.tol)
    lines = ["# dvfs_energy optimum report"] + _config_lines(args)
    lines += ["[model]"] + format_model(m)
    lines += _opt_lines("continuous", cont)
    if args.discrete:
        disc = optimize.find_fopt_discrete(m, _load_table(args))
        lines += _opt_lines("discrete", disc)
        lines.append(f"gap_ghz = {g9(abs(disc.f_opt - cont.f_opt))}")
    _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def _status(p: optimize.SweepPoint) -> str:
    if not p.ok:
        return "invalid"
    return p.message if p.message in ("boundary", "degenerate") else "ok"


def cmd_sweep(args) -> int:
    m = _resolve_model(args)
    if args.param == "temperature":
        pts = optimize.temperature_sweep(m, _thermal(args), args.values, args.ref_temp, args.tol)
    else:
        pts = optimize.sensitivity_sweep(m, args.param, args.values, args.tol)
    cols = {
        "value": [p.value for p in pts],
        "f_opt_ghz": [p.f_opt for p in pts],
        "e_min_j": [p.e_min for p in pts],
        "status": [_status(p) for p in pts],
    }
    _write(_columns_text(cols), args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    bad = [n for n in args.n if not bench.MIN_LOG2 <= n <= bench.MAX_LOG2]
    if bad:
        raise UsageError(f"--n values {bad} outside [{bench.MIN_LOG2}, {bench.MAX_LOG2}]")
    medians, raw = bench.bench_traces(
        args.n,
        args.min_duration,
        args.copies,
        args.repeats,
        frequencies=args.sweep_freqs,
        set_freq_cmd=args.set_freq_cmd,
        frequency_ghz=args.freq,
    )
    traces.save_traces(medians, args.output)
    if args.raw:
        traces.save_traces(raw, args.raw)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dvfs-energy", description="DVFS energy model toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, with_model=False):
        p.add_argument("--table", type=Path, help="DVFS table (default: bundled Galaxy S2 table)")
        if with_model:
            p.add_argument("--model", help="model file or fit report (default: canonical)")
            p.add_argument("--n-log2", type=int, help="pick this input size from a fit report")
        return p

    g = common(sub.add_parser("gen", help="generate synthetic traces"))
    g.add_argument("--noise", type=_non_negative, default=0.0, help="noise sigma, percent")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", type=Path, required=True)
    gt, gp = model.GENERATOR_TIME, model.GENERATOR_POWER
    g.add_argument("--cc-b", type=_positive, default=gt.cc_b)
    g.add_argument("--cc-k", type=_non_negative, default=gt.cc_k, help="GHz**beta")
    g.add_argument("--beta", type=_positive, default=gt.beta)
    g.add_argument("--p-system", type=_non_negative, default=gp.p_system)
    g.add_argument("--gamma", type=_non_negative, default=gp.gamma)
    g.add_argument("--eta-alpha-c", type=_positive, default=gp.eta_alpha_c)
    g.add_argument("--samples-per-freq", type=int, default=32)
    g.add_argument("--n-log2", type=int, default=10)
    g.add_argument("--ref-temp", type=float, default=37.0, help="degrees C")
    g.add_argument("--temp-spread", type=_non_negative, default=0.0, help="degrees C")
    _add_thermal(g)
    g.set_defaults(func=cmd_gen)

    f = common(sub.add_parser("fit", help="fit time/power models and report errors"))
    f.add_argument("traces", type=Path)
    f.add_argument("-o", "--output", type=Path)
    f.add_argument("--exclude", type=parse_values, action="extend", default=[],
                   help="frequencies (GHz) left out of the residuals")
    f.add_argument("--only", choices=("all", "time", "power"), default="all")
    f.add_argument("--ref-temp", type=float, help="degrees C (default: from trace metadata)")
    f.add_argument("--temp-tol", type=_positive, default=0.5, help="degrees C")
    f.add_argument("--no-temp-filter", action="store_true")
    f.add_argument("--lenient", action="store_true", help="warn on unknown columns")
    f.set_defaults(func=cmd_fit)

    c = common(sub.add_parser("curve", help="tabulate t(f), P(f), E(f), dE/df"), True)
    c.add_argument("--points", type=int, default=1000)
    c.add_argument("--f-min", type=_positive)
    c.add_argument("--f-max", type=_positive)
    c.add_argument("-o", "--output", type=Path)
    c.set_defaults(func=cmd_curve)

    o = common(sub.add_parser("fopt", help="energy-optimal frequency"), True)
    o.add_argument("--discrete", action="store_true", help="also argmin over the DVFS table")
    o.add_argument("--tol", type=_positive, default=optimize.DEFAULT_TOL, help="GHz")
    o.add_argument("-o", "--output", type=Path)
    o.set_defaults(func=cmd_fopt)

    s = common(sub.add_parser("sweep", help="f_opt as one parameter varies"), True)
    s.add_argument("--param", required=True, choices=optimize.SWEEP_PARAMS + ("temperature",))
    s.add_argument("--values", type=parse_values, required=True, help="a,b,c or lo..hi:step")
    s.add_argument("--ref-temp", type=float, default=37.0, help="temperature gamma was fitted at, C")
    s.add_argument("--tol", type=_positive, default=optimize.DEFAULT_TOL)
    s.add_argument("-o", "--output", type=Path)
    _add_thermal(s)
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="time the bit-reverse kernel")
    b.add_argument("--n", type=parse_int_values, default=list(range(6, 21, 2)), help="e.g. 6..20:2")
    b.add_argument("--copies", type=int, default=128)
    b.add_argument("--repeats", type=int, default=32)
    b.add_argument("--min-duration", type=_positive, default=3.0, help="seconds")
    b.add_argument("--freq", type=_positive, help="tag samples with this GHz value")
    b.add_argument("--sweep-freqs", type=parse_values, help="GHz list; needs --set-freq-cmd")
    b.add_argument("--set-freq-cmd", help="shell template with {ghz}/{mhz}/{khz}")
    b.add_argument("-o", "--output", type=Path, required=True)
    b.add_argument("--raw", type=Path, help="also dump every repetition here")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitError, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DvfsEnergyError, OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
