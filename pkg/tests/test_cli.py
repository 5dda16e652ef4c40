import subprocess
import sys

import numpy as np
import pytest

from dvfs_energy import cli, traces
from dvfs_energy.optimize import check_unimodal_values


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_columns(path):
    lines = path.read_text().splitlines()
    names = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return {n: [r[i] for r in rows] for i, n in enumerate(names)}


def error_rows(text, section):
    sec = text.split(f"[{section}]\n", 1)[1].split("\n[", 1)[0].strip().splitlines()
    freqs = [float(x) for x in sec[0].split(",")[1:]]
    return {line.split(",")[0]: dict(zip(freqs, line.split(",")[1:])) for line in sec[1:]}


@pytest.fixture(scope="module")
def clean_traces(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "clean.csv"
    assert run("gen", "--noise", 0, "--seed", 1, "-o", p) == 0
    return p


def test_parse_values_forms():
    assert cli.parse_values("0.5,0.9") == [0.5, 0.9]
    assert cli.parse_values("0.1..0.4:0.1") == [0.1, 0.2, 0.3, 0.4]
    assert cli.parse_int_values("6..20:2") == [6, 8, 10, 12, 14, 16, 18, 20]


def test_parser_accepts_bench_range():
    args = cli.build_parser().parse_args(["bench", "--n", "6..20:2", "-o", "x"])
    assert args.n == list(range(6, 21, 2))


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("gen", "--noise", 1, "--seed", 7, "-o", a) == 0
    assert run("gen", "--noise", 1, "--seed", 7, "-o", b) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    run("gen", "--noise", 1, "--seed", 8, "-o", c)
    assert c.read_bytes() != a.read_bytes()


def test_gen_rejects_negative_noise(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("gen", "--noise", -1, "-o", tmp_path / "x.csv")
    assert exc.value.code == cli.EXIT_USAGE


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 1


def test_fit_noiseless_errors_tiny(clean_traces, tmp_path):
    out = tmp_path / "report.txt"
    assert run("fit", clean_traces, "-o", out) == 0
    rows = error_rows(out.read_text(), "errors n_log2=10")
    assert set(rows) == {"error t", "error P", "error E"}
    for row in rows.values():
        assert len(row) == 15
        assert all(float(v) < 0.01 for v in row.values())


def test_fit_exclude_marks_cells(clean_traces, tmp_path):
    out = tmp_path / "report.txt"
    assert run("fit", clean_traces, "--exclude", 1.5, "-o", out) == 0
    text = out.read_text()
    rows = error_rows(text, "errors n_log2=10")
    assert all(r[1.5] == "excluded" for r in rows.values())
    assert all(r[1.4] != "excluded" for r in rows.values())
    assert "exclude = 1.5" in text


def test_fit_report_embeds_configuration(clean_traces, tmp_path):
    out = tmp_path / "report.txt"
    run("fit", clean_traces, "--temp-tol", 0.75, "-o", out)
    text = out.read_text()
    for key in ("[config]", "temp_tol = 0.75", "traces = ", "[power]", "[time n_log2=10]", "[model n_log2=10]"):
        assert key in text


def test_fit_report_model_round_trips(clean_traces, tmp_path):
    out = tmp_path / "report.txt"
    run("fit", clean_traces, "-o", out)
    m = cli.load_model_file(out, 10)
    assert m.time.beta == pytest.approx(1.0, rel=1e-6)
    assert m.power.gamma == pytest.approx(0.3, rel=1e-6)
    assert run("fopt", "--model", out, "-o", tmp_path / "o.txt") == 0


def test_fit_only_time(clean_traces, tmp_path):
    out = tmp_path / "report.txt"
    assert run("fit", clean_traces, "--only", "time", "-o", out) == 0
    text = out.read_text()
    assert "[power]" not in text and "error t" in text


def test_fit_missing_power_section_fails(tmp_path):
    src = tmp_path / "clean.csv"
    run("gen", "-o", src)
    ts = traces.load_traces(src)
    p = tmp_path / "time_only.csv"
    traces.save_traces(traces.TraceSet((), ts.time, ts.metadata), p)
    code = run("fit", p, "-o", tmp_path / "r.txt")
    assert code != 0
    assert code == cli.EXIT_DATA


def test_fit_malformed_file_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("#section:power\nt_s,power_w,freq_ghz,temp_c\n0.0,abc,1.0,\n")
    assert run("fit", p) == cli.EXIT_DATA
    assert "line 3" in capsys.readouterr().err


def test_fit_missing_file_exit_code(tmp_path):
    assert run("fit", tmp_path / "nope.csv") == cli.EXIT_DATA


def test_curve_shapes(tmp_path):
    out = tmp_path / "curve.csv"
    assert run("curve", "--points", 500, "-o", out) == 0
    cols = read_columns(out)
    assert list(cols) == ["freq_ghz", "time_s", "power_w", "energy_j", "denergy_dfreq"]
    t = np.array(cols["time_s"], float)
    e = np.array(cols["energy_j"], float)
    d = np.array(cols["denergy_dfreq"], float)
    assert len(t) == 500
    assert np.all(np.diff(t) < 0)
    assert check_unimodal_values(e, rtol=1e-8).unimodal
    assert np.count_nonzero(np.diff(np.sign(d)) != 0) == 1


def test_curve_clips_below_asymptote(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    assert run("curve", "--f-min", 0.05, "--f-max", 1.0, "--points", 96, "-o", out) == 0
    assert "clipped" in capsys.readouterr().err
    f = np.array(read_columns(out)["freq_ghz"], float)
    assert f.min() > 0.115 and len(f) < 96


def test_curve_values_have_nine_significant_digits(tmp_path):
    out = tmp_path / "curve.csv"
    run("curve", "--points", 7, "-o", out)
    cell = read_columns(out)["energy_j"][3]
    assert len(cell.replace(".", "").lstrip("0")) <= 9


def test_fopt_canonical(tmp_path):
    out = tmp_path / "o.txt"
    assert run("fopt", "--discrete", "-o", out) == 0
    sec = cli.parse_sections(out.read_text())
    f_cont = float(sec["continuous"]["f_opt_ghz"])
    f_disc = float(sec["discrete"]["f_opt_ghz"])
    assert 0.55 <= f_cont <= 0.85
    assert f_disc in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6)
    assert abs(f_disc - f_cont) <= 0.1
    assert float(sec["discrete"]["gap_ghz"]) == pytest.approx(abs(f_disc - f_cont), abs=1e-8)


def test_fopt_plain_model_file(tmp_path):
    mf = tmp_path / "m.txt"
    mf.write_text("cc_b = 1\ncc_k = 0\nbeta = 2\np_system = 0\ngamma = 0\neta_alpha_c = 1\nm1 = 0\nm2 = 1\n")
    out = tmp_path / "o.txt"
    assert run("fopt", "--model", mf, "-o", out) == 0
    sec = cli.parse_sections(out.read_text())["continuous"]
    assert float(sec["f_opt_ghz"]) == 1.6 and sec["boundary"] == "true"


def test_fopt_invalid_model_file(tmp_path):
    mf = tmp_path / "m.txt"
    mf.write_text("cc_b = 1\ncc_k = 5\nbeta = 1\np_system = 0\ngamma = 0\neta_alpha_c = 1\nm1 = 0\nm2 = 1\n")
    assert run("fopt", "--model", mf) == cli.EXIT_DATA


def test_sweep_output(tmp_path):
    out = tmp_path / "s.csv"
    assert run("sweep", "--param", "asymptote", "--values", "0.05,0.1,0.3", "-o", out) == 0
    cols = read_columns(out)
    assert cols["status"] == ["ok", "ok", "invalid"]
    assert float(cols["f_opt_ghz"][0]) < float(cols["f_opt_ghz"][1])


def test_sweep_temperature(tmp_path):
    out = tmp_path / "s.csv"
    assert run("sweep", "--param", "temperature", "--values", "30..50:10", "-o", out) == 0
    f = [float(v) for v in read_columns(out)["f_opt_ghz"]]
    assert len(f) == 3 and f[0] > f[1] > f[2]


def test_bench_output_loads(tmp_path):
    out, raw = tmp_path / "b.csv", tmp_path / "raw.csv"
    assert run("bench", "--n", "6,7", "--copies", 1, "--repeats", 3, "--min-duration", 1e-4,
               "--freq", 1.0, "-o", out, "--raw", raw) == 0
    ts = traces.load_traces(out)
    assert ts.sizes() == [6, 7] and ts.time_frequencies() == [1.0]
    assert all(s.repetitions == 3 for s in ts.time)
    assert len(traces.load_traces(raw).time) == 6


def test_bench_rejects_out_of_range_size(tmp_path):
    assert run("bench", "--n", "4", "--freq", 1, "-o", tmp_path / "b.csv") == cli.EXIT_USAGE


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "dvfs_energy", "fopt"], capture_output=True, text=True)
    assert r.returncode == 0 and "[continuous]" in r.stdout
