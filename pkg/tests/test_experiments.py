import io
import math

import pytest

from dotmemory import cli
from dotmemory.experiments import (
    CSV_HEADER,
    Cell,
    ExperimentConfig,
    SweepResult,
    default_config,
    extrapolate,
    parse_config,
    report,
    run,
    scattering_prediction,
    summary_table,
    target_value,
    write_csv,
)
from dotmemory.profiles import FermiSpec

QUICK = """
[sweep]
scenarios = 2
deltas = 0.4, 0.2
etas = 0.1, 0.05
[output]
deterministic = true
"""


def test_default_targets():
    config = default_config()
    assert target_value(config, 1).value == pytest.approx(0.499495, abs=5e-7)
    assert target_value(config, 2).value == pytest.approx(0.9996646, abs=5e-8)
    assert target_value(config, 3).value == pytest.approx(0.9999939, abs=5e-8)
    tags = {target_value(config, k).tag for k in (1, 2, 3)}
    assert len(tags) == 3


def test_parse_config_sections():
    config = parse_config("""
[model]
E0 = 12
tau = 0.2
[occupation]
kind = step
mu = 1.5
[sweep]
scenarios = 1, 3
etas = 0.1, 0.01
observables = bound_occupation, current_left
dt = 0.01
[scenario3]
deltas = 0.3, 0.1
[output]
path = out
workers = 2
""")
    assert config.params.E0 == 12 and config.params.tau == 0.2
    assert config.fermi == FermiSpec.step(1.5)
    assert config.scenarios == (1, 3) and config.etas == (0.1, 0.01)
    assert config.etas_for(3) == (0.1, 0.01)
    assert config.deltas_for(3) == (0.3, 0.1) and config.deltas_for(1) == (0.0,)
    assert config.workers == 2 and config.output == "out" and config.dt == 0.01


@pytest.mark.parametrize("text", [
    "[sweep]\netas = 0.01, 0.1\n",
    "[sweep]\ndeltas = 0.1, 0.1\n",
    "[sweep]\nscenarios = 4\n",
    "[sweep]\nobservables = energy\n",
    "[scenario2]\netas = 0.001, 0.01\n",
])
def test_invalid_config_rejected(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_extrapolation_is_linear_in_eta():
    assert extrapolate([0.1, 0.01, 0.001], [5.0, 1.0 + 0.01 * 3, 1.0 + 0.001 * 3]) == pytest.approx(1.0)
    assert extrapolate([0.1], [1.0]) is None


def test_empty_result_gives_header_only_csv():
    buf = io.StringIO()
    write_csv(SweepResult(default_config(), []), buf)
    assert buf.getvalue() == ",".join(CSV_HEADER) + "\n"


def test_run_is_deterministic(tmp_path):
    config = parse_config(QUICK)
    first = report(run(config), tmp_path / "a")
    second = report(run(config), tmp_path / "b")
    assert first[0].read_bytes() == second[0].read_bytes()
    lines = first[0].read_text().splitlines()
    assert lines[0] == "scenario,delta,eta,observable,value,drift,runtime_s"
    assert len(lines) == 5 and all(line.endswith(",") for line in lines[1:])


def test_full_occupation_cells_are_one():
    config = parse_config(QUICK + "[occupation]\nkind = constant\nvalue = 1\n")
    result = run(config)
    for cell in result.cells:
        assert abs(cell.value - 1.0) <= 1e-12 + 2 * cell.drift


def test_single_eta_has_no_extrapolation():
    config = parse_config(QUICK.replace("etas = 0.1, 0.05", "etas = 0.1"))
    result = run(config)
    assert result.extrapolated == {}
    assert "-" in summary_table(result)


def test_summary_lists_targets_and_predictions():
    config = parse_config(QUICK)
    result = run(config)
    text = summary_table(result)
    assert "return-crossing small-delta limit f_eq(2)" in text
    assert result.predictions[(2, 0.4, "bound_occupation")] == pytest.approx(0.99977523, abs=1e-8)
    assert "delta trend" in text


def test_failed_cells_are_aggregated(tmp_path):
    config = parse_config(QUICK + "[scenario2]\nramp = 0.5\n")
    result = run(config)
    assert len(result.failures) == len(result.cells) == 4
    paths = report(result, tmp_path)
    assert "failed cells" in paths[1].read_text()


def test_parallel_matches_serial():
    config = parse_config(QUICK)
    serial = run(config)
    parallel = run(config.with_overrides(workers=2))
    assert [c.value for c in serial.cells] == [c.value for c in parallel.cells]


def test_scattering_prediction_for_currents():
    config = default_config()
    value = scattering_prediction(config, 1, 0.0, "current_left")
    assert abs(value) < 1e-12


def test_report_surfaces_path_on_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        report(SweepResult(default_config(), []), blocker / "sub")


def test_cell_ok_flag():
    assert Cell(1, 0.0, 0.1, "bound_occupation", 0.5).ok
    assert not Cell(1, 0.0, 0.1, "bound_occupation", error="boom").ok
    assert not Cell(1, 0.0, 0.1, "bound_occupation", math.nan).ok


def test_cli_check_and_usage_errors(tmp_path, capsys):
    assert cli.main(["check"]) == 0
    assert "FAIL" not in capsys.readouterr().out
    bad = tmp_path / "bad.ini"
    bad.write_text("[sweep]\netas = 0.01, 0.1\n")
    assert cli.main(["sweep", "--config", str(bad)]) == 2
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.ini")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--scenario", "7"])


def test_cli_sweep_and_spectrum(tmp_path, capsys):
    code = cli.main(["sweep", "--scenario", "2", "--eta", "0.1,0.05", "--delta", "0.2",
                     "--out", str(tmp_path), "--deterministic"])
    assert code == 0
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 3
    assert cli.main(["spectrum", "--out", str(tmp_path), "--points", "5"]) == 0
    assert "vc1 = 8.0110" in capsys.readouterr().out


def test_cli_sweep_reports_failures(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(QUICK + "[scenario2]\nramp = 0.5\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_cli_evolve_and_scatter(tmp_path, capsys):
    assert cli.main(["evolve", "--scenario", "1", "--eta", "0.1"]) == 0
    assert "target=" in capsys.readouterr().out
    assert cli.main(["scatter", "--scenario", "3", "--delta", "0.2", "--out", str(tmp_path)]) == 0
    assert "memory term" in capsys.readouterr().out
    assert list(tmp_path.glob("overlaps_*.csv"))


def test_config_dataclass_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(workers=0)
