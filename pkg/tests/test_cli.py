import pytest

from awg import cli
from awg import experiment as ex


def test_solve(tmp_path, capsys):
    assert cli.main(["solve", "--builtin", "small-2x2-constant", "--out", str(tmp_path),
                     "--dense-verify", "--dump-spectra"]) == 0
    out = capsys.readouterr().out
    assert "small-2x2-constant" in out and "dense check" in out
    names = {p.name for p in tmp_path.iterdir()}
    assert {"small-2x2-constant_row.csv", "small-2x2-constant_report.json",
            "small-2x2-constant_residuals.csv", "small-2x2-constant_spectra.csv"} <= names


def test_assemble_then_solve_config(tmp_path, capsys):
    assert cli.main(["assemble", "--builtin", "small-2x2-constant", "--out", str(tmp_path)]) == 0
    ini = tmp_path / "ext.ini"
    ini.write_text("[problem]\nkind = external\nmatrix = problem.mtx\nrhs = problem_rhs.txt\n"
                   "[partition]\nfile = problem_partition.txt\n[output]\nlabel = small-2x2-constant\n")
    capsys.readouterr()
    assert cli.main(["solve", "--config", str(ini)]) == 0
    ext_line = capsys.readouterr().out.strip()
    cli.main(["solve", "--builtin", "small-2x2-constant"])
    assert capsys.readouterr().out.strip() == ext_line


def test_sweep(tmp_path, capsys):
    assert cli.main(["sweep", "--builtin", "small-2x2-constant", "--axis", "tau_sharp",
                     "--values", "0.05,0.2", "--out", str(tmp_path)]) == 0
    rows = ex.read_rows(tmp_path / "sweep_tau_sharp.csv")
    assert [r.label for r in rows] == ["tau_sharp=0.05", "tau_sharp=0.2"]


def test_table_with_small_configs(tmp_path, capsys, monkeypatch):
    small = ex.builtin("small-2x2-constant")
    monkeypatch.setattr(ex, "table_configs", lambda k: [small.replace(label="nu=0.3")])
    assert cli.main(["table", "2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("Table 2:") and "reference" in out
    assert (tmp_path / "table2.csv").exists()


def test_pipeline_error_exit_code(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[problem]\nkind = external\nmatrix = nope.mtx\n[partition]\nauto = 2\n")
    assert cli.main(["solve", "--config", str(ini)]) == 2
    assert "[problem]" in capsys.readouterr().err


def test_parser_rejects_unknown():
    with pytest.raises(SystemExit):
        cli.main(["table", "8"])
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--axis", "rho"])
