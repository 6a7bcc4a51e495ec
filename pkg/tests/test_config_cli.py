import math

import numpy as np
import pytest

from coopg2.cli import main, resolve_config, run_suite, validate_suite
from coopg2.config import (
    dump_config,
    load_config,
    parse_config,
    parse_energy,
    parse_normalization,
    parse_rate,
    parse_temperature,
    parse_time,
    with_numerics,
)
from coopg2.bath import BARE_NORMALIZATION, TEXTBOOK_NORMALIZATION, DeformationPotentialSD
from coopg2.dynamics import G2Curve, Geometry
from coopg2.errors import ConfigError
from coopg2.io import read_csv
from coopg2.presets import PRESETS, preset, preset_text

BASE = """
[output]
tag = t
[numerics]
dt = 0.1 ps
t_mem = 10 ps
tau_max = 200 ps
n_coarse = 40
[experiment a]
gamma = 1/1.76 ns
gamma_p = 1/1.76 ns
gamma_d = 1/3.9 ns
method = regression
"""


def test_unit_parsers():
    assert parse_time("1.76 ns") == pytest.approx(1760.0)
    assert parse_time("500 fs") == pytest.approx(0.5)
    assert parse_rate("1/1.76 ns") == pytest.approx(1 / 1760.0)
    assert parse_rate("0.5 /ns") == pytest.approx(5e-4)
    assert parse_rate("0.5 ns^-1") == pytest.approx(5e-4)
    assert parse_energy("4 meV") == pytest.approx(4.0)
    assert parse_temperature("4 K") == 4.0
    assert parse_normalization("textbook") == TEXTBOOK_NORMALIZATION
    assert parse_normalization("bare") == BARE_NORMALIZATION
    for bad in ("1.76", "1.76 parsec", "x ns"):
        with pytest.raises(ValueError):
            parse_time(bad)


def test_minimal_config():
    cfg = parse_config(BASE)
    exp = cfg.experiment("a")
    sc = exp.scenario(cfg.numerics)
    assert sc.geometry is Geometry.MEASUREMENT_INDUCED
    assert sc.lindblad.gamma_d == pytest.approx(1 / 3900.0)
    assert cfg.numerics.tau_max == 200.0


def test_missing_temperature_names_the_field():
    text = BASE.replace("method = regression\n", "phonons = deformation-potential\n")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.field == "temperature"
    assert "temperature" in str(err.value)


def test_dt_above_memory_time():
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.replace("dt = 0.1 ps", "dt = 0.5 ps").replace("t_mem = 10 ps", "t_mem = 0.2 ps"))
    assert err.value.field == "dt"


@pytest.mark.parametrize("bad, field", [
    ("gamma = -1 /ns", "gamma"),
    ("colour = red", "colour"),
    ("method = magic", "method"),
])
def test_bad_experiment_keys(bad, field):
    text = BASE.replace("gamma = 1/1.76 ns", bad) if bad.startswith("gamma") else BASE + bad + "\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.field == field
    assert err.value.line is not None


def test_out_of_range_numerics():
    with pytest.raises(ConfigError) as err:
        parse_config(BASE.replace("dt = 0.1 ps", "dt = 5 ps").replace("t_mem = 10 ps", "t_mem = 50 ps"))
    assert err.value.field == "dt"


@pytest.mark.parametrize("name", list(PRESETS))
def test_presets_roundtrip_and_validate(name):
    cfg = preset(name)
    assert parse_config(dump_config(cfg)) == cfg
    assert validate_suite(cfg) == []


def test_phonon_config_builds_spectral_density():
    cfg = preset("fig2a")
    sd = cfg.experiment("spc").phonons.spectral_density()
    assert sd == DeformationPotentialSD()
    assert cfg.fit_window == (1.0, math.inf)


def test_with_numerics_and_load(tmp_path):
    cfg = with_numerics(parse_config(BASE), svd_threshold=1e-10)
    assert cfg.numerics.svd_threshold == 1e-10
    path = tmp_path / "c.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    assert resolve_config(str(path)) == cfg
    assert resolve_config("fig4").tag == "fig4"
    with pytest.raises(ConfigError):
        resolve_config("no-such-thing")


def test_validate_reports_coarse_grid():
    text = preset_text("fig6").replace("n_coarse = 1500", "n_coarse = 100")
    diags = validate_suite(parse_config(text))
    assert any(level == "error" and "coarse" in msg for level, msg in diags)


def test_cli_run_writes_curves_and_fits(tmp_path, capsys):
    cfg_path = tmp_path / "c.cfg"
    cfg_path.write_text(BASE + "fits = PpdModel\n")
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 0
    out = tmp_path / "out" / "t"
    curve = G2Curve.from_csv(out / "a.csv")
    assert curve.tau[0] == 0 and curve.g2[0] == pytest.approx(1.0)
    cols, head = read_csv(out / "a.fit-PpdModel.csv")
    assert head["experiment"] == "a"
    fit_text = (out / "a.fit-PpdModel.txt").read_text()
    assert "gamma_d" in fit_text
    assert (out / "config.txt").exists()
    assert "wrote" in capsys.readouterr().out


def test_cli_run_parallel_matches_serial(tmp_path):
    text = BASE + "\n[experiment b]\ngamma = 1/1.76 ns\ngamma_p = 1/0.176 ns\ngamma_d = 1/199 ps\n" \
                  "geometry = superradiant\nmethod = regression\n"
    cfg = parse_config(text)
    assert run_suite(cfg, tmp_path / "s", workers=1) == 0
    assert run_suite(cfg, tmp_path / "p", workers=2) == 0
    for name in ("a", "b"):
        a = read_csv(tmp_path / "s" / "t" / f"{name}.csv")[0]["g2"]
        b = read_csv(tmp_path / "p" / "t" / f"{name}.csv")[0]["g2"]
        assert np.array_equal(a, b)


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["list-presets"]) == 0
    assert "fig2a" in capsys.readouterr().out
    assert main(["validate", "--config", "fig2a"]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment x]\ngamma = fast\n")
    assert main(["validate", "--config", str(bad)]) == 2
    assert "gamma" in capsys.readouterr().err
    dark = tmp_path / "dark.cfg"
    dark.write_text(BASE.replace("gamma = 1/1.76 ns\ngamma_p = 1/1.76 ns", "gamma = 0 /ps\ngamma_p = 0 /ps"))
    assert main(["validate", "--config", str(dark)]) == 1
    assert main(["run", "--config", str(dark), "--out", str(tmp_path)]) == 1
