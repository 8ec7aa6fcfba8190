import math

import pytest

from rigidmd.config import build_simulation, load_config, parse_config
from rigidmd.errors import ConfigError

MINIMAL = """
[system]
temperature = 1.0
density = 0.5
cutoff = 1.5

[species:Ar]
builtin = lj
count = 32

[run]
dt = 0.002
"""

WATER = """
name water
LJ     0.0 0.0 0.0   1.0 1.0   16.0  O
charge 0.8 0.6 0.0   0.4       1.0   H
charge -0.8 0.6 0.0  0.4       1.0   H
charge 0.0 0.1 0.0   -0.8      0.0   M
"""


def problems(text, base="."):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, base)
    return exc.value.problems


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.run["n_ext"] == 1 and cfg.run["workers"] == "auto" and cfg.run["seed"] == 0
    assert cfg.electrostatics["method"] == "none" and math.isinf(cfg.electrostatics["eps_rf"])
    assert cfg.sampling["massieu"] is True
    assert math.isclose(cfg.box_length, (32 / 0.5) ** (1 / 3))


def test_effective_config_round_trip(tmp_path):
    (tmp_path / "w.sites").write_text(WATER)
    text = MINIMAL.replace("[run]", "[species:w]\nfile = w.sites\ncount = 4\nenthalpy = -2.5\n\n[electrostatics]\nmethod = reaction_field\neps_rf = 40\n\n[run]")
    cfg = parse_config(text, tmp_path)
    again = parse_config(cfg.to_text(), "/")
    assert again == cfg
    assert again.to_text() == cfg.to_text()


def test_unknown_keys_and_sections_are_errors():
    text = MINIMAL + "\nbogus = 1\n[extra]\nx = 1\n"
    p = problems(text)
    assert any("unknown key 'bogus'" in m for m in p)
    assert any("unknown section [extra]" in m for m in p)


def test_all_violations_reported():
    text = MINIMAL.replace("temperature = 1.0", "temperature = -1").replace("dt = 0.002", "dt = 0\nn_ext = 0")
    p = problems(text)
    assert len(p) >= 3


def test_ewald_with_massieu_names_both():
    text = MINIMAL + "\n[electrostatics]\nmethod = ewald\n"
    p = problems(text)
    assert any("Massieu" in m and "Ewald" in m for m in p)


def test_ewald_requires_single_worker():
    text = MINIMAL.replace("dt = 0.002", "dt = 0.002\nworkers = 4") + "\n[electrostatics]\nmethod = ewald\n[sampling]\nmassieu = no\n"
    assert any("workers" in m for m in problems(text))


def test_workers_auto_resolution():
    from rigidmd.config import resolved_workers
    from rigidmd.parallel import default_workers

    assert resolved_workers(parse_config(MINIMAL)) == default_workers() >= 1
    ew = MINIMAL + "\n[electrostatics]\nmethod = ewald\n[sampling]\nmassieu = no\n"
    assert resolved_workers(parse_config(ew)) == 1
    assert parse_config(MINIMAL.replace("dt = 0.002", "dt = 0.002\nworkers = 3")).run["workers"] == 3
    assert any("workers" in m for m in problems(MINIMAL.replace("dt = 0.002", "dt = 0.002\nworkers = many")))


def test_thermal_conductivity_needs_enthalpy():
    text = MINIMAL + "\n[sampling]\nthermal_conductivity = yes\n"
    p = problems(text)
    assert any("'Ar'" in m and "enthalpy" in m for m in p)


def test_missing_species_file(tmp_path):
    text = MINIMAL.replace("builtin = lj", "file = nothere.sites")
    assert any("not found" in m for m in problems(text, tmp_path))


def test_cutoff_vs_box():
    assert any("half the box" in m for m in problems(MINIMAL.replace("cutoff = 1.5", "cutoff = 3.0")))


def test_residence_options():
    text = MINIMAL + "\n[sampling]\nresidence = yes\nresidence_solute = Ar\nresidence_partner = Xe\nresidence_radius = big\n"
    p = problems(text)
    assert any("Xe" in m for m in p) and any("residence_radius" in m for m in p)


def test_density_or_box_exclusive():
    assert any("exactly one" in m for m in problems(MINIMAL.replace("density = 0.5", "density = 0.5\nbox_length = 4")))


def test_build_simulation_and_load(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(MINIMAL + "\n[sampling]\nrdf = yes\nself_diffusion = yes\n")
    cfg = load_config(path)
    sim = build_simulation(cfg)
    assert [s.name for s in sim.samplers] == ["thermo", "massieu", "rdf", "self_diffusion"]
    assert cfg.run["output"] == str((tmp_path / "output").resolve())


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.ini")
