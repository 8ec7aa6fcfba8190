"""Plain-text simulation configuration (INI sections of ``key = value`` lines).

Example::

    [system]
    temperature = 1.0
    density = 0.8
    cutoff = 3.0

    [species:water]
    file = spce.sites
    count = 500
    enthalpy = -10.2

    [electrostatics]
    method = reaction_field
    eps_rf = inf

    [run]
    dt = 0.001
    n_equilibration = 20000
    n_production = 100000
    seed = 7

    [sampling]
    massieu = yes
    rdf = yes

Species come from a site file (``file``, relative to the config file) or a
built-in (``builtin = lj``). Every problem found is reported together.
:func:`SimulationConfig.to_text` writes the fully defaulted configuration,
which parses back to an identical object.
"""

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, ModelError
from .model import SystemComposition, lj_atom, load_species

SECTIONS = ("system", "electrostatics", "run", "sampling")

# key -> (type, default); None default means required or "unset"
SYSTEM_KEYS = {
    "temperature": (float, None),
    "density": (float, None),
    "box_length": (float, None),
    "cutoff": (float, None),
}
ELECTROSTATICS_KEYS = {
    "method": (str, "none"),
    "eps_rf": (float, math.inf),
    "delta": (float, 1e-5),
    "alpha": (float, None),
    "k_max": (int, None),
}
RUN_KEYS = {
    "dt": (float, None),
    "n_equilibration": (int, 0),
    "n_production": (int, 0),
    "thermostat_equilibration": (int, 1),
    "thermostat_production": (int, 10),
    "nve": (bool, False),
    "n_ext": (int, 1),
    "correlation_length": (int, 1000),
    "workers": (str, "auto"),
    "seed": (int, 0),
    "output": (str, "output"),
    "checkpoint_interval": (int, 0),
}
SAMPLING_KEYS = {
    "massieu": (bool, True),
    "rdf": (bool, False),
    "rdf_bin": (float, 0.02),
    "rdf_stride": (int, 10),
    "electric_conductivity": (bool, False),
    "thermal_conductivity": (bool, False),
    "self_diffusion": (bool, False),
    "residence": (bool, False),
    "residence_solute": (str, None),
    "residence_partner": (str, None),
    "residence_radius": (str, "auto"),
    "residence_t_star": (float, 0.0),
}
SPECIES_KEYS = {"file": str, "builtin": str, "count": int, "enthalpy": float}
BUILTINS = {"lj": lj_atom}
METHODS = ("none", "reaction_field", "ewald")


@dataclass
class SpeciesEntry:
    name: str
    count: int
    file: str = None
    builtin: str = None
    enthalpy: float = None


@dataclass
class SimulationConfig:
    system: dict
    species: list
    electrostatics: dict
    run: dict
    sampling: dict
    base_dir: str = field(default=".", compare=False)

    @property
    def temperature(self):
        return self.system["temperature"]

    @property
    def n_molecules(self):
        return sum(s.count for s in self.species)

    @property
    def box_length(self):
        if self.system["box_length"] is not None:
            return self.system["box_length"]
        return (self.n_molecules / self.system["density"]) ** (1.0 / 3.0)

    def load_species(self):
        out = []
        for s in self.species:
            if s.builtin is not None:
                out.append(BUILTINS[s.builtin](s.name))
            else:
                out.append(replace(load_species(s.file), name=s.name))
        return out

    def composition(self):
        return SystemComposition(self.load_species(), [s.count for s in self.species], self.box_length, self.temperature)

    def to_text(self):
        """Fully defaulted configuration (paths already absolute)."""
        lines = ["# format_version 1"]

        def section(title, keys, values):
            lines.append(f"[{title}]")
            for k in keys:
                v = values[k]
                if v is not None:
                    lines.append(f"{k} = {_fmt(v)}")
            lines.append("")

        section("system", SYSTEM_KEYS, self.system)
        for s in self.species:
            lines.append(f"[species:{s.name}]")
            if s.builtin is not None:
                lines.append(f"builtin = {s.builtin}")
            else:
                lines.append(f"file = {s.file}")
            lines.append(f"count = {s.count}")
            if s.enthalpy is not None:
                lines.append(f"enthalpy = {_fmt(s.enthalpy)}")
            lines.append("")
        section("electrostatics", ELECTROSTATICS_KEYS, self.electrostatics)
        section("run", RUN_KEYS, self.run)
        section("sampling", SAMPLING_KEYS, self.sampling)
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def _convert(kind, raw):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise ValueError(f"expected yes/no, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def _read_section(parser, name, spec, problems):
    values = {k: d for k, (_, d) in spec.items()}
    if not parser.has_section(name):
        return values
    for key, raw in parser.items(name):
        if key not in spec:
            problems.append(f"[{name}] unknown key {key!r}")
            continue
        try:
            values[key] = _convert(spec[key][0], raw)
        except ValueError as exc:
            problems.append(f"[{name}] {key}: {exc}")
    return values


def parse_config(text, base_dir="."):
    """Parse and validate; raises ConfigError listing every violation."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    problems = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None

    species = []
    for sec in parser.sections():
        if sec.startswith("species:"):
            name = sec.split(":", 1)[1].strip()
            if not name:
                problems.append(f"[{sec}] empty species name")
                continue
            entry = SpeciesEntry(name, 0)
            for key, raw in parser.items(sec):
                if key not in SPECIES_KEYS:
                    problems.append(f"[{sec}] unknown key {key!r}")
                    continue
                try:
                    setattr(entry, key, _convert(SPECIES_KEYS[key], raw))
                except ValueError as exc:
                    problems.append(f"[{sec}] {key}: {exc}")
            species.append(entry)
        elif sec not in SECTIONS:
            problems.append(f"unknown section [{sec}]")

    system = _read_section(parser, "system", SYSTEM_KEYS, problems)
    elec = _read_section(parser, "electrostatics", ELECTROSTATICS_KEYS, problems)
    run = _read_section(parser, "run", RUN_KEYS, problems)
    sampling = _read_section(parser, "sampling", SAMPLING_KEYS, problems)
    if str(run["workers"]).lower() == "auto":
        run["workers"] = "auto"
    else:
        try:
            run["workers"] = int(run["workers"])
        except ValueError:
            problems.append(f"[run] workers: expected 'auto' or an integer, got {run['workers']!r}")
            run["workers"] = "auto"
    base = Path(base_dir)
    for s in species:
        if s.file is not None:
            s.file = str((base / s.file).resolve())
    run["output"] = str((base / run["output"]).resolve())
    cfg = SimulationConfig(system, species, elec, run, sampling, str(base_dir))
    problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg):
    p = []
    sy, el, ru, sa = cfg.system, cfg.electrostatics, cfg.run, cfg.sampling
    if sy["temperature"] is None or not sy["temperature"] > 0:
        p.append("[system] temperature must be given and positive")
    if (sy["density"] is None) == (sy["box_length"] is None):
        p.append("[system] give exactly one of density or box_length")
    elif (sy["density"] or sy["box_length"]) <= 0:
        p.append("[system] density/box_length must be positive")
    if sy["cutoff"] is None or not sy["cutoff"] > 0:
        p.append("[system] cutoff must be given and positive")

    if not cfg.species:
        p.append("no [species:NAME] section")
    names = [s.name for s in cfg.species]
    if len(set(names)) != len(names):
        p.append("duplicate species names")
    for s in cfg.species:
        if (s.file is None) == (s.builtin is None):
            p.append(f"[species:{s.name}] give exactly one of file or builtin")
        elif s.builtin is not None and s.builtin not in BUILTINS:
            p.append(f"[species:{s.name}] unknown builtin {s.builtin!r}")
        elif s.file is not None and not Path(s.file).is_file():
            p.append(f"[species:{s.name}] species file not found: {s.file}")
        if s.count < 0:
            p.append(f"[species:{s.name}] count must be >= 0")
    if cfg.species and sum(s.count for s in cfg.species) <= 0:
        p.append("total molecule count must be positive")

    method = el["method"]
    if method not in METHODS:
        p.append(f"[electrostatics] method must be one of {', '.join(METHODS)}")
    if method == "reaction_field" and not el["eps_rf"] >= 1.0:
        p.append("[electrostatics] eps_rf must be >= 1 (inf allowed)")
    if method == "ewald":
        if not 0.0 < el["delta"] <= 1e-2:
            p.append("[electrostatics] delta must lie in (0, 1e-2]")
        if (el["alpha"] is None) != (el["k_max"] is None):
            p.append("[electrostatics] alpha and k_max must be given together")
        if sa["massieu"]:
            p.append("Massieu derivatives (sampling.massieu) are not available together with Ewald summation")
        if ru["workers"] not in ("auto", 1):
            p.append("Ewald summation requires run.workers = 1")
        if sa["thermal_conductivity"]:
            p.append("thermal conductivity needs pairwise electrostatics, not Ewald summation")

    if ru["dt"] is None or not ru["dt"] > 0:
        p.append("[run] dt must be given and positive")
    for k in ("n_equilibration", "n_production", "thermostat_equilibration", "thermostat_production", "checkpoint_interval"):
        if ru[k] < 0:
            p.append(f"[run] {k} must be >= 0")
    if ru["n_ext"] < 1:
        p.append("[run] n_ext must be >= 1")
    if ru["correlation_length"] < 2:
        p.append("[run] correlation_length must be >= 2")
    if ru["workers"] != "auto" and ru["workers"] < 1:
        p.append("[run] workers must be 'auto' or >= 1")

    if sa["rdf_bin"] <= 0 or sa["rdf_stride"] < 1:
        p.append("[sampling] rdf_bin must be positive and rdf_stride >= 1")
    if sa["thermal_conductivity"]:
        for s in cfg.species:
            if s.enthalpy is None:
                p.append(f"thermal conductivity needs the partial molar enthalpy of component {s.name!r} ([species:{s.name}] enthalpy)")
    if sa["residence"]:
        for k in ("residence_solute", "residence_partner"):
            if sa[k] is None:
                p.append(f"[sampling] {k} is required for residence times")
            elif sa[k] not in names:
                p.append(f"[sampling] {k} names unknown species {sa[k]!r}")
        r = sa["residence_radius"]
        if r != "auto":
            try:
                if float(r) <= 0:
                    raise ValueError
            except ValueError:
                p.append("[sampling] residence_radius must be 'auto' or a positive number")
        if sa["residence_t_star"] < 0:
            p.append("[sampling] residence_t_star must be >= 0")

    if not p:
        try:
            comp = cfg.composition()
            comp.check_electrostatics(method)
            if sy["cutoff"] > 0.5 * comp.box_length:
                p.append(f"[system] cutoff {sy['cutoff']} exceeds half the box length {0.5 * comp.box_length:.6g}")
        except ModelError as exc:
            p.append(str(exc))
    return p


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    return parse_config(text, path.parent)


def build_simulation(cfg, composition=None):
    """Simulation object wired up as the configuration requests."""
    from .engine import (
        ConductivitySampler, HeatFluxSampler, MassieuSampler, RdfSampler, ResidenceSampler,
        SelfDiffusionSampler, Simulation, SimulationPlan,
    )
    from .parallel import Electrostatics

    comp = composition or cfg.composition()
    ru, sa, el = cfg.run, cfg.sampling, cfg.electrostatics
    n_ext, m = ru["n_ext"], ru["correlation_length"]
    samplers = []
    if sa["massieu"]:
        samplers.append(MassieuSampler(1))
    if sa["rdf"]:
        samplers.append(RdfSampler(sa["rdf_stride"], sa["rdf_bin"]))
    if sa["electric_conductivity"]:
        samplers.append(ConductivitySampler(m, n_ext))
    if sa["thermal_conductivity"]:
        samplers.append(HeatFluxSampler(m, [s.enthalpy for s in cfg.species], n_ext))
    if sa["self_diffusion"]:
        samplers.append(SelfDiffusionSampler(m, n_ext))
    if sa["residence"]:
        r = sa["residence_radius"]
        samplers.append(
            ResidenceSampler(m, sa["residence_solute"], sa["residence_partner"],
                             None if r == "auto" else float(r), sa["residence_t_star"], n_ext)
        )
    plan = SimulationPlan(
        dt=ru["dt"],
        n_equilibration=ru["n_equilibration"],
        n_production=ru["n_production"],
        thermostat_interval_equilibration=ru["thermostat_equilibration"],
        thermostat_interval_production=ru["thermostat_production"],
        n_ext=n_ext,
        nve=ru["nve"],
        samplers=samplers,
    )
    es = Electrostatics(el["method"], el["eps_rf"], el["alpha"], el["k_max"], el["delta"])
    return Simulation(comp, plan, cfg.system["cutoff"], es, resolved_workers(cfg), ru["seed"],
                      config_text=cfg.to_text())


def resolved_workers(cfg):
    """Thread count for a run: ``auto`` means physical cores, or 1 with Ewald summation."""
    w = cfg.run["workers"]
    if w != "auto":
        return w
    if cfg.electrostatics["method"] == "ewald":
        return 1
    from .parallel import default_workers

    return default_workers()

