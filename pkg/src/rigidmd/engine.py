"""NVT molecular dynamics of rigid molecules.

Translation uses velocity Verlet. Rotation uses body-frame angular momenta
with a symmetric free-rotor splitting (x, y, z, y, x half/full steps) between
the two torque half-kicks, which keeps the scheme symplectic and
time-reversible. Quaternions are renormalised every step. Temperature control
is isokinetic velocity rescaling, translational and rotational independently.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt
from . import greenkubo as gk
from .errors import CheckpointError, SimulationError
from .massieu import DerivativeAccumulator
from .model import degrees_of_freedom, init_lattice, kinetic_energies, masses_and_inertia, rescale_to_temperature
from .parallel import ForceEvaluator
from .rotation import axis_angle_quat, normalize, quat_multiply, quat_to_matrix
from .structure import RdfHistogram, com_rdf, first_minimum, rdf_finalize, solvation_number

PRNG_NAME = "numpy.random.PCG64 via SeedSequence(seed), v1"


@dataclass
class SimulationPlan:
    dt: float
    n_equilibration: int = 0
    n_production: int = 0
    thermostat_interval_equilibration: int = 1
    thermostat_interval_production: int = 10
    n_ext: int = 1
    nve: bool = False
    samplers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("time step must be positive")
        if int(self.n_ext) != self.n_ext or self.n_ext < 1:
            raise ValueError("extended step factor must be an integer >= 1")
        if self.n_equilibration < 0 or self.n_production < 0:
            raise ValueError("step counts must be non-negative")


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


class Sampler:
    """Observable hook called every ``stride`` production steps."""

    name = "sampler"
    needs_flux = False

    def __init__(self, stride=1):
        if stride < 1:
            raise ValueError("sampler stride must be >= 1")
        self.stride = int(stride)

    def attach(self, sim):
        pass

    def sample(self, sim, evaluation):
        raise NotImplementedError

    def observe_equilibration(self, sim, step):
        pass

    def state_dict(self):
        return {}

    def load_state_dict(self, d):
        pass

    def contribute(self, sim, bundle):
        pass


class ThermoSampler(Sampler):
    """Kinetic temperature, energies and virial pressure."""

    name = "thermo"
    names = ("T_kin", "T_trans", "U_per_N", "E_conserved_per_N", "pressure", "dU_dV", "d2U_dV2")

    def attach(self, sim):
        from .stats import ScalarSeries

        self.series = ScalarSeries(self.names)

    def sample(self, sim, ev):
        t_kin, t_trans = sim.kinetic_temperature()
        en = ev.energy
        n = sim.state.n_molecules
        vol = sim.state.volume
        k_t, k_r = kinetic_energies(sim.state, sim.mass, sim.inertia)
        e_cons = (k_t + k_r + en.total - en.cutoff_shift) / n
        # virial route at the ensemble temperature
        p = n * sim.temperature / vol + en.virial / (3.0 * vol) - en.du_dv_lrc
        self.series.add([t_kin, t_trans, en.total / n, e_cons, p, en.du_dv_total, en.d2u_dv2_total])

    def state_dict(self):
        return self.series.acc.state_dict()

    def load_state_dict(self, d):
        from .stats import BlockAccumulator

        self.series.acc = BlockAccumulator.from_state(d)

    def contribute(self, sim, bundle):
        if self.series.acc.n_samples == 0:
            return
        units = {
            "T_kin": "epsilon/k_B",
            "T_trans": "epsilon/k_B",
            "U_per_N": "epsilon",
            "E_conserved_per_N": "epsilon",
            "pressure": "epsilon/sigma^3",
            "dU_dV": "epsilon/sigma^3",
            "d2U_dV2": "epsilon/sigma^6",
        }
        for k, (v, e) in self.series.results().items():
            bundle.scalars[k] = (v, e, units[k])


class MassieuSampler(Sampler):
    name = "massieu"

    def attach(self, sim):
        self.acc = DerivativeAccumulator(sim.state.n_molecules, sim.state.volume, sim.temperature)

    def sample(self, sim, ev):
        en = ev.energy
        self.acc.accumulate(en.total, en.du_dv_total, en.d2u_dv2_total)

    def state_dict(self):
        return self.acc.state_dict()

    def load_state_dict(self, d):
        self.acc = DerivativeAccumulator.from_state(d)

    def contribute(self, sim, bundle):
        if self.acc.n_samples >= 2:
            rep = self.acc.finalize()
            bundle.massieu = rep
            bundle.notes.extend(rep.warnings)
            if not sim.plan.nve and sim.plan.thermostat_interval_production != 1:
                # NVE stretches between rescalings suppress energy fluctuations
                bundle.notes.append(
                    "Massieu derivatives: production thermostat interval "
                    f"{sim.plan.thermostat_interval_production} != 1; the fluctuation terms "
                    "assume canonical sampling and are biased"
                )


class RdfSampler(Sampler):
    name = "rdf"

    def __init__(self, stride=1, bin_width=0.02, r_max=None):
        super().__init__(stride)
        self.bin_width = bin_width
        self.r_max = r_max

    def attach(self, sim):
        self.hist = RdfHistogram(sim.composition, sim.state.species_index, self.bin_width, self.r_max)

    def sample(self, sim, ev):
        self.hist.accumulate(sim.state.positions, sim.state.quaternions)

    def state_dict(self):
        return self.hist.state_dict()

    def load_state_dict(self, d):
        self.hist.load_state_dict(d)

    def contribute(self, sim, bundle):
        if self.hist.n_snapshots:
            bundle.rdf = rdf_finalize(self.hist)


class _CorrelationSampler(Sampler):
    def __init__(self, n_lags, stride=1):
        super().__init__(stride)
        self.n_lags = int(n_lags)

    def state_dict(self):
        return self.cs.state_dict()

    def load_state_dict(self, d):
        self.cs = gk.CorrelationSet.from_state(d)


class ConductivitySampler(_CorrelationSampler):
    name = "electric_conductivity"

    def attach(self, sim):
        self.charges = np.array([sim.composition.species[k].net_charge for k in sim.state.species_index])
        self.cs = gk.CorrelationSet("electric_current", self.n_lags, self.stride, sim.plan.dt)

    def sample(self, sim, ev):
        self.cs.add(gk.electric_current_flux(sim.state.velocities, self.charges))

    def contribute(self, sim, bundle):
        if self.cs.n_added:
            res = gk.electric_conductivity(self.cs, sim.state.volume, sim.temperature)
            bundle.add_transport(res, self.cs)


class HeatFluxSampler(_CorrelationSampler):
    name = "thermal_conductivity"
    needs_flux = True

    def __init__(self, n_lags, enthalpies, stride=1):
        super().__init__(n_lags, stride)
        self.enthalpies = list(enthalpies)

    def attach(self, sim):
        if sim.evaluator.mode == 2:
            raise SimulationError("heat flux needs pairwise electrostatics (none or reaction field)")
        if len(self.enthalpies) != len(sim.composition.species):
            raise SimulationError("one partial molar enthalpy per component is required")
        self.cs = gk.CorrelationSet("heat_flux", self.n_lags, self.stride, sim.plan.dt)

    def sample(self, sim, ev):
        s = sim.state
        j = gk.heat_flux(
            s.velocities, s.omega, s.quaternions, sim.mass, sim.inertia, s.species_index,
            self.enthalpies, ev.pair_energy, ev.pair_rf, ev.pair_rtau,
        )
        self.cs.add(j)

    def contribute(self, sim, bundle):
        if self.cs.n_added:
            bundle.add_transport(gk.thermal_conductivity(self.cs, sim.state.volume, sim.temperature), self.cs)


class SelfDiffusionSampler(Sampler):
    name = "self_diffusion"

    def __init__(self, n_lags, stride=1):
        super().__init__(stride)
        self.n_lags = int(n_lags)

    def attach(self, sim):
        self.members = []
        self.sets = []
        for k, spec in enumerate(sim.composition.species):
            idx = np.flatnonzero(sim.state.species_index == k)
            if len(idx) == 0:
                continue
            self.members.append(idx)
            self.sets.append(gk.CorrelationSet(spec.name, self.n_lags, self.stride, sim.plan.dt, (len(idx), 3), len(idx)))

    def sample(self, sim, ev):
        for idx, cs in zip(self.members, self.sets):
            cs.add(sim.state.velocities[idx])

    def state_dict(self):
        out = {}
        for k, cs in enumerate(self.sets):
            out.update(ckpt.nest(str(k), cs.state_dict()))
        return out

    def load_state_dict(self, d):
        self.sets = [gk.CorrelationSet.from_state(ckpt.sub(d, str(k))) for k in range(len(self.sets))]

    def contribute(self, sim, bundle):
        for cs in self.sets:
            if cs.n_added:
                bundle.add_transport(gk.self_diffusion(cs), cs)


class ResidenceSampler(Sampler):
    """Residence time of ``partner`` molecules around ``solute`` molecules.

    With ``radius=None`` the shell radius is the first minimum of the
    centre-of-mass RDF recorded over the second half of equilibration.
    """

    name = "residence"

    def __init__(self, n_lags, solute, partner, radius=None, t_star=0.0, stride=1, rdf_bin=0.02):
        super().__init__(stride)
        self.n_lags = int(n_lags)
        self.solute = solute
        self.partner = partner
        self.radius = radius
        self.t_star = float(t_star)
        self.rdf_bin = rdf_bin
        self.rc = None

    def attach(self, sim):
        names = [s.name for s in sim.composition.species]
        for nm in (self.solute, self.partner):
            if nm not in names:
                raise SimulationError(f"residence time: unknown component {nm!r}")
        si = sim.state.species_index
        self.idx_s = np.flatnonzero(si == names.index(self.solute))
        self.idx_p = np.flatnonzero(si == names.index(self.partner))
        self.eq_snaps = []
        self.shell_table = None

    def observe_equilibration(self, sim, step):
        if self.radius is None and step > sim.plan.n_equilibration // 2 and step % 10 == 0:
            self.eq_snaps.append(sim.state.positions.copy())
            if len(self.eq_snaps) > 200:
                self.eq_snaps = self.eq_snaps[::2]

    def _ensure(self, sim):
        if self.rc is not None:
            return
        if self.radius is None:
            snaps = self.eq_snaps or [sim.state.positions.copy()]
            table = com_rdf(snaps, sim.state.box_length, self.idx_s, self.idx_p, self.rdf_bin)
            r_min = first_minimum(table)
            if r_min is None:
                raise SimulationError("residence time: no first RDF minimum found; set the shell radius explicitly")
            self.radius = r_min
            self.shell_table = table
        self.rc = gk.ResidenceCorrelation(
            f"{self.solute}-{self.partner}", self.n_lags, self.stride, sim.plan.dt,
            len(self.idx_s), len(self.idx_p), self.t_star,
        )

    def sample(self, sim, ev):
        self._ensure(sim)
        occ = gk.shell_occupancy(sim.state.positions, sim.state.box_length, self.idx_s, self.idx_p, self.radius)
        self.rc.add(occ)

    def state_dict(self):
        d = {"radius": np.array(np.nan if self.radius is None else self.radius)}
        if self.rc is not None:
            d.update(ckpt.nest("rc", self.rc.state_dict()))
        if self.eq_snaps:
            d["eq_snaps"] = np.array(self.eq_snaps)
        return d

    def load_state_dict(self, d):
        r = float(d["radius"])
        self.radius = None if math.isnan(r) else r
        sub = ckpt.sub(d, "rc")
        self.rc = gk.ResidenceCorrelation.from_state(sub) if sub else None
        self.eq_snaps = list(d["eq_snaps"]) if "eq_snaps" in d else []

    def contribute(self, sim, bundle):
        if self.rc is None or self.rc.n_added == 0:
            return
        res = gk.residence_time(self.rc)
        if res is None:
            bundle.notes.append(f"residence time {self.rc.name}: every shell was empty")
            return
        bundle.add_transport(res, None)
        bundle.scalars[f"shell_radius_{self.rc.name}"] = (self.radius, math.nan, "sigma")


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class ResultsBundle:
    meta: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)  # name -> (value, error, units)
    massieu: object = None
    rdf: list = field(default_factory=list)
    transport: list = field(default_factory=list)
    correlation_meta: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add_transport(self, res, cs):
        self.transport.append(res)
        self.scalars[res.name] = (res.value, res.error, res.units)
        if cs is not None:
            self.correlation_meta[res.name] = {"n_ext": cs.n_ext, "M": cs.n_lags}
        if not res.converged:
            self.notes.append(f"{res.name}: " + "; ".join(res.flags))

    def transport_by_name(self, name):
        for t in self.transport:
            if t.name == name:
                return t
        raise KeyError(name)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


class Simulation:
    def __init__(self, composition, plan, r_c, electrostatics=None, workers=1, seed=0, state=None,
                 debug=False, config_text=""):
        self.composition = composition
        self.plan = plan
        self.seed = int(seed)
        self.config_text = config_text
        self.temperature = composition.temperature
        if state is None:
            state = init_lattice(composition, self.seed)
        self.rng_state = json.dumps(np.random.default_rng(self.seed).bit_generator.state, sort_keys=True)
        self.state = state
        self.evaluator = ForceEvaluator(composition, r_c, electrostatics, workers, state.species_index, debug)
        self.mass, self.inertia = masses_and_inertia(composition, state.species_index)
        self.rotating = bool(np.any(self.inertia > 0.0))
        self.thermo = ThermoSampler(1)
        self.samplers = [self.thermo] + list(plan.samplers)
        names = [s.name for s in self.samplers]
        if len(set(names)) != len(names):
            raise SimulationError("sampler names must be unique")
        for s in self.samplers:
            s.attach(self)
        self.step_count = 0
        self.last_eval = self.evaluator.evaluate(self.state, with_flux=self._flux_due(0))
        self._store(self.last_eval)

    # -- helpers ----------------------------------------------------------
    def _store(self, ev):
        self.state.forces = ev.forces
        self.state.torques = ev.torques
        self.state.energy = ev.energy

    def _production_step(self, step):
        return step - self.plan.n_equilibration

    def _flux_due(self, step):
        ps = self._production_step(step)
        if ps <= 0:
            return False
        return any(s.needs_flux and ps % s.stride == 0 for s in self.samplers)

    def kinetic_temperature(self):
        k_t, k_r = kinetic_energies(self.state, self.mass, self.inertia)
        f_t, f_r = degrees_of_freedom(self.mass, self.inertia)
        return 2.0 * (k_t + k_r) / (f_t + f_r), 2.0 * k_t / f_t

    def thermostat(self, temperature=None):
        """Isokinetic rescaling; returns (translational, rotational) scale factors."""
        return rescale_to_temperature(self.state, self.mass, self.inertia,
                                      self.temperature if temperature is None else temperature)

    def _rotate(self, q, ang_mom, axis, h):
        moment = self.inertia[:, axis]
        phi = np.zeros(len(moment))
        ok = moment > 0.0
        phi[ok] = h * ang_mom[ok, axis] / moment[ok]
        q = quat_multiply(q, axis_angle_quat(axis, phi))
        c, s = np.cos(phi), np.sin(phi)
        o1, o2 = (axis + 1) % 3, (axis + 2) % 3
        l1 = ang_mom[:, o1].copy()
        l2 = ang_mom[:, o2]
        ang_mom[:, o1] = c * l1 + s * l2
        ang_mom[:, o2] = -s * l1 + c * l2
        return q

    def step(self):
        """Advance one time step and recompute forces."""
        st = self.state
        dt = self.plan.dt
        half = 0.5 * dt
        inv_m = 1.0 / self.mass[:, None]
        st.velocities += half * st.forces * inv_m
        st.positions += dt * st.velocities
        st.positions -= st.box_length * np.floor(st.positions / st.box_length)
        if self.rotating:
            dof = self.inertia > 0.0
            ang = self.inertia * st.omega
            rot = quat_to_matrix(st.quaternions)
            tau_body = np.einsum("nji,nj->ni", rot, st.torques)
            ang += half * np.where(dof, tau_body, 0.0)
            q = st.quaternions
            for axis, h in ((0, half), (1, half), (2, dt), (1, half), (0, half)):
                q = self._rotate(q, ang, axis, h)
            st.quaternions = normalize(q)
            st.omega = np.where(dof, ang / np.where(dof, self.inertia, 1.0), 0.0)
        self.step_count += 1
        st.step = self.step_count
        ev = self.evaluator.evaluate(st, with_flux=self._flux_due(self.step_count))
        self._store(ev)
        st.velocities += half * st.forces * inv_m
        if self.rotating:
            rot = quat_to_matrix(st.quaternions)
            tau_body = np.einsum("nji,nj->ni", rot, st.torques)
            ang = self.inertia * st.omega + half * np.where(dof, tau_body, 0.0)
            st.omega = np.where(dof, ang / np.where(dof, self.inertia, 1.0), 0.0)
        self._check_finite()
        self.last_eval = ev
        return ev

    def _check_finite(self):
        st = self.state
        bad = ~(
            np.isfinite(st.positions).all(axis=1)
            & np.isfinite(st.velocities).all(axis=1)
            & np.isfinite(st.omega).all(axis=1)
            & np.isfinite(st.quaternions).all(axis=1)
        )
        if np.any(bad):
            idx = np.flatnonzero(bad)[:5]
            rows = "; ".join(
                f"mol {i}: r={st.positions[i]}, v={st.velocities[i]}, F={st.forces[i]}" for i in idx
            )
            raise SimulationError(f"non-finite state at step {self.step_count} ({np.count_nonzero(bad)} molecules): {rows}")

    @property
    def total_steps(self):
        return self.plan.n_equilibration + self.plan.n_production

    @property
    def finished(self):
        return self.step_count >= self.total_steps

    def advance(self, n_steps=None):
        """Run up to ``n_steps`` further steps (default: to the end of the plan)."""
        target = self.total_steps if n_steps is None else min(self.total_steps, self.step_count + n_steps)
        plan = self.plan
        while self.step_count < target:
            ev = self.step()
            s = self.step_count
            ps = self._production_step(s)
            if ps <= 0:
                if plan.thermostat_interval_equilibration and s % plan.thermostat_interval_equilibration == 0:
                    self.thermostat()
                for smp in self.samplers:
                    smp.observe_equilibration(self, s)
                continue
            if not plan.nve and plan.thermostat_interval_production and ps % plan.thermostat_interval_production == 0:
                self.thermostat()
            for smp in self.samplers:
                if ps % smp.stride == 0:
                    smp.sample(self, ev)

    def results(self):
        st = self.state
        bundle = ResultsBundle(
            meta={
                "n_molecules": st.n_molecules,
                "volume": st.volume,
                "density": st.n_molecules / st.volume,
                "temperature": self.temperature,
                "dt": self.plan.dt,
                "n_equilibration": self.plan.n_equilibration,
                "n_production": self.plan.n_production,
                "steps_done": self.step_count,
                "n_ext": self.plan.n_ext,
                "cutoff": self.evaluator.r_c,
                "electrostatics": self.evaluator.electrostatics.method,
                "workers": self.evaluator.workers,
                "seed": self.seed,
                "prng": PRNG_NAME,
            }
        )
        if self._production_step(self.step_count) <= 0:
            return bundle
        for s in self.samplers:
            s.contribute(self, bundle)
        return bundle

    # -- restart ------------------------------------------------------------
    def checkpoint_bytes(self):
        st = self.state
        rec = {
            "config": self.config_text,
            "step_count": np.array(self.step_count),
            "seed": np.array(self.seed),
            "rng_state": self.rng_state,
            "state/box_length": np.array(st.box_length),
            "state/species_index": st.species_index,
            "state/positions": st.positions,
            "state/quaternions": st.quaternions,
            "state/velocities": st.velocities,
            "state/omega": st.omega,
        }
        for s in self.samplers:
            rec.update(ckpt.nest(f"sampler/{s.name}", s.state_dict()))
        return ckpt.pack(rec)

    def write_checkpoint(self, path):
        data = self.checkpoint_bytes()
        try:
            with open(path, "wb") as fh:
                fh.write(data)
        except OSError as exc:
            raise SimulationError(f"cannot write checkpoint {path}: {exc}") from None

    def load_checkpoint(self, data):
        rec = ckpt.unpack(data) if isinstance(data, (bytes, bytearray)) else data
        try:
            st = self.state
            if not np.array_equal(rec["state/species_index"], st.species_index):
                raise CheckpointError("checkpoint does not match this system's composition")
            st.box_length = float(rec["state/box_length"])
            st.positions = rec["state/positions"].copy()
            st.quaternions = rec["state/quaternions"].copy()
            st.velocities = rec["state/velocities"].copy()
            st.omega = rec["state/omega"].copy()
            self.step_count = int(rec["step_count"])
            st.step = self.step_count
            self.rng_state = rec["rng_state"]
            for s in self.samplers:
                s.load_state_dict(ckpt.sub(rec, f"sampler/{s.name}"))
        except KeyError as exc:
            raise CheckpointError(f"checkpoint lacks record {exc}") from None
        self.last_eval = self.evaluator.evaluate(st, with_flux=self._flux_due(self.step_count))
        self._store(self.last_eval)


def run(composition, plan, seed, r_c, electrostatics=None, workers=1, checkpoint_path=None,
        checkpoint_interval=0):
    """Equilibrate, produce, and return the finalized :class:`ResultsBundle`."""
    sim = Simulation(composition, plan, r_c, electrostatics, workers, seed)
    if checkpoint_path and checkpoint_interval:
        while not sim.finished:
            sim.advance(checkpoint_interval)
            sim.write_checkpoint(checkpoint_path)
    else:
        sim.advance()
        if checkpoint_path:
            sim.write_checkpoint(checkpoint_path)
    bundle = sim.results()
    sim.evaluator.close()
    return bundle
