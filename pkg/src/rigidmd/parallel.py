"""Thread-parallel force, torque and energy evaluation.

The flattened molecule-pair index space is cut into W contiguous chunks. Each
worker runs the compiled pair kernel (which drops the GIL) over its chunk and
writes only into its own :class:`ThreadBuffers`: full-length force and torque
arrays plus scalar accumulators. No atomics, no locks. After the join the
buffers are summed in fixed worker order 0..W-1, so the result for a given W
does not depend on thread scheduling.

A distributed (rank-level) decomposition would sit one level above this: each
rank would own a slice of the pair index space and call
:meth:`ForceEvaluator.evaluate` over it, followed by an all-reduce of the
reduced buffers.
"""

import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import ewald, kernels
from .potentials import EnergyBreakdown, PairTable, lj_lrc, rf_constants
from .rotation import quat_to_matrix


def default_workers():
    """Physical core count available to this process (logical count as fallback)."""
    logical = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    cores = set()
    try:
        with open("/proc/cpuinfo") as fh:
            phys = None
            for line in fh:
                key, _, val = line.partition(":")
                key = key.strip()
                if key == "physical id":
                    phys = val.strip()
                elif key == "core id":
                    cores.add((phys, val.strip()))
    except OSError:
        pass
    return max(1, min(logical, len(cores))) if cores else max(1, logical)


@dataclass
class Electrostatics:
    """Electrostatics settings: ``none``, ``reaction_field`` or ``ewald``."""

    method: str = "none"
    eps_rf: float = math.inf
    alpha: float = None
    k_max: int = None
    delta: float = 1e-5


class ThreadBuffers:
    """Private accumulation target of one worker."""

    def __init__(self, n, owner):
        self.owner = owner
        self.force = np.zeros((n, 3))
        self.torque = np.zeros((n, 3))
        self.scalars = np.zeros(kernels.N_SCALARS)
        self.e_mol = np.zeros(n)
        self.t_mol = np.zeros((n, 9))
        self.r_mol = np.zeros((n, 9))
        self.writer = None

    def reset(self, with_flux):
        self.force.fill(0.0)
        self.torque.fill(0.0)
        self.scalars.fill(0.0)
        if with_flux:
            self.e_mol.fill(0.0)
            self.t_mol.fill(0.0)
            self.r_mol.fill(0.0)
        self.writer = None


@dataclass
class Evaluation:
    forces: np.ndarray
    torques: np.ndarray
    energy: EnergyBreakdown
    offsets: np.ndarray = None
    pair_energy: np.ndarray = None  # per molecule, sum over partners of u_kl
    pair_rf: np.ndarray = None  # per molecule, sum over partners of r_kl (x) F_kl, row-major 3x3
    pair_rtau: np.ndarray = None  # per molecule, sum over partners of r_kl (x) tau_kl


def chunk_bounds(n_pairs, workers):
    return [(w * n_pairs) // workers for w in range(workers + 1)]


class ForceEvaluator:
    """Evaluates forces, torques, energies and volume derivatives of a state."""

    def __init__(self, composition, r_c, electrostatics=None, workers=1, species_index=None, debug=False):
        if workers < 1:
            raise ValueError("worker count must be >= 1")
        self.composition = composition
        self.electrostatics = electrostatics or Electrostatics()
        self.table = PairTable(composition, r_c, species_index)
        self.workers = int(workers)
        self.debug = debug
        es = self.electrostatics
        composition.check_electrostatics(es.method)
        n = self.table.n_molecules
        self.buffers = [ThreadBuffers(n, w) for w in range(self.workers)]
        self._pool = None

        ext = [
            float(np.max(np.linalg.norm(body, axis=1))) if len(body) else 0.0
            for body, _, _ in self.table.per_species
        ]
        self.extent = np.array([ext[k] for k in self.table.species_index])

        self.mode = kernels.MODE_NONE
        self.par_a = self.par_b = 0.0
        self.recip = None
        if es.method == "reaction_field":
            self.mode = kernels.MODE_RF
            self.par_a, self.par_b = rf_constants(es.eps_rf, self.table.r_c)
        elif es.method == "ewald":
            self.mode = kernels.MODE_EWALD
            alpha, k_max = es.alpha, es.k_max
            if alpha is None or k_max is None:
                alpha, k_max = ewald.tune(es.delta, self.table.r_c, composition.box_length)
            self.alpha, self.k_max = alpha, k_max
            self.par_a = alpha
            self.recip = ewald.EwaldReciprocal(alpha, k_max, composition.box_length, tolerance=es.delta)
            self.u_self = ewald.self_energy(alpha, self.table.site_q)
            intra = [ewald.intramolecular_energy(alpha, body, q) for body, _, q in self.table.per_species]
            self.u_intra = float(sum(intra[k] for k in self.table.species_index))
        self.lrc = lj_lrc(composition, self.table.r_c)

    @property
    def r_c(self):
        return self.table.r_c

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _run_chunk(self, w, p0, p1, com, offs, box, with_flux):
        buf = self.buffers[w]
        if self.debug:
            me = threading.get_ident()
            assert buf.owner == w, "buffer handed to the wrong worker"
            assert buf.writer is None or buf.writer == me, "buffer shared between threads"
            buf.writer = me
        t = self.table
        kernels.pair_chunk(
            p0,
            p1,
            com,
            t.site_start,
            offs,
            self.extent,
            t.site_type,
            t.site_q,
            box,
            t.r_c * t.r_c,
            t.sig2,
            t.eps4,
            self.mode,
            self.par_a,
            self.par_b,
            with_flux,
            buf.force,
            buf.torque,
            buf.scalars,
            buf.e_mol,
            buf.t_mol,
            buf.r_mol,
        )

    def evaluate(self, state, with_flux=False):
        n = state.n_molecules
        box = float(state.box_length)
        com = np.ascontiguousarray(state.positions, dtype=float)
        rot = quat_to_matrix(state.quaternions)
        offs = np.ascontiguousarray(self.table.lab_offsets(rot))
        n_pairs = n * (n - 1) // 2
        bounds = chunk_bounds(n_pairs, self.workers)
        for buf in self.buffers:
            buf.reset(with_flux)

        if self.workers == 1:
            self._run_chunk(0, bounds[0], bounds[1], com, offs, box, with_flux)
        else:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="pairs")
            futures = [
                self._pool.submit(self._run_chunk, w, bounds[w], bounds[w + 1], com, offs, box, with_flux)
                for w in range(self.workers)
            ]
            for f in futures:
                f.result()

        # fixed-order reduction
        first = self.buffers[0]
        forces = first.force.copy()
        torques = first.torque.copy()
        scal = first.scalars.copy()
        e_mol = t_mol = r_mol = None
        if with_flux:
            e_mol, t_mol, r_mol = first.e_mol.copy(), first.t_mol.copy(), first.r_mol.copy()
        for buf in self.buffers[1:]:
            forces += buf.force
            torques += buf.torque
            scal += buf.scalars
            if with_flux:
                e_mol += buf.e_mol
                t_mol += buf.t_mol
                r_mol += buf.r_mol

        vol = box**3
        en = EnergyBreakdown()
        en.u_lj = float(scal[kernels.S_ULJ])
        en.cutoff_shift = float(scal[kernels.S_SHIFT])
        en.virial = float(scal[kernels.S_VIRIAL])
        en.u_lrc, en.du_dv_lrc, en.d2u_dv2_lrc = self.lrc
        if self.mode == kernels.MODE_RF:
            en.u_rf = float(scal[kernels.S_UELEC])
        elif self.mode == kernels.MODE_EWALD:
            en.u_elec_real = float(scal[kernels.S_UELEC])
        s_l = float(scal[kernels.S_DL])
        s_ll = float(scal[kernels.S_DLL])
        en.du_dv = s_l / (3.0 * vol)
        en.d2u_dv2 = (s_ll - 2.0 * s_l) / (9.0 * vol * vol)

        if self.mode == kernels.MODE_EWALD:
            t = self.table
            mol_of_site = np.repeat(np.arange(n), np.diff(t.site_start))
            sites = com[mol_of_site] + offs
            u_rec, f_site = self.recip.energy_forces(sites, t.site_q)
            en.u_elec_recip = u_rec
            en.u_elec_self = self.u_self + self.u_intra
            idx = t.site_start[:-1]
            nonempty = np.diff(t.site_start) > 0
            f_mol = np.zeros((n, 3))
            tq_mol = np.zeros((n, 3))
            if len(sites):
                f_mol[nonempty] = np.add.reduceat(f_site, idx[nonempty], axis=0)
                tq_mol[nonempty] = np.add.reduceat(np.cross(offs, f_site), idx[nonempty], axis=0)
            forces += f_mol
            torques += tq_mol
            # no analytic volume derivatives for the reciprocal part
            en.du_dv = en.d2u_dv2 = math.nan
            en.virial = math.nan

        return Evaluation(forces, torques, en, offs, e_mol, t_mol, r_mol)
