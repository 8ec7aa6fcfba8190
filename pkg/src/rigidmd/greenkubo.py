"""Green-Kubo machinery: ring-buffered multiple-origin autocorrelation,
microscopic fluxes and transport coefficient estimators.

Fluxes are sampled every ``n_ext`` MD steps, so a correlation window of M lags
spans (M - 1) * n_ext * dt and memory is O(M) regardless of run length.
Time integrals use the trapezoidal rule over the M lags.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .rotation import quat_to_matrix
from .stats import BlockAccumulator

PLATEAU_FRACTION = 0.2
PLATEAU_TOLERANCE = 0.05


def trapezoid_running(c, dt):
    """Running trapezoidal integral, same length as ``c`` (starts at 0)."""
    out = np.zeros(len(c))
    if len(c) > 1:
        out[1:] = np.cumsum(0.5 * dt * (c[1:] + c[:-1]))
    return out


def plateau_converged(running, fraction=PLATEAU_FRACTION, tol=PLATEAU_TOLERANCE):
    """True if the running integral varies by less than ``tol`` (relative to its
    final magnitude) over the trailing ``fraction`` of the window."""
    m = len(running)
    if m < 5:
        return False
    tail = running[int(math.floor((1.0 - fraction) * (m - 1))) :]
    spread = float(tail.max() - tail.min())
    scale = abs(float(running[-1]))
    if scale == 0.0:
        return spread == 0.0
    return spread <= tol * scale


class CorrelationSet:
    """Multiple-origin autocorrelation of a (possibly array-valued) flux.

    ``acf[lag] = <x(t + lag) . x(t)> / norm`` where ``.`` contracts every
    element of the sample. Every stored sample serves as a time origin.
    """

    def __init__(self, name, n_lags, n_ext, dt, shape=(3,), norm=1.0, n_blocks=10):
        if n_lags < 1 or n_ext < 1:
            raise ValueError("need n_lags >= 1 and n_ext >= 1")
        self.name = name
        self.n_lags = int(n_lags)
        self.n_ext = int(n_ext)
        self.dt = float(dt)
        self.shape = tuple(int(s) for s in shape)
        self.norm = float(norm)
        self.size = int(np.prod(self.shape)) if self.shape else 1
        self.ring = np.zeros((self.n_lags, self.size))
        self.head = -1  # slot of the newest sample
        self.n_added = 0
        self.blocks = BlockAccumulator(self.n_lags, n_blocks)

    @property
    def lag_time(self):
        return self.n_ext * self.dt

    @property
    def times(self):
        return np.arange(self.n_lags) * self.lag_time

    @property
    def nbytes(self):
        return self.ring.nbytes + self.blocks.sums.nbytes + self.blocks.counts.nbytes

    def add(self, sample):
        x = np.asarray(sample, dtype=float).reshape(self.size)
        self.head = (self.head + 1) % self.n_lags
        self.ring[self.head] = x
        self.n_added += 1
        avail = min(self.n_added, self.n_lags)
        slots = (self.head - np.arange(avail)) % self.n_lags
        contrib = np.zeros(self.n_lags)
        counts = np.zeros(self.n_lags)
        contrib[:avail] = self.ring[slots] @ x
        counts[:avail] = 1.0
        self.blocks.add(contrib, counts)

    def acf(self):
        s, c = self.blocks.totals()
        out = np.zeros(self.n_lags)
        np.divide(s, c * self.norm, out=out, where=c > 0)
        return out

    def integral(self):
        return trapezoid_running(self.acf(), self.lag_time)

    def integral_error(self):
        def est(s, c):
            acf = np.zeros(self.n_lags)
            np.divide(s, c * self.norm, out=acf, where=c > 0)
            return trapezoid_running(acf, self.lag_time)[-1]

        return float(self.blocks.block_error(est))

    def state_dict(self):
        d = {f"blocks/{k}": v for k, v in self.blocks.state_dict().items()}
        d.update(
            name=self.name,
            n_lags=np.array(self.n_lags),
            n_ext=np.array(self.n_ext),
            dt=np.array(self.dt),
            shape=np.array(self.shape, dtype=np.int64),
            norm=np.array(self.norm),
            ring=self.ring,
            head=np.array(self.head),
            n_added=np.array(self.n_added),
        )
        return d

    @classmethod
    def from_state(cls, d):
        obj = cls(
            str(d["name"]),
            int(d["n_lags"]),
            int(d["n_ext"]),
            float(d["dt"]),
            tuple(np.asarray(d["shape"]).tolist()),
            float(d["norm"]),
        )
        ring = np.asarray(d["ring"], dtype=float)
        if ring.shape != obj.ring.shape:
            raise CheckpointError(f"correlation ring of {obj.name!r} has shape {ring.shape}")
        obj.ring = ring.copy()
        obj.head = int(d["head"])
        obj.n_added = int(d["n_added"])
        obj.blocks = BlockAccumulator.from_state({k[7:]: v for k, v in d.items() if k.startswith("blocks/")})
        return obj

    def to_bytes(self):
        from .checkpoint import pack

        return pack(self.state_dict())

    @classmethod
    def from_bytes(cls, data):
        from .checkpoint import unpack

        return cls.from_state(unpack(data))


@dataclass
class TransportResult:
    name: str
    value: float
    error: float
    units: str
    converged: bool
    times: np.ndarray = None
    acf: np.ndarray = None
    running: np.ndarray = None
    prefactor: float = 1.0
    flags: list = field(default_factory=list)


def _estimate(cs, name, prefactor, units):
    acf = cs.acf()
    running = trapezoid_running(acf, cs.lag_time)
    err = cs.integral_error()
    converged = plateau_converged(running)
    flags = [] if converged else ["running integral has not reached a plateau"]
    return TransportResult(
        name,
        prefactor * float(running[-1]),
        abs(prefactor) * err,
        units,
        converged,
        cs.times,
        acf,
        running,
        prefactor,
        flags,
    )


def electric_current_flux(velocities, charges):
    """j_e = sum_k q_k v_k over net-charged molecules (centre-of-mass velocities)."""
    charges = np.asarray(charges, dtype=float)
    ions = charges != 0.0
    if not np.any(ions):
        return np.zeros(3)
    return charges[ions] @ np.asarray(velocities)[ions]


def electric_conductivity(cs, volume, temperature):
    """sigma = 1/(3 V k_B T) int <j_e(t) . j_e(0)> dt; the dot product averages
    the three Cartesian components."""
    return _estimate(cs, "electric_conductivity", 1.0 / (3.0 * volume * temperature), "q^2/(sigma*tau*eps)")


def thermal_conductivity(cs, volume, temperature):
    """lambda = 1/(V k_B T^2) int <J_q^x(t) J_q^x(0)> dt, averaged over x, y, z."""
    return _estimate(
        cs, "thermal_conductivity", 1.0 / (3.0 * volume * temperature**2), "k_B/(sigma*tau)"
    )


def self_diffusion(cs):
    """D = (1/3) int <v_k(t) . v_k(0)> dt; ``cs.norm`` is the molecule count."""
    return _estimate(cs, f"self_diffusion_{cs.name}", 1.0 / 3.0, "sigma^2/tau")


def heat_flux(velocities, omega, quaternions, mass, inertia, species_index, enthalpies,
              pair_energy=None, pair_rf=None, pair_rtau=None):
    """Microscopic heat flux of a rigid-molecule mixture.

    J_q = sum_k [1/2 m v^2 + 1/2 w.I.w + 1/2 sum_l u_kl] v_k
          + 1/2 sum_k sum_l r_kl (F_kl . v_k + tau_kl . w_k)
          - sum_i h_i sum_{k in i} v_k

    F_kl and tau_kl are force and torque on k due to l, r_kl = r_k - r_l, and
    w_k is the lab-frame angular velocity. This is the usual power form: the
    orientational term uses Gamma_kl = -tau_kl, the derivative of u_kl with
    respect to a rotation of k, so that -(w . Gamma) = +(tau . w).
    ``pair_*`` come from a force evaluation with flux accumulation enabled
    and may be omitted for interaction-free systems.
    """
    v = np.asarray(velocities, dtype=float)
    w_body = np.asarray(omega, dtype=float)
    e = 0.5 * mass * np.einsum("ij,ij->i", v, v) + 0.5 * np.einsum("ij,ij->i", inertia * w_body, w_body)
    if pair_energy is not None:
        e = e + 0.5 * pair_energy
    j = e @ v
    if pair_rf is not None:
        j = j + 0.5 * np.einsum("kpq,kq->p", pair_rf.reshape(-1, 3, 3), v)
    if pair_rtau is not None:
        w_lab = np.einsum("kij,kj->ki", quat_to_matrix(quaternions), w_body)
        j = j + 0.5 * np.einsum("kpq,kq->p", pair_rtau.reshape(-1, 3, 3), w_lab)
    enthalpy_term = np.zeros(3)
    for i, h in enumerate(enthalpies):
        members = species_index == i
        enthalpy_term = enthalpy_term + h * v[members].sum(axis=0)
    return j - enthalpy_term


def pure_heat_flux(velocities, omega, quaternions, mass, inertia, enthalpy,
                   pair_energy=None, pair_rf=None, pair_rtau=None):
    """Single-component heat flux, J_q = sum_k e_k v_k + pair term - h sum_k v_k."""
    v = np.asarray(velocities, dtype=float)
    w_body = np.asarray(omega, dtype=float)
    e = 0.5 * mass * np.einsum("ij,ij->i", v, v) + 0.5 * np.einsum("ij,ij->i", inertia * w_body, w_body)
    if pair_energy is not None:
        e = e + 0.5 * pair_energy
    j = e @ v
    if pair_rf is not None:
        j = j + 0.5 * np.einsum("kpq,kq->p", pair_rf.reshape(-1, 3, 3), v)
    if pair_rtau is not None:
        w_lab = np.einsum("kij,kj->ki", quat_to_matrix(quaternions), w_body)
        j = j + 0.5 * np.einsum("kpq,kq->p", pair_rtau.reshape(-1, 3, 3), w_lab)
    return j - (np.zeros(3) + enthalpy * v.sum(axis=0))


class ResidenceCorrelation:
    """Solvation-shell survival correlation (Impey tolerance ``t_star``).

    Every sample opens a time origin. For origin t0 and solute i, partner k
    counts at time t if it was inside the shell at t0 and since then has never
    been outside for longer than t_star; it still counts while it is outside
    for at most t_star. The correlation at lag t is the mean over origins and
    solutes (with a non-empty shell at t0) of the surviving fraction.
    """

    def __init__(self, name, n_lags, n_ext, dt, n_solute, n_partner, t_star=0.0, n_blocks=10):
        self.name = name
        self.n_lags = int(n_lags)
        self.n_ext = int(n_ext)
        self.dt = float(dt)
        self.t_star = float(t_star)
        self.n_solute = int(n_solute)
        self.n_partner = int(n_partner)
        shape = (self.n_lags, self.n_solute, self.n_partner)
        self.alive = np.zeros(shape, dtype=bool)
        self.gap = np.zeros(shape, dtype=np.int64)
        self.n0 = np.zeros((self.n_lags, self.n_solute), dtype=np.int64)
        self.head = -1
        self.n_added = 0
        self.blocks = BlockAccumulator(self.n_lags, n_blocks)

    @property
    def lag_time(self):
        return self.n_ext * self.dt

    @property
    def times(self):
        return np.arange(self.n_lags) * self.lag_time

    @property
    def max_gap(self):
        # samples a partner may spend outside and still count
        return int(math.floor(self.t_star / self.lag_time + 1e-9))

    def add(self, occupancy):
        occ = np.asarray(occupancy, dtype=bool).reshape(self.n_solute, self.n_partner)
        # age existing origins
        live = min(self.n_added, self.n_lags - 1)
        slots = (self.head - np.arange(live)) % self.n_lags if live else np.zeros(0, dtype=np.int64)
        if live:
            g = self.gap[slots]
            g = np.where(occ[None], 0, g + 1)
            self.gap[slots] = g
            self.alive[slots] &= g <= self.max_gap
        # open a new origin
        self.head = (self.head + 1) % self.n_lags
        self.alive[self.head] = occ
        self.gap[self.head] = 0
        self.n0[self.head] = occ.sum(axis=1)
        self.n_added += 1

        avail = min(self.n_added, self.n_lags)
        all_slots = (self.head - np.arange(avail)) % self.n_lags
        n0 = self.n0[all_slots]
        surv = self.alive[all_slots].sum(axis=2)
        ok = n0 > 0
        frac = np.zeros_like(surv, dtype=float)
        np.divide(surv, n0, out=frac, where=ok)
        contrib = np.zeros(self.n_lags)
        counts = np.zeros(self.n_lags)
        contrib[:avail] = frac.sum(axis=1)
        counts[:avail] = ok.sum(axis=1)
        self.blocks.add(contrib, counts)

    def correlation(self):
        s, c = self.blocks.totals()
        out = np.full(self.n_lags, np.nan)
        np.divide(s, c, out=out, where=c > 0)
        return out

    def state_dict(self):
        d = {f"blocks/{k}": v for k, v in self.blocks.state_dict().items()}
        d.update(
            name=self.name,
            n_lags=np.array(self.n_lags),
            n_ext=np.array(self.n_ext),
            dt=np.array(self.dt),
            t_star=np.array(self.t_star),
            n_solute=np.array(self.n_solute),
            n_partner=np.array(self.n_partner),
            alive=self.alive,
            gap=self.gap,
            n0=self.n0,
            head=np.array(self.head),
            n_added=np.array(self.n_added),
        )
        return d

    @classmethod
    def from_state(cls, d):
        obj = cls(
            str(d["name"]),
            int(d["n_lags"]),
            int(d["n_ext"]),
            float(d["dt"]),
            int(d["n_solute"]),
            int(d["n_partner"]),
            float(d["t_star"]),
        )
        obj.alive = np.asarray(d["alive"], dtype=bool).reshape(obj.alive.shape).copy()
        obj.gap = np.asarray(d["gap"], dtype=np.int64).reshape(obj.gap.shape).copy()
        obj.n0 = np.asarray(d["n0"], dtype=np.int64).reshape(obj.n0.shape).copy()
        obj.head = int(d["head"])
        obj.n_added = int(d["n_added"])
        obj.blocks = BlockAccumulator.from_state({k[7:]: v for k, v in d.items() if k.startswith("blocks/")})
        return obj


def residence_time(rc):
    """tau = int C(t) dt over the correlation window; None if every shell was empty."""
    corr = rc.correlation()
    if not np.isfinite(corr[0]):
        return None
    corr = np.nan_to_num(corr, nan=0.0)
    running = trapezoid_running(corr, rc.lag_time)

    def est(s, c):
        cc = np.zeros(rc.n_lags)
        np.divide(s, c, out=cc, where=c > 0)
        return trapezoid_running(cc, rc.lag_time)[-1]

    err = float(rc.blocks.block_error(est))
    converged = plateau_converged(running)
    return TransportResult(
        f"residence_time_{rc.name}",
        float(running[-1]),
        err,
        "tau",
        converged,
        rc.times,
        corr,
        running,
        1.0,
        [] if converged else ["running integral has not reached a plateau"],
    )


def shell_occupancy(positions, box_length, solute_idx, partner_idx, radius):
    """Boolean (n_solute, n_partner) matrix of centre distances below ``radius``."""
    d = positions[solute_idx][:, None, :] - positions[partner_idx][None, :, :]
    d -= box_length * np.floor(d / box_length + 0.5)
    occ = np.einsum("ijk,ijk->ij", d, d) < radius * radius
    same = solute_idx[:, None] == partner_idx[None, :]
    occ[same] = False
    return occ
