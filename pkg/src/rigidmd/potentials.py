"""Pair potentials, analytic volume derivatives, tail corrections and the
flattened interaction table used by the force kernels.

Volume derivatives refer to uniform scaling of molecular centres at fixed
orientation; with ``lambda`` the linear scale factor,

    dU/dV   = U_l / (3V)
    d2U/dV2 = (U_ll - 2 U_l) / (9 V^2)

where ``U_l`` and ``U_ll`` are the first and second derivatives of U with
respect to ``lambda`` at ``lambda = 1``. For atoms these reduce to the familiar
sums of r u'(r) and r^2 u''(r).
"""

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ModelError


class LJPair(NamedTuple):
    u: float
    force_over_r: float  # -u'(r)/r
    r_du: float  # r u'(r)
    r2_d2u_minus_2r_du: float  # r^2 u''(r) - 2 r u'(r)


def lj_pair(r2, sigma, epsilon):
    """12-6 Lennard-Jones energy and the radial derivative combinations."""
    if r2 <= 0.0:
        raise ConfigurationError("overlapping interaction sites (r = 0)")
    s6 = (sigma * sigma / r2) ** 3
    s12 = s6 * s6
    u = 4.0 * epsilon * (s12 - s6)
    r_du = -24.0 * epsilon * (2.0 * s12 - s6)
    r2_d2u = 24.0 * epsilon * (26.0 * s12 - 7.0 * s6)
    return LJPair(u, -r_du / r2, r_du, r2_d2u - 2.0 * r_du)


def coulomb_pair(r, q1, q2):
    """Bare Coulomb energy q1 q2 / r and its radial derivative."""
    if r <= 0.0:
        raise ConfigurationError("coincident point charges (r = 0)")
    u = q1 * q2 / r
    return u, -u / r


def rf_factor(eps_rf):
    """(eps_RF - 1) / (2 eps_RF + 1); ``inf`` gives the conducting limit 1/2."""
    if math.isinf(eps_rf):
        return 0.5
    return (eps_rf - 1.0) / (2.0 * eps_rf + 1.0)


def rf_constants(eps_rf, r_c):
    """(k_rf, c_rf) of u = q1 q2 (1/r + k_rf r^2 - c_rf), which vanishes at r_c."""
    k = rf_factor(eps_rf) / r_c**3
    c = 1.0 / r_c + k * r_c * r_c
    return k, c


def rf_pair(r, q1, q2, eps_rf, r_c):
    """Reaction-field charge pair: (u, du/dr, d2u/dr2)."""
    if r <= 0.0:
        raise ConfigurationError("coincident point charges (r = 0)")
    k, c = rf_constants(eps_rf, r_c)
    qq = q1 * q2
    return (
        qq * (1.0 / r + k * r * r - c),
        qq * (-1.0 / (r * r) + 2.0 * k * r),
        qq * (2.0 / r**3 + 2.0 * k),
    )


def volume_derivatives(sum_l, sum_ll, volume):
    """Turn accumulated scale derivatives into (dU/dV, d2U/dV2).

    For atoms ``sum_l`` is sum r u'(r) and ``sum_ll`` is sum r^2 u''(r).
    """
    return sum_l / (3.0 * volume), (sum_ll - 2.0 * sum_l) / (9.0 * volume * volume)


@dataclass
class EnergyBreakdown:
    u_lj: float = 0.0
    u_elec_real: float = 0.0
    u_elec_recip: float = 0.0
    u_elec_self: float = 0.0  # self energy plus intramolecular exclusion (Ewald)
    u_rf: float = 0.0
    u_lrc: float = 0.0
    du_dv: float = 0.0
    du_dv_lrc: float = 0.0
    d2u_dv2: float = 0.0
    d2u_dv2_lrc: float = 0.0
    virial: float = 0.0  # sum over molecule pairs of R_ij . F_ij
    cutoff_shift: float = 0.0  # sum of u_LJ(r_c) over pairs inside r_c; not part of U

    @property
    def total(self):
        return self.u_lj + self.u_elec_real + self.u_elec_recip + self.u_elec_self + self.u_rf + self.u_lrc

    @property
    def du_dv_total(self):
        return self.du_dv + self.du_dv_lrc

    @property
    def d2u_dv2_total(self):
        return self.d2u_dv2 + self.d2u_dv2_lrc

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def lorentz_berthelot(sig_a, eps_a, sig_b, eps_b):
    return 0.5 * (sig_a + sig_b), math.sqrt(eps_a * eps_b)


def lj_lrc(composition, r_c, volume=None):
    """Site-site LJ tail correction (U, dU/dV, d2U/dV2), assuming g(r) = 1 beyond r_c.

    U_LRC = (2 pi / V) sum_{a,b} N_a N_b int_{r_c}^inf u_ab(r) r^2 dr, summed
    over ordered site-type pairs. The volume derivatives are taken under the
    same uniform scaling as the explicit pair sum, i.e. with r_c scaling as
    V^(1/3) together with the frozen set of pairs inside it. The (sigma/r_c)^9
    part then goes as V^-4 and the (sigma/r_c)^3 part as V^-2, and dU/dV is
    the tail integral of r u'(r) / 3V, which also carries the pairs crossing
    the cutoff of the unshifted potential.
    """
    if r_c <= 0.0:
        raise ModelError("cutoff radius must be positive")
    if volume is None:
        volume = composition.volume
    sites = []
    for spec, count in zip(composition.species, composition.counts):
        for s in spec.sites:
            if s.is_lj and count > 0:
                sites.append((count, s.sigma, s.epsilon))
    u9 = u3 = 0.0
    for na, sa, ea in sites:
        for nb, sb, eb in sites:
            sig, eps = lorentz_berthelot(sa, ea, sb, eb)
            x3 = (sig / r_c) ** 3
            u9 += na * nb * 4.0 * eps * sig**3 * x3**3 / 9.0
            u3 -= na * nb * 4.0 * eps * sig**3 * x3 / 3.0
    f = 2.0 * math.pi / volume
    u9 *= f
    u3 *= f
    v = volume
    return u9 + u3, -(4.0 * u9 + 2.0 * u3) / v, (20.0 * u9 + 6.0 * u3) / v**2


class PairTable:
    """Flattened interaction topology for a composition.

    Only sites that interact (LJ with epsilon > 0, or non-zero charges) are
    included. Each (species, site) gets its own type index into the combined
    LJ parameter tables (Lorentz-Berthelot mixing).
    """

    def __init__(self, composition, r_c, species_index=None):
        if r_c <= 0.0:
            raise ModelError("cutoff radius must be positive")
        if r_c > 0.5 * composition.box_length * (1.0 + 1e-12):
            raise ModelError(f"cutoff {r_c} exceeds half the box length {0.5 * composition.box_length}")
        self.r_c = float(r_c)
        self.composition = composition
        if species_index is None:
            species_index = composition.species_index()
        self.species_index = np.asarray(species_index)

        types = []  # (sigma, epsilon)
        per_species = []
        for spec in composition.species:
            body, tid, q = [], [], []
            for s in spec.sites:
                if not (s.is_lj or s.is_charge):
                    continue
                body.append(s.position)
                q.append(s.q if s.kind == "charge" else 0.0)
                if s.is_lj:
                    tid.append(len(types))
                    types.append((s.sigma, s.epsilon))
                else:
                    tid.append(-1)
            per_species.append(
                (np.array(body, float).reshape(-1, 3), np.array(tid, np.int64), np.array(q, float))
            )
        nt = max(len(types), 1)
        self.sig2 = np.zeros((nt, nt))
        self.eps4 = np.zeros((nt, nt))
        for a, (sa, ea) in enumerate(types):
            for b, (sb, eb) in enumerate(types):
                sig, eps = lorentz_berthelot(sa, ea, sb, eb)
                self.sig2[a, b] = sig * sig
                self.eps4[a, b] = 4.0 * eps
        self.per_species = per_species

        counts = np.array([len(per_species[k][1]) for k in self.species_index], np.int64)
        self.site_start = np.zeros(len(counts) + 1, np.int64)
        np.cumsum(counts, out=self.site_start[1:])
        if len(counts):
            self.site_body = np.concatenate([per_species[k][0] for k in self.species_index]).reshape(-1, 3)
            self.site_type = np.concatenate([per_species[k][1] for k in self.species_index])
            self.site_q = np.concatenate([per_species[k][2] for k in self.species_index])
        self.has_charges = bool(np.any(self.site_q != 0.0))

    @property
    def n_molecules(self):
        return len(self.site_start) - 1

    def lab_offsets(self, rotation_matrices):
        """Lab-frame site offsets from each molecule's centre of mass."""
        counts = np.diff(self.site_start)
        rot = np.repeat(rotation_matrices, counts, axis=0)
        return np.einsum("nij,nj->ni", rot, self.site_body)
