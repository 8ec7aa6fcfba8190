"""Ewald summation for point charges in a cubic box with tin-foil boundaries.

Energy split (Gaussian units, Coulomb constant 1)::

    U = U_real + U_recip + U_self + U_intra

* real space: sum of q_i q_j erfc(alpha r) / r over intermolecular site pairs
  within r_c (evaluated in the pair kernel),
* reciprocal: (2 pi / V) sum_{k != 0, |n| <= k_max} exp(-k^2 / 4 alpha^2) / k^2 |S(k)|^2,
* self: -alpha / sqrt(pi) sum q^2,
* intra: -sum over charge pairs inside one molecule of q_a q_b erf(alpha r) / r.

The intramolecular term is a constant for rigid molecules and its central
forces cancel within each molecule, so it contributes energy only.
"""

import math
import warnings

import numpy as np

from .errors import ModelError


def tune(delta, r_c, box_length, charges=None, k_max_limit=64):
    """Pick (alpha, k_max) for a target relative accuracy ``delta``.

    alpha makes exp(-alpha^2 r_c^2) = delta at the real-space cutoff; k_max is
    the smallest integer with exp(-(pi k_max / (alpha L))^2) <= delta.
    ``charges`` is accepted for interface symmetry; the estimates are
    charge-independent relative errors.
    """
    if not (0.0 < delta <= 1e-2):
        raise ModelError(f"Ewald accuracy must lie in (0, 1e-2], got {delta}")
    if r_c <= 0.0 or r_c > 0.5 * box_length * (1.0 + 1e-12):
        raise ModelError("Ewald real-space cutoff must lie in (0, L/2]")
    s = math.sqrt(-math.log(delta))
    alpha = s / r_c
    k_max = max(1, math.ceil(alpha * box_length * s / math.pi - 1e-9))
    if k_max > k_max_limit:
        raise ModelError(
            f"accuracy {delta:g} with r_c = {r_c:g} needs k_max = {k_max} > {k_max_limit}; increase r_c"
        )
    return alpha, k_max


def recip_error_estimate(alpha, k_max, box_length):
    return math.exp(-((math.pi * k_max / (alpha * box_length)) ** 2))


def half_kvectors(k_max, box_length):
    """Integer vectors n with 0 < |n| <= k_max in one half space, scaled to 2 pi n / L."""
    r = np.arange(-k_max, k_max + 1)
    n = np.array(np.meshgrid(r, r, r, indexing="ij")).reshape(3, -1).T
    n2 = np.einsum("ij,ij->i", n, n)
    keep = (n2 > 0) & (n2 <= k_max * k_max)
    half = (n[:, 0] > 0) | ((n[:, 0] == 0) & (n[:, 1] > 0)) | ((n[:, 0] == 0) & (n[:, 1] == 0) & (n[:, 2] > 0))
    n = n[keep & half]
    return 2.0 * math.pi * n / box_length


class EwaldReciprocal:
    def __init__(self, alpha, k_max, box_length, tolerance=None):
        if alpha <= 0.0 or k_max < 1:
            raise ModelError("Ewald needs alpha > 0 and k_max >= 1")
        self.alpha = float(alpha)
        self.k_max = int(k_max)
        self.box_length = float(box_length)
        self.k = half_kvectors(self.k_max, self.box_length)
        k2 = np.einsum("ij,ij->i", self.k, self.k)
        self.weight = np.exp(-k2 / (4.0 * alpha * alpha)) / k2
        if tolerance is not None:
            est = recip_error_estimate(alpha, k_max, box_length)
            if est > tolerance:
                warnings.warn(
                    f"Ewald k_max = {k_max} gives an estimated reciprocal error {est:.2e} > {tolerance:.2e}",
                    stacklevel=2,
                )

    def energy_forces(self, positions, charges):
        """Reciprocal energy and per-site forces for site positions (n, 3)."""
        vol = self.box_length**3
        phase = positions @ self.k.T
        c = np.cos(phase)
        s = np.sin(phase)
        s_re = charges @ c
        s_im = charges @ s
        energy = 4.0 * math.pi / vol * float(np.sum(self.weight * (s_re * s_re + s_im * s_im)))
        amp = self.weight * 8.0 * math.pi / vol
        # F_a = (8 pi / V) q_a sum_half w(k) k [sin(k.r_a) Re S - cos(k.r_a) Im S]
        proj = s * (amp * s_re) - c * (amp * s_im)
        forces = charges[:, None] * (proj @ self.k)
        return energy, forces


def self_energy(alpha, charges):
    return -alpha / math.sqrt(math.pi) * float(np.sum(np.asarray(charges) ** 2))


def intramolecular_energy(alpha, body_positions, charges):
    """Exclusion correction for one rigid molecule (coincident charges allowed)."""
    u = 0.0
    n = len(charges)
    for a in range(n):
        for b in range(a + 1, n):
            qq = charges[a] * charges[b]
            if qq == 0.0:
                continue
            r = float(np.linalg.norm(np.asarray(body_positions[a]) - np.asarray(body_positions[b])))
            if r == 0.0:
                u -= qq * 2.0 * alpha / math.sqrt(math.pi)
            else:
                u -= qq * math.erf(alpha * r) / r
    return u
