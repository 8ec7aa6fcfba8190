"""Residual Massieu-potential derivatives from NVT fluctuations.

With f = beta F^r / N (k_B = 1), beta = 1/T and rho = N/V, the sampled
quantities are A^r_mn = beta^m rho^n d^(m+n) f / d beta^m d rho^n. At fixed N,
rho d/drho = -V d/dV, and the residual free energy obeys

    d(beta F^r)/d beta = <U>,    d(beta F^r)/dV = beta <U_V>,

where U_V, U_VV are volume derivatives at fixed scaled coordinates. Repeated
differentiation of canonical averages (d<X>/d beta = -cov(X, U)) gives the
estimators in :func:`derivatives_from_moments`; all eight are expressed
through the ten moments accumulated here.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SimulationError
from .stats import BlockAccumulator

ORDERS = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2))

# product index in the moment vector
MOMENTS = ("U", "U2", "U3", "A", "AU", "AU2", "A2", "A2U", "B", "BU")

THIRD_ORDER_MIN_SAMPLES = 10_000


def _products(u, a, b):
    return np.array([u, u * u, u * u * u, a, a * u, a * u * u, a * a, a * a * u, b, b * u])


def derivatives_from_moments(m, shift, beta, volume, n):
    """All eight A^r_mn from raw moments of shifted samples.

    ``m`` holds means of the products listed in ``MOMENTS`` for
    u = U - shift[0], a = U_V - shift[1], b = U_VV - shift[2]. Central moments
    are shift-invariant; only plain means need the shift added back.
    """
    mu, mu2, mu3, ma, mau, mau2, ma2, ma2u, mb, mbu = m
    var_u = mu2 - mu * mu
    k3_u = mu3 - 3.0 * mu2 * mu + 2.0 * mu**3
    cov_au = mau - ma * mu
    var_a = ma2 - ma * ma
    cov_bu = mbu - mb * mu
    # joint third cumulants <dA dU dU> and <dA dA dU>
    k_auu = mau2 - 2.0 * mu * mau - ma * mu2 + 2.0 * ma * mu * mu
    k_aau = ma2u - 2.0 * ma * mau - mu * ma2 + 2.0 * ma * ma * mu

    mean_u = shift[0] + mu
    mean_a = shift[1] + ma
    mean_b = shift[2] + mb
    v = volume
    b = beta
    return {
        (1, 0): b * mean_u / n,
        (0, 1): -b * v * mean_a / n,
        (2, 0): -b * b * var_u / n,
        (1, 1): -v * b * (mean_a - b * cov_au) / n,
        (0, 2): (2.0 * v * b * mean_a + v * v * (b * mean_b - b * b * var_a)) / n,
        (3, 0): b**3 * k3_u / n,
        (2, 1): -v * b * b * (-2.0 * cov_au + b * k_auu) / n,
        (1, 2): b
        * (
            2.0 * v * (mean_a - b * cov_au)
            + v * v * (mean_b - b * cov_bu)
            - v * v * (2.0 * b * var_a - b * b * k_aau)
        )
        / n,
    }


class DerivativeAccumulator:
    """Streaming moments of (U, dU/dV, d2U/dV2), LRC parts included by the caller."""

    def __init__(self, n_molecules, volume, temperature, n_blocks=10):
        self.n = int(n_molecules)
        self.volume = float(volume)
        self.temperature = float(temperature)
        self.shift = None
        self.acc = BlockAccumulator(len(MOMENTS), n_blocks)

    @property
    def beta(self):
        return 1.0 / self.temperature

    @property
    def density(self):
        return self.n / self.volume

    @property
    def n_samples(self):
        return self.acc.n_samples

    def accumulate(self, u, du_dv, d2u_dv2):
        if not (math.isfinite(u) and math.isfinite(du_dv) and math.isfinite(d2u_dv2)):
            raise SimulationError(f"non-finite Massieu sample U={u}, U_V={du_dv}, U_VV={d2u_dv2}")
        if self.shift is None:
            self.shift = np.array([u, du_dv, d2u_dv2], dtype=float)
        self.acc.add(_products(u - self.shift[0], du_dv - self.shift[1], d2u_dv2 - self.shift[2]))

    def central_moments(self):
        """Variances/covariances of the raw samples (for diagnostics)."""
        mu, mu2, _, ma, mau, _, ma2, _, mb, mbu = self.acc.means()
        return {
            "var_U": mu2 - mu * mu,
            "var_UV": ma2 - ma * ma,
            "cov_UV_U": mau - ma * mu,
            "cov_UVV_U": mbu - mb * mu,
        }

    def finalize(self):
        if self.n_samples < 2:
            raise SimulationError("Massieu derivatives need at least two samples")
        beta, v, n = self.beta, self.volume, self.n
        shift = self.shift

        def est(s, c):
            d = derivatives_from_moments(s / c, shift, beta, v, n)
            return np.array([d[k] for k in ORDERS])

        s, c = self.acc.totals()
        values = est(s, c)
        errors = self.acc.block_error(est)
        if np.isscalar(errors):
            errors = np.full(len(ORDERS), errors)
        report = DerivativeReport(
            values={k: float(values[i]) for i, k in enumerate(ORDERS)},
            errors={k: float(errors[i]) for i, k in enumerate(ORDERS)},
            n_samples=self.n_samples,
            temperature=self.temperature,
            density=self.density,
        )
        if self.n_samples < THIRD_ORDER_MIN_SAMPLES:
            report.warnings.append(
                f"third-order derivatives from {self.n_samples} samples "
                f"(< {THIRD_ORDER_MIN_SAMPLES}) are poorly converged"
            )
        return report

    def state_dict(self):
        d = {f"acc/{k}": v for k, v in self.acc.state_dict().items()}
        d["n"] = np.array(self.n)
        d["volume"] = np.array(self.volume)
        d["temperature"] = np.array(self.temperature)
        d["shift"] = np.array([] if self.shift is None else self.shift, dtype=float)
        return d

    @classmethod
    def from_state(cls, d):
        obj = cls(int(d["n"]), float(d["volume"]), float(d["temperature"]))
        obj.acc = BlockAccumulator.from_state({k[4:]: v for k, v in d.items() if k.startswith("acc/")})
        shift = np.asarray(d["shift"], dtype=float)
        obj.shift = shift.copy() if shift.size else None
        return obj


@dataclass
class DerivativeReport:
    values: dict
    errors: dict
    n_samples: int
    temperature: float
    density: float
    warnings: list = field(default_factory=list)

    @property
    def compressibility_factor(self):
        return 1.0 + self.values[(0, 1)]

    @property
    def residual_energy(self):
        """u^r / (k_B T)."""
        return self.values[(1, 0)]

    @property
    def residual_heat_capacity(self):
        """c_v^r / k_B."""
        return -self.values[(2, 0)]

    def rows(self):
        return [(m, n, self.values[(m, n)], self.errors[(m, n)]) for m, n in ORDERS]
