"""Site-site radial distribution functions and solvation numbers.

RDFs are sampled between all LJ and dummy sites of different molecules
(intramolecular pairs are rigid and are skipped). Normalisation uses the
exact number of intermolecular site pairs of each type and exact spherical
shell volumes, so the neighbour counts recovered from g(r) equal the raw
histogram counts.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SimulationError
from .rotation import quat_to_matrix


@dataclass
class RdfTable:
    site_a: str
    site_b: str
    r_lo: np.ndarray
    r_hi: np.ndarray
    g: np.ndarray
    n_cum: np.ndarray  # running coordination number of b around a
    rho_partner: float  # effective partner density used in the normalisation

    @property
    def r_mid(self):
        return 0.5 * (self.r_lo + self.r_hi)

    @property
    def bin_width(self):
        return float(self.r_hi[0] - self.r_lo[0])


class RdfHistogram:
    """Per site-type-pair distance histogram.

    A site type is one (species, site label) of kind LJ or dummy. Rows of
    ``counts`` are unordered type pairs (a <= b).
    """

    def __init__(self, composition, species_index=None, bin_width=0.02, r_max=None):
        if species_index is None:
            species_index = composition.species_index()
        self.species_index = np.asarray(species_index)
        box = composition.box_length
        self.box_length = box
        self.r_max = 0.5 * box if r_max is None else float(r_max)
        if self.r_max > 0.5 * box * (1 + 1e-12):
            raise ValueError("r_max must not exceed L/2")
        self.bin_width = float(bin_width)
        self.n_bins = int(math.floor(self.r_max / self.bin_width + 1e-9))
        self.r_max = self.n_bins * self.bin_width

        # sites sharing a label within a species form one type
        labels, bodies, tids = [], [], []
        for spec in composition.species:
            body, tid = [], []
            for k, s in enumerate(spec.sites):
                if s.samples_rdf:
                    label = f"{spec.name}.{spec.site_label(k)}"
                    if label not in labels:
                        labels.append(label)
                    body.append(s.position)
                    tid.append(labels.index(label))
            bodies.append(np.array(body, float).reshape(-1, 3))
            tids.append(np.array(tid, np.int64))
        self.labels = labels
        nt = len(labels)
        self.pairs = [(a, b) for a in range(nt) for b in range(a, nt)]
        self.pair_index = np.zeros((max(nt, 1), max(nt, 1)), np.int64)
        for row, (a, b) in enumerate(self.pairs):
            self.pair_index[a, b] = self.pair_index[b, a] = row

        counts = np.array([len(tids[k]) for k in self.species_index], np.int64)
        self.site_start = np.zeros(len(counts) + 1, np.int64)
        np.cumsum(counts, out=self.site_start[1:])
        self.site_body = np.concatenate([bodies[k] for k in self.species_index]).reshape(-1, 3)
        self.site_type = np.concatenate([tids[k] for k in self.species_index]) if len(counts) else np.zeros(0, np.int64)

        # site counts per type and intermolecular pair numbers
        self.n_type = np.bincount(self.site_type, minlength=nt).astype(float)
        intra = np.zeros((max(nt, 1), max(nt, 1)))
        for k in self.species_index:
            t = tids[k]
            for x in t:
                for y in t:
                    intra[x, y] += 1.0
        self.n_pairs = np.zeros(len(self.pairs))
        for row, (a, b) in enumerate(self.pairs):
            if a == b:
                self.n_pairs[row] = 0.5 * (self.n_type[a] * (self.n_type[a] - 1.0) - (intra[a, a] - self.n_type[a]))
            else:
                self.n_pairs[row] = self.n_type[a] * self.n_type[b] - intra[a, b]
        self.counts = np.zeros((len(self.pairs), self.n_bins), np.int64)
        self.n_snapshots = 0

    def accumulate(self, positions, quaternions, workers=1):
        """Bin every intermolecular site pair closer than r_max, once per snapshot."""
        com = np.ascontiguousarray(positions, dtype=float)
        rot = quat_to_matrix(quaternions)
        per = np.diff(self.site_start)
        offs = np.ascontiguousarray(np.einsum("nij,nj->ni", np.repeat(rot, per, axis=0), self.site_body))
        n = len(com)
        n_pairs = n * (n - 1) // 2
        if workers == 1:
            kernels.rdf_chunk(
                0, n_pairs, com, self.site_start, offs, self.site_type, self.pair_index,
                self.box_length, self.r_max, self.bin_width, self.counts,
            )
        else:
            from concurrent.futures import ThreadPoolExecutor

            bounds = [(w * n_pairs) // workers for w in range(workers + 1)]
            parts = [np.zeros_like(self.counts) for _ in range(workers)]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futs = [
                    pool.submit(
                        kernels.rdf_chunk, bounds[w], bounds[w + 1], com, self.site_start, offs,
                        self.site_type, self.pair_index, self.box_length, self.r_max, self.bin_width, parts[w],
                    )
                    for w in range(workers)
                ]
                for f in futs:
                    f.result()
            for p in parts:
                self.counts += p
        self.n_snapshots += 1

    def finalize(self):
        return rdf_finalize(self)

    def state_dict(self):
        return {"counts": self.counts, "n_snapshots": np.array(self.n_snapshots)}

    def load_state_dict(self, d):
        counts = np.asarray(d["counts"], dtype=np.int64)
        if counts.shape != self.counts.shape:
            raise ValueError("histogram shape mismatch")
        self.counts = counts.copy()
        self.n_snapshots = int(d["n_snapshots"])


def shell_volumes(r_lo, r_hi):
    return 4.0 * math.pi / 3.0 * (r_hi**3 - r_lo**3)


def rdf_finalize(hist):
    """g(r) per site-type pair at bin midpoints, with running neighbour counts."""
    if hist.n_snapshots < 1:
        raise SimulationError("RDF needs at least one snapshot")
    edges = np.arange(hist.n_bins + 1) * hist.bin_width
    r_lo, r_hi = edges[:-1], edges[1:]
    vol = hist.box_length**3
    shells = shell_volumes(r_lo, r_hi)
    tables = []
    for row, (a, b) in enumerate(hist.pairs):
        npairs = hist.n_pairs[row]
        counts = hist.counts[row].astype(float)
        if npairs > 0:
            g = counts / (hist.n_snapshots * npairs * shells / vol)
        else:
            g = np.zeros(hist.n_bins)
        ordered = 2.0 * npairs if a == b else npairs
        n_a = hist.n_type[a]
        rho = ordered / (n_a * vol) if n_a > 0 else 0.0
        per_centre = (2.0 if a == b else 1.0) * counts / (hist.n_snapshots * n_a) if n_a > 0 else counts * 0.0
        tables.append(RdfTable(hist.labels[a], hist.labels[b], r_lo, r_hi, g, np.cumsum(per_centre), rho))
    return tables


def first_minimum(table):
    """Position (bin midpoint) of the first minimum after the first peak above 1.

    The search runs on a 3-point moving average; equal neighbours resolve to
    the smaller r. Returns None for gas-like curves without such a peak.
    """
    g = np.asarray(table.g, dtype=float)
    if len(g) < 3:
        return None
    s = g.copy()
    s[1:-1] = (g[:-2] + g[1:-1] + g[2:]) / 3.0
    peak = None
    for k in range(1, len(s) - 1):
        if s[k] > 1.0 and s[k] >= s[k - 1] and s[k] > s[k + 1]:
            peak = k
            break
    if peak is None:
        return None
    for k in range(peak + 1, len(s) - 1):
        if s[k] < s[k - 1] and s[k] <= s[k + 1]:
            return float(table.r_mid[k])
    return None


def solvation_number(table, rho_partner=None, r_min=None):
    """n = 4 pi rho int_0^r_min r^2 g(r) dr, integrated bin by bin.

    ``r_min`` is snapped to the nearest bin edge; bins entirely below it are
    summed with exact shell volumes. Defaults: the table's partner density
    and the full range.
    """
    if rho_partner is None:
        rho_partner = table.rho_partner
    dr = table.bin_width
    n_edges = len(table.g) if r_min is None else int(round(r_min / dr))
    n_edges = max(0, min(n_edges, len(table.g)))
    shells = shell_volumes(table.r_lo[:n_edges], table.r_hi[:n_edges])
    return float(rho_partner * np.sum(table.g[:n_edges] * shells))


def snapped_radius(table, r_min):
    """The bin edge that :func:`solvation_number` integrates up to."""
    dr = table.bin_width
    return max(0, min(int(round(r_min / dr)), len(table.g))) * dr


def com_rdf(positions, box_length, idx_a, idx_b, bin_width, r_max=None):
    """Centre-of-mass RDF between two molecule groups (used to size solvation shells)."""
    r_max = 0.5 * box_length if r_max is None else r_max
    n_bins = int(math.floor(r_max / bin_width + 1e-9))
    counts = np.zeros(n_bins)
    n_snap = 0
    for pos in positions:
        d = pos[idx_a][:, None, :] - pos[idx_b][None, :, :]
        d -= box_length * np.floor(d / box_length + 0.5)
        r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        mask = idx_a[:, None] != idx_b[None, :]
        k = np.floor(r[mask] / bin_width).astype(int)
        k = k[k < n_bins]
        counts += np.bincount(k, minlength=n_bins)
        n_snap += 1
    edges = np.arange(n_bins + 1) * bin_width
    shells = shell_volumes(edges[:-1], edges[1:])
    same = np.intersect1d(idx_a, idx_b).size
    npairs = len(idx_a) * len(idx_b) - same
    g = counts / (max(n_snap, 1) * npairs * shells / box_length**3) if npairs > 0 else counts * 0.0
    rho = npairs / (len(idx_a) * box_length**3) if len(idx_a) else 0.0
    return RdfTable("com", "com", edges[:-1], edges[1:], g, np.cumsum(counts) / max(n_snap * len(idx_a), 1), rho)
