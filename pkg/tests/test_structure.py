import numpy as np
import pytest

from rigidmd.model import Site, SystemComposition, build_species, fcc_positions, lj_atom
from rigidmd.rotation import quat_to_matrix, random_quaternions
from rigidmd.structure import (
    RdfHistogram, com_rdf, first_minimum, rdf_finalize, snapped_radius, solvation_number,
)

from conftest import dumbbell


def identity(n):
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    return q


def test_fcc_first_shell():
    box = 4 * 1.5
    pos = fcc_positions(4, box)
    comp = SystemComposition([lj_atom()], [len(pos)], box, 1.0)
    h = RdfHistogram(comp, bin_width=0.01)
    h.accumulate(pos, identity(len(pos)))
    t = rdf_finalize(h)[0]
    nn = 1.5 / np.sqrt(2)
    k = int(nn / 0.01)
    assert t.g[k] > 10.0
    assert np.all(t.g[: k] == 0.0)
    # 12 nearest neighbours
    assert np.isclose(t.n_cum[k + 2], 12.0)


def test_intramolecular_pairs_excluded():
    comp = SystemComposition([dumbbell(half=0.3)], [2], 20.0, 1.0)
    h = RdfHistogram(comp, bin_width=0.05)
    pos = np.array([[5.0, 5.0, 5.0], [15.0, 15.0, 15.0]])
    h.accumulate(pos, identity(2))
    assert h.counts.sum() == 0  # the only close pairs are intramolecular
    # 4 sites, 2 molecules: 4 intermolecular pairs of the single site type
    assert h.n_pairs.tolist() == [4.0]


def test_site_types_and_labels():
    water = build_species(
        "w",
        [Site("LJ", (0, 0, 0), 1.0, 1.0, mass=16, label="O"), Site("dummy", (0, 0.5, 0), 0, 0, mass=1, label="X"),
         Site("charge", (0.5, 0, 0), q=0.1, mass=1), Site("charge", (-0.5, 0, 0), q=-0.1, mass=1)],
    )
    comp = SystemComposition([water, lj_atom("Ar")], [4, 4], 10.0, 1.0)
    h = RdfHistogram(comp)
    assert h.labels == ["w.O", "w.X", "Ar.LJ"]
    assert len(h.pairs) == 6


def test_ideal_gas_is_flat():
    rng = np.random.default_rng(0)
    n, box = 500, 10.0
    comp = SystemComposition([lj_atom()], [n], box, 1.0)
    h = RdfHistogram(comp, bin_width=0.05)
    for _ in range(200):
        h.accumulate(rng.uniform(0, box, (n, 3)), identity(n))
    t = rdf_finalize(h)[0]
    sel = (t.r_mid >= 0.2 * box / 2) & (t.r_mid <= box / 2)
    assert np.max(np.abs(t.g[sel] - 1)) < 0.05


def direct_count(pos, quats, comp, species_index, a_label, b_label, radius):
    """Mean number of b sites within ``radius`` of each a site (other molecules)."""
    rot = quat_to_matrix(quats)
    sites = []
    for i, k in enumerate(species_index):
        spec = comp.species[k]
        for s_i, s in enumerate(spec.sites):
            sites.append((i, f"{spec.name}.{spec.site_label(s_i)}", pos[i] + rot[i] @ np.asarray(s.position)))
    box = comp.box_length
    total, centres = 0, 0
    for i, la, ra in sites:
        if la != a_label:
            continue
        centres += 1
        for j, lb, rb in sites:
            if lb != b_label or j == i:
                continue
            d = rb - ra
            d -= box * np.round(d / box)
            total += np.linalg.norm(d) < radius
    return total / centres


@pytest.mark.parametrize("radius", [1.0, 1.37, 2.2])
def test_solvation_number_equals_direct_count(radius):
    rng = np.random.default_rng(1)
    comp = SystemComposition([dumbbell("D"), lj_atom("Ar")], [30, 40], 7.0, 1.0)
    si = comp.species_index()
    h = RdfHistogram(comp, si, bin_width=0.01)
    snaps = []
    for _ in range(4):
        pos = rng.uniform(0, 7.0, (70, 3))
        q = random_quaternions(rng, 70)
        h.accumulate(pos, q)
        snaps.append((pos, q))
    tables = rdf_finalize(h)
    t = next(t for t in tables if (t.site_a, t.site_b) == ("D.A", "Ar.LJ"))
    r_edge = snapped_radius(t, radius)
    n_rdf = solvation_number(t, r_min=radius)
    ref = np.mean([direct_count(p, q, comp, si, "D.A", "Ar.LJ", r_edge) for p, q in snaps])
    assert abs(n_rdf - ref) < 1e-10
    t_same = next(t for t in tables if (t.site_a, t.site_b) == ("D.A", "D.A"))
    ref_same = np.mean([direct_count(p, q, comp, si, "D.A", "D.A", snapped_radius(t_same, radius)) for p, q in snaps])
    assert abs(solvation_number(t_same, r_min=radius) - ref_same) < 1e-10


def test_threaded_histogram_identical():
    rng = np.random.default_rng(2)
    comp = SystemComposition([dumbbell()], [60], 8.0, 1.0)
    pos = rng.uniform(0, 8.0, (60, 3))
    q = random_quaternions(rng, 60)
    a, b = RdfHistogram(comp), RdfHistogram(comp)
    a.accumulate(pos, q)
    b.accumulate(pos, q, workers=3)
    assert np.array_equal(a.counts, b.counts)


def test_first_minimum():
    from rigidmd.structure import RdfTable

    r = np.arange(0, 5, 0.05)
    g = 1 + np.exp(-r) * np.sin(3 * (r - 1)) * (r > 1) * 3
    edges = np.arange(len(r) + 1) * 0.05
    t = RdfTable("a", "b", edges[:-1], edges[1:], g, np.zeros_like(g), 1.0)
    r_min = first_minimum(t)
    # analytic first minimum of exp(-r) sin(3(r-1)) after its first maximum
    grid = np.linspace(1.5, 3.0, 100_001)
    f = np.exp(-grid) * np.sin(3 * (grid - 1))
    assert abs(r_min - grid[np.argmin(f)]) < 0.1
    flat = RdfTable("a", "b", edges[:-1], edges[1:], np.ones_like(g), np.zeros_like(g), 1.0)
    assert first_minimum(flat) is None


def test_com_rdf_normalisation():
    rng = np.random.default_rng(3)
    pos = [rng.uniform(0, 10.0, (200, 3)) for _ in range(50)]
    t = com_rdf(pos, 10.0, np.arange(200), np.arange(200), 0.1)
    sel = t.r_mid > 1.0
    assert abs(np.mean(t.g[sel]) - 1) < 0.01


def test_histogram_state_round_trip():
    comp = SystemComposition([lj_atom()], [10], 5.0, 1.0)
    h = RdfHistogram(comp)
    h.accumulate(np.random.default_rng(0).uniform(0, 5, (10, 3)), identity(10))
    g = RdfHistogram(comp)
    g.load_state_dict(h.state_dict())
    assert np.array_equal(g.counts, h.counts) and g.n_snapshots == 1
