"""Rigid multi-site molecular models, system composition and initial configurations.

All quantities are in reduced Lennard-Jones units (sigma = epsilon = m = k_B = 1).

Species model file grammar (one site per line, ``#`` starts a comment)::

    LJ     x y z  sigma epsilon  mass  [label]
    charge x y z  q              mass  [label]
    dummy  x y z  sigma epsilon  mass  [label]
    mass   x y z                 mass  [label]

Kinds are case-insensitive. Dummy sites must carry sigma = epsilon = 0; they
exert no forces but are sampled by the radial distribution function. ``mass``
lines declare a bare mass point without interactions. A line ``name <text>``
sets the species name (defaults to the file stem).
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelError
from .rotation import random_quaternions

SITE_KINDS = ("LJ", "charge", "dummy", "mass")

# relative threshold below which a principal moment counts as zero
_INERTIA_EPS = 1e-10


@dataclass(frozen=True)
class Site:
    kind: str
    position: tuple
    sigma: float = 0.0
    epsilon: float = 0.0
    q: float = 0.0
    mass: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in SITE_KINDS:
            raise ModelError(f"unknown site kind {self.kind!r}")
        if self.kind == "dummy" and (self.sigma != 0.0 or self.epsilon != 0.0):
            raise ModelError("dummy sites must have sigma = epsilon = 0")
        if self.kind == "LJ" and (self.sigma <= 0.0 or self.epsilon < 0.0):
            raise ModelError("LJ sites need sigma > 0 and epsilon >= 0")
        if self.mass < 0.0:
            raise ModelError("site mass must be non-negative")

    @property
    def is_lj(self):
        return self.kind == "LJ" and self.epsilon > 0.0

    @property
    def is_charge(self):
        return self.kind == "charge" and self.q != 0.0

    @property
    def samples_rdf(self):
        return self.kind in ("LJ", "dummy")


@dataclass(frozen=True)
class MoleculeSpecies:
    """A rigid molecule in its principal-axes body frame.

    Site positions are relative to the centre of mass, and the body axes
    diagonalise the inertia tensor, so ``inertia`` holds the principal moments.
    """

    name: str
    sites: tuple
    total_mass: float
    inertia: np.ndarray
    net_charge: float

    @property
    def body_positions(self):
        return np.array([s.position for s in self.sites], dtype=float).reshape(-1, 3)

    @property
    def rotational_dofs(self):
        """Boolean mask of principal axes with a non-zero moment."""
        scale = max(float(np.max(self.inertia)), 0.0)
        if scale == 0.0:
            return np.zeros(3, dtype=bool)
        return self.inertia > _INERTIA_EPS * scale

    @property
    def is_charged(self):
        return abs(self.net_charge) > 1e-12

    def site_label(self, index):
        site = self.sites[index]
        return site.label or f"{site.kind}{index}"


def build_species(name, sites):
    """Build a species from sites given in an arbitrary frame.

    The frame is shifted to the centre of mass and rotated onto the principal
    axes (ascending moments). A frame that is already principal is left alone,
    which makes the construction idempotent.
    """
    sites = [s if isinstance(s, Site) else Site(**s) for s in sites]
    if not sites:
        raise ModelError(f"species {name!r} has no sites")
    masses = np.array([s.mass for s in sites])
    total = float(masses.sum())
    if total <= 0.0:
        raise ModelError(f"species {name!r} has non-positive total mass")
    pos = np.array([s.position for s in sites], dtype=float)
    com = masses @ pos / total
    pos = pos - com

    tensor = np.einsum("i,ij,ik->jk", masses, pos, pos)
    tensor = np.trace(tensor) * np.eye(3) - tensor
    scale = max(np.abs(tensor).max(), 1e-300)
    off = tensor - np.diag(np.diag(tensor))
    if np.abs(off).max() <= 1e-12 * scale:
        moments = np.diag(tensor).copy()
    else:
        moments, axes = np.linalg.eigh(tensor)
        # canonical eigenvector signs, right-handed frame
        for k in range(3):
            if axes[np.argmax(np.abs(axes[:, k])), k] < 0.0:
                axes[:, k] = -axes[:, k]
        if np.linalg.det(axes) < 0.0:
            axes[:, 2] = -axes[:, 2]
        pos = pos @ axes
    moments = np.where(np.abs(moments) <= _INERTIA_EPS * scale, 0.0, moments)
    moments = np.maximum(moments, 0.0)

    new_sites = tuple(
        Site(s.kind, tuple(float(c) for c in p), s.sigma, s.epsilon, s.q, s.mass, s.label)
        for s, p in zip(sites, pos)
    )
    net = float(sum(s.q for s in sites if s.kind == "charge"))
    return MoleculeSpecies(name, new_sites, total, moments, net)


def parse_species(text, name="species"):
    """Parse the plain-text species format (see module docstring)."""
    sites = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0].lower()
        if head == "name":
            name = " ".join(tok[1:])
            continue
        kind = {"lj": "LJ", "charge": "charge", "dummy": "dummy", "mass": "mass"}.get(head)
        if kind is None:
            raise ModelError(f"line {lineno}: unknown site kind {tok[0]!r}")
        nnum = {"LJ": 6, "dummy": 6, "charge": 5, "mass": 4}[kind]
        if len(tok) - 1 not in (nnum, nnum + 1):
            raise ModelError(f"line {lineno}: expected {nnum} numbers for {kind} site")
        try:
            vals = [float(t) for t in tok[1 : nnum + 1]]
        except ValueError as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
        label = tok[nnum + 1] if len(tok) > nnum + 1 else ""
        xyz = tuple(vals[:3])
        if kind in ("LJ", "dummy"):
            site = Site(kind, xyz, sigma=vals[3], epsilon=vals[4], mass=vals[5], label=label)
        elif kind == "charge":
            site = Site(kind, xyz, q=vals[3], mass=vals[4], label=label)
        else:
            site = Site(kind, xyz, mass=vals[3], label=label)
        sites.append(site)
    return build_species(name, sites)


def load_species(path):
    path = Path(path)
    return parse_species(path.read_text(), name=path.stem)


def lj_atom(name="LJ", sigma=1.0, epsilon=1.0, mass=1.0):
    """Single-site Lennard-Jones species."""
    return build_species(name, [Site("LJ", (0.0, 0.0, 0.0), sigma, epsilon, mass=mass, label="LJ")])


@dataclass
class SystemComposition:
    species: list
    counts: list
    box_length: float
    temperature: float

    def __post_init__(self):
        if len(self.species) != len(self.counts):
            raise ModelError("species and counts differ in length")
        if any(c < 0 for c in self.counts) or sum(self.counts) <= 0:
            raise ModelError("molecule counts must be non-negative with a positive total")
        if self.box_length <= 0.0:
            raise ModelError("box length must be positive")
        if self.temperature <= 0.0:
            raise ModelError("temperature must be positive")

    @property
    def n_molecules(self):
        return int(sum(self.counts))

    @property
    def volume(self):
        return self.box_length**3

    @property
    def density(self):
        return self.n_molecules / self.volume

    def species_index(self):
        """Species index of every molecule, in molecule order."""
        return np.repeat(np.arange(len(self.species)), self.counts)

    def check_electrostatics(self, method):
        """Raise ModelError if the charges are incompatible with ``method``."""
        if method == "ewald":
            total = sum(c * s.net_charge for s, c in zip(self.species, self.counts))
            if abs(total) > 1e-10:
                raise ModelError(f"Ewald summation needs an electro-neutral system (net charge {total:g})")
        elif method == "reaction_field":
            charged = [s.name for s in self.species if s.is_charged]
            if charged:
                raise ModelError(
                    "reaction field requires electro-neutral molecules; charged: " + ", ".join(charged)
                )
        elif method == "none":
            with_q = [s.name for s in self.species if any(site.is_charge for site in s.sites)]
            if with_q:
                raise ModelError("species carry point charges but electrostatics is off: " + ", ".join(with_q))
        else:
            raise ModelError(f"unknown electrostatics method {method!r}")


@dataclass
class SystemState:
    """Dynamic state of all molecules plus cached interaction results.

    ``omega`` is the angular velocity in each molecule's body frame; forces and
    torques are lab-frame.
    """

    box_length: float
    species_index: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    velocities: np.ndarray
    omega: np.ndarray
    forces: np.ndarray = None
    torques: np.ndarray = None
    energy: object = None
    step: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_molecules(self):
        return len(self.positions)

    @property
    def volume(self):
        return self.box_length**3

    def copy(self):
        def c(a):
            return None if a is None else np.array(a, copy=True)

        return SystemState(
            self.box_length,
            self.species_index.copy(),
            c(self.positions),
            c(self.quaternions),
            c(self.velocities),
            c(self.omega),
            c(self.forces),
            c(self.torques),
            self.energy,
            self.step,
            dict(self.extra),
        )


def masses_and_inertia(composition, species_index):
    mass = np.array([composition.species[k].total_mass for k in species_index])
    inertia = np.array([composition.species[k].inertia for k in species_index]).reshape(-1, 3)
    return mass, inertia


def fcc_positions(n_cells, box_length):
    """FCC lattice sites, cell by cell, basis (0,0,0),(0,.5,.5),(.5,0,.5),(.5,.5,0)."""
    basis = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
    a = box_length / n_cells
    cells = np.array([(i, j, k) for i in range(n_cells) for j in range(n_cells) for k in range(n_cells)], float)
    return ((cells[:, None, :] + basis[None, :, :]) * a).reshape(-1, 3)


def init_lattice(composition, seed, n_cells=None):
    """FCC start with random orientations and Maxwell-Boltzmann velocities.

    Species are shuffled over the lattice sites. Translational and rotational
    kinetic energies are rescaled exactly to the target temperature after the
    total momentum is removed (3N - 3 translational degrees of freedom).
    """
    n = composition.n_molecules
    if n_cells is None:
        n_cells = int(np.ceil((n / 4.0) ** (1.0 / 3.0) - 1e-12))
    if n > 4 * n_cells**3:
        raise ModelError(f"{n} molecules exceed the FCC capacity {4 * n_cells**3} of {n_cells}^3 cells")
    rng = np.random.default_rng(seed)
    species_index = composition.species_index()
    species_index = species_index[rng.permutation(n)]
    positions = fcc_positions(n_cells, composition.box_length)[:n].copy()
    quats = random_quaternions(rng, n)
    mass, inertia = masses_and_inertia(composition, species_index)
    temp = composition.temperature

    vel = rng.standard_normal((n, 3)) * np.sqrt(temp / mass)[:, None]
    vel -= (mass @ vel) / mass.sum()
    omega = np.zeros((n, 3))
    rot_mask = inertia > 0.0
    omega[rot_mask] = rng.standard_normal(np.count_nonzero(rot_mask)) * np.sqrt(temp / inertia[rot_mask])

    state = SystemState(composition.box_length, species_index, positions, quats, vel, omega)
    rescale_to_temperature(state, mass, inertia, temp)
    return state


def kinetic_energies(state, mass, inertia):
    k_trans = 0.5 * float(np.sum(mass[:, None] * state.velocities**2))
    k_rot = 0.5 * float(np.sum(inertia * state.omega**2))
    return k_trans, k_rot


def degrees_of_freedom(mass, inertia):
    n = len(mass)
    trans = 3 * n - 3 if n > 1 else 3
    rot = int(np.count_nonzero(inertia > 0.0))
    return trans, rot


def rescale_to_temperature(state, mass, inertia, temperature):
    """Isokinetic rescaling; returns the (translational, rotational) factors."""
    k_t, k_r = kinetic_energies(state, mass, inertia)
    f_t, f_r = degrees_of_freedom(mass, inertia)
    s_t = s_r = 1.0
    if f_t > 0:
        if k_t <= 0.0:
            raise ModelError("cannot thermostat: zero translational kinetic energy")
        s_t = np.sqrt(0.5 * f_t * temperature / k_t)
        state.velocities *= s_t
    if f_r > 0:
        if k_r <= 0.0:
            raise ModelError("cannot thermostat: zero rotational kinetic energy")
        s_r = np.sqrt(0.5 * f_r * temperature / k_r)
        state.omega *= s_r
    return s_t, s_r
