"""Fluorite host lattice, stochastic bath sampling, dipolar couplings.

The host crystallizes in the fluorite structure (cubic cell edge a): four
cations on FCC positions per conventional cell and eight anions on the
(1/4,1/4,1/4)-type tetrahedral sites.  The central spin sits on the cation
site at the origin.  Bath realizations place a magnetic-oxygen nuclear
spin on each anion site with the natural-abundance probability and a bath
electron spin on each cation site with the dopant concentration, then draw
an initial projection per spin (thermal for electron spins, uniform for
the effectively unpolarized nuclear spins).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .constants import (
    ANGSTROM,
    GAMMA_BATH_ELECTRON,
    GAMMA_O17,
    H_PLANCK,
    K_BOLTZMANN,
    LATTICE_CONSTANT,
    MU_0,
    O17_ABUNDANCE,
)
from .spincore import SpinSpecies

O17 = SpinSpecies(label="17O", spin=2.5, gamma=GAMMA_O17, natural_abundance=O17_ABUNDANCE)
BATH_ELECTRON = SpinSpecies(label="er", spin=0.5, gamma=GAMMA_BATH_ELECTRON,
                            natural_abundance=0.0)

SPECIES_REGISTRY = {O17.label: O17, BATH_ELECTRON.label: BATH_ELECTRON}


class CapacityError(RuntimeError):
    """Requested supercell exceeds the site budget."""


_CATION_FRACS = np.array([
    [0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5],
])
_ANION_FRACS = np.array([
    [0.25, 0.25, 0.25], [0.25, 0.25, 0.75], [0.25, 0.75, 0.25], [0.75, 0.25, 0.25],
    [0.25, 0.75, 0.75], [0.75, 0.25, 0.75], [0.75, 0.75, 0.25], [0.75, 0.75, 0.75],
])


@dataclass(frozen=True)
class CrystalCell:
    """Conventional fluorite cell: 4 cations + 8 anions."""

    lattice_constant: float = LATTICE_CONSTANT

    @property
    def cation_fracs(self) -> np.ndarray:
        return _CATION_FRACS

    @property
    def anion_fracs(self) -> np.ndarray:
        return _ANION_FRACS

    def cation_density(self) -> float:
        return 4.0 / self.lattice_constant ** 3

    def anion_density(self) -> float:
        return 8.0 / self.lattice_constant ** 3


def generate_supercell(cell: CrystalCell, r_bath: float,
                       site_budget: int = 30_000_000) -> tuple[np.ndarray, np.ndarray]:
    """All lattice sites within r_bath of the central cation at the origin.

    Returns (cation positions, anion positions) in meters; the origin site
    itself is excluded from the cation list.  Raises CapacityError when the
    estimated site count exceeds the budget.
    """
    if r_bath <= 0:
        raise ValueError("r_bath must be positive")
    a = cell.lattice_constant
    estimate = (cell.cation_density() + cell.anion_density()) * (4 / 3) * math.pi * r_bath ** 3
    if estimate > site_budget:
        raise CapacityError(
            f"~{estimate:.3g} lattice sites within {r_bath / ANGSTROM:.0f} A "
            f"exceeds the budget of {site_budget}")
    ncell = int(math.ceil(r_bath / a)) + 1
    rng_idx = np.arange(-ncell, ncell + 1)
    cells = np.stack(np.meshgrid(rng_idx, rng_idx, rng_idx, indexing="ij"),
                     axis=-1).reshape(-1, 3).astype(float)

    def collect(fracs: np.ndarray) -> np.ndarray:
        pos = (cells[:, None, :] + fracs[None, :, :]).reshape(-1, 3) * a
        r = np.linalg.norm(pos, axis=1)
        return pos[(r <= r_bath) & (r > a * 1e-9)]

    cation = collect(cell.cation_fracs)
    anion = collect(cell.anion_fracs)
    # excluded-origin guard: the r > 0 cut above removed only the origin site
    return _lexsorted(cation), _lexsorted(anion)


def _lexsorted(pos: np.ndarray) -> np.ndarray:
    if len(pos) == 0:
        return pos.reshape(0, 3)
    order = np.lexsort((pos[:, 2], pos[:, 1], pos[:, 0]))
    return pos[order]


def thermal_polarization(gamma: float, b_magnitude: float, temperature: float,
                         spin: float = 0.5) -> np.ndarray:
    """Boltzmann occupation p(m) over m = +j ... -j (descending).

    Level energies are E(m) = m h gamma |B| (same sign convention as the
    Hamiltonian), so p(m) ~ exp(-m h gamma |B| / k_B T).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    dim = round(2 * spin) + 1
    m = spin - np.arange(dim)
    x = -m * H_PLANCK * gamma * abs(b_magnitude) / (K_BOLTZMANN * temperature)
    w = np.exp(x - x.max())
    return w / w.sum()


@dataclass
class BathSpin:
    position: np.ndarray          # meters, relative to the central spin
    species: SpinSpecies
    projection: float             # sampled m


@dataclass
class BathConfiguration:
    """One stochastic realization of the spin bath."""

    spins: list[BathSpin]
    seed: int
    temperature: float
    field: np.ndarray
    concentration: float
    r_bath: float

    def __len__(self) -> int:
        return len(self.spins)

    def positions(self) -> np.ndarray:
        if not self.spins:
            return np.zeros((0, 3))
        return np.array([s.position for s in self.spins])

    def count(self, label: str) -> int:
        return sum(1 for s in self.spins if s.species.label == label)

    def to_json_dict(self) -> dict:
        return {
            "schema": "clockbath/bath-configuration/v1",
            "seed": int(self.seed),
            "temperature_K": float(self.temperature),
            "field_T": [float(x) for x in self.field],
            "concentration_er": float(self.concentration),
            "r_bath_A": float(self.r_bath / ANGSTROM),
            "spins": [
                {
                    "species": s.species.label,
                    "position_A": [float(x / ANGSTROM) for x in s.position],
                    "projection": float(s.projection),
                }
                for s in self.spins
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json_dict(cls, data: dict) -> "BathConfiguration":
        spins = [
            BathSpin(position=np.array(s["position_A"]) * ANGSTROM,
                     species=SPECIES_REGISTRY[s["species"]],
                     projection=float(s["projection"]))
            for s in data["spins"]
        ]
        return cls(spins=spins, seed=int(data["seed"]),
                   temperature=float(data["temperature_K"]),
                   field=np.array(data["field_T"], dtype=float),
                   concentration=float(data["concentration_er"]),
                   r_bath=float(data["r_bath_A"]) * ANGSTROM)

    @classmethod
    def from_json(cls, text: str) -> "BathConfiguration":
        return cls.from_json_dict(json.loads(text))


def sample_bath(cation_pos: np.ndarray, anion_pos: np.ndarray, *,
                concentration: float, temperature: float, field,
                seed: int, r_bath: float,
                o17_abundance: float = O17_ABUNDANCE) -> BathConfiguration:
    """Draw one bath realization on explicit lattice sites.

    Each anion site hosts a nuclear spin with probability `o17_abundance`;
    each cation site hosts a bath electron spin with probability
    `concentration`.  Nuclear projections are uniform over the 2I+1 levels;
    electron projections follow the thermal distribution at (field,
    temperature).  Fully deterministic in `seed`.
    """
    if not 0.0 <= concentration <= 1.0:
        raise ValueError("concentration must lie in [0, 1]")
    field = np.asarray(field, dtype=float)
    ss = np.random.SeedSequence(seed)
    rng_nuc, rng_el, rng_proj = [np.random.default_rng(s) for s in ss.spawn(3)]

    spins: list[BathSpin] = []
    keep_n = rng_nuc.random(len(anion_pos)) < o17_abundance
    nuc_pos = anion_pos[keep_n]
    keep_e = rng_el.random(len(cation_pos)) < concentration
    el_pos = cation_pos[keep_e]

    nuc_m = O17.projections()
    nuc_choice = rng_proj.integers(0, O17.dim, size=len(nuc_pos))
    for pos, c in zip(nuc_pos, nuc_choice):
        spins.append(BathSpin(position=pos.copy(), species=O17, projection=float(nuc_m[c])))

    p_el = thermal_polarization(BATH_ELECTRON.gamma, float(np.linalg.norm(field)),
                                temperature, spin=BATH_ELECTRON.spin)
    el_m = BATH_ELECTRON.projections()
    el_choice = rng_proj.choice(len(el_m), size=len(el_pos), p=p_el)
    for pos, c in zip(el_pos, el_choice):
        spins.append(BathSpin(position=pos.copy(), species=BATH_ELECTRON,
                              projection=float(el_m[c])))

    return BathConfiguration(spins=spins, seed=seed, temperature=temperature,
                             field=field, concentration=concentration, r_bath=r_bath)


def sample_dilute_electron_bath(cell: CrystalCell, r_bath: float, *,
                                concentration: float, temperature: float, field,
                                seed: int) -> BathConfiguration:
    """Bath electron realization for radii too large to enumerate sites.

    The occupied-site count is drawn as Poisson(density x volume x c) --
    indistinguishable from per-site Bernoulli at dilute concentrations --
    and positions are rejection-sampled cation sites inside the sphere,
    deduplicated, origin excluded.
    """
    if not 0.0 <= concentration <= 1.0:
        raise ValueError("concentration must lie in [0, 1]")
    field = np.asarray(field, dtype=float)
    a = cell.lattice_constant
    lam = cell.cation_density() * (4 / 3) * math.pi * r_bath ** 3 * concentration
    ss = np.random.SeedSequence(seed)
    _, rng_el, rng_proj = [np.random.default_rng(s) for s in ss.spawn(3)]

    count = int(rng_el.poisson(lam))
    ncell = int(math.ceil(r_bath / a)) + 1
    taken: set[tuple[int, int, int, int]] = set()
    positions: list[np.ndarray] = []
    while len(positions) < count:
        ix, iy, iz = (int(v) for v in rng_el.integers(-ncell, ncell + 1, size=3))
        sub = int(rng_el.integers(0, 4))
        key = (ix, iy, iz, sub)
        if key in taken:
            continue
        pos = (np.array([ix, iy, iz], dtype=float) + _CATION_FRACS[sub]) * a
        r = np.linalg.norm(pos)
        if r > r_bath or r < a * 1e-9:
            continue
        taken.add(key)
        positions.append(pos)

    p_el = thermal_polarization(BATH_ELECTRON.gamma, float(np.linalg.norm(field)),
                                temperature, spin=BATH_ELECTRON.spin)
    el_m = BATH_ELECTRON.projections()
    el_choice = rng_proj.choice(len(el_m), size=count, p=p_el)
    spins = [BathSpin(position=pos, species=BATH_ELECTRON, projection=float(el_m[c]))
             for pos, c in zip(positions, el_choice)]
    return BathConfiguration(spins=spins, seed=seed, temperature=temperature,
                             field=field, concentration=concentration, r_bath=r_bath)


_DIPOLE_SITE_BUDGET = 30_000_000
# explicit enumeration is preferred up to this many estimated sites
_DILUTE_PATH_THRESHOLD = 8_000_000


def build_nuclear_bath(cell: CrystalCell, r_bath: float, *, field, seed: int,
                       o17_abundance: float = O17_ABUNDANCE,
                       temperature: float = 1.0) -> BathConfiguration:
    """Nuclear-spin-only bath realization (no bath electrons)."""
    cation, anion = generate_supercell(cell, r_bath)
    return sample_bath(cation, anion, concentration=0.0, temperature=temperature,
                       field=field, seed=seed, r_bath=r_bath,
                       o17_abundance=o17_abundance)


def build_electron_bath(cell: CrystalCell, *, concentration: float, temperature: float,
                        field, seed: int, r_bath: float | None = None,
                        target_count: float = 50.0) -> BathConfiguration:
    """Bath-electron-only realization; radius defaults to ~target_count spins."""
    if r_bath is None:
        if concentration <= 0:
            r_bath = 0.0
        else:
            r_bath = (3 * target_count / (4 * math.pi * cell.cation_density()
                                          * concentration)) ** (1 / 3)
    if concentration <= 0 or r_bath <= 0:
        return BathConfiguration(spins=[], seed=seed, temperature=temperature,
                                 field=np.asarray(field, dtype=float),
                                 concentration=concentration, r_bath=max(r_bath, 0.0))
    n_sites = cell.cation_density() * (4 / 3) * math.pi * r_bath ** 3
    if n_sites <= _DILUTE_PATH_THRESHOLD:
        cation, _ = generate_supercell(cell, r_bath, site_budget=_DIPOLE_SITE_BUDGET)
        empty_anion = np.zeros((0, 3))
        return sample_bath(cation, empty_anion, concentration=concentration,
                           temperature=temperature, field=field, seed=seed,
                           r_bath=r_bath, o17_abundance=0.0)
    return sample_dilute_electron_bath(cell, r_bath, concentration=concentration,
                                       temperature=temperature, field=field, seed=seed)


_DIPOLAR_CONST = MU_0 * H_PLANCK / (4 * math.pi)


def dipolar_prefactor(distance: float, gamma_i: float, gamma_j: float) -> float:
    """mu0 h gamma_i gamma_j / (4 pi r^3), in Hz."""
    return _DIPOLAR_CONST * gamma_i * gamma_j / distance ** 3


def dipolar_tensor(r_i, r_j, gamma_i: float, gamma_j: float) -> np.ndarray:
    """Point-dipole coupling tensor D (Hz): contributes sum_ab J_a^i D_ab J_b^j.

    D = (mu0 h gamma_i gamma_j / 4 pi r^3) (1 - 3 n n^T) with n the unit
    separation vector; symmetric and traceless.
    """
    dr = np.asarray(r_j, dtype=float) - np.asarray(r_i, dtype=float)
    dist = np.linalg.norm(dr)
    if dist == 0:
        raise ValueError("coincident spin positions")
    n = dr / dist
    return dipolar_prefactor(dist, gamma_i, gamma_j) * (np.eye(3) - 3.0 * np.outer(n, n))
