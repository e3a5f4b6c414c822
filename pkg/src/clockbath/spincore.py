"""Central spin system: operators, Hamiltonian, eigensystem, transitions.

The central spin is an effective electron spin S = 1/2 coupled to a
nuclear spin I = 7/2 through an isotropic hyperfine interaction,

    H = gamma_e B.S + gamma_n B.I + A S.I     (units: Hz)

with both Zeeman terms entered with a "+" sign.  The 16-dimensional
Hilbert space is ordered as (electron) x (nucleus), basis states
|m_S> x |m_I| with m descending from +j to -j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .constants import GAMMA_E_DEFAULT, GAMMA_N_DEFAULT, HYPERFINE_A_DEFAULT


class NonHermitianError(ValueError):
    """Raised when an operator expected to be Hermitian is not."""


def spin_operators(j: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angular momentum matrices (Jx, Jy, Jz) for spin quantum number j.

    Built from the ladder operators in the |j, m> basis with m descending
    from +j to -j, so Jz = diag(j, j-1, ..., -j).  Satisfies the cyclic
    commutation relations [Jx, Jy] = i Jz.
    """
    twoj = round(2 * j)
    if twoj < 0 or abs(2 * j - twoj) > 1e-12:
        raise ValueError(f"spin quantum number must be a non-negative half-integer, got {j}")
    return _spin_operators_cached(twoj)


@lru_cache(maxsize=32)
def _spin_operators_cached(twoj: int):
    j = twoj / 2.0
    dim = twoj + 1
    m = j - np.arange(dim)
    jz = np.diag(m).astype(complex)
    # <m|J+|m-1> = sqrt(j(j+1) - m(m-1)) on the first superdiagonal
    amp = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jp = np.zeros((dim, dim), dtype=complex)
    jp[np.arange(dim - 1), np.arange(1, dim)] = amp
    jx = (jp + jp.conj().T) / 2
    jy = (jp - jp.conj().T) / 2j
    jx.setflags(write=False)
    jy.setflags(write=False)
    jz.setflags(write=False)
    return jx, jy, jz


@dataclass(frozen=True)
class SpinSpecies:
    """A spin species in the bath (label, spin, gyromagnetic ratio, abundance)."""

    label: str
    spin: float
    gamma: float                  # Hz / T, signed
    natural_abundance: float = 1.0

    def __post_init__(self):
        if abs(2 * self.spin - round(2 * self.spin)) > 1e-12 or self.spin < 0:
            raise ValueError(f"2j must be a non-negative integer, got j={self.spin}")
        if not 0.0 <= self.natural_abundance <= 1.0:
            raise ValueError(f"abundance must lie in [0, 1], got {self.natural_abundance}")

    @property
    def dim(self) -> int:
        return round(2 * self.spin) + 1

    def operators(self):
        return spin_operators(self.spin)

    def projections(self) -> np.ndarray:
        """Allowed m values, descending from +j to -j."""
        return self.spin - np.arange(self.dim)


@dataclass(frozen=True)
class CentralSpinModel:
    """Parameters of the central S=1/2 (x) I=7/2 spin system.

    ``gamma_e`` may be a scalar (isotropic, the physical case for a cubic
    site) or a length-3 diagonal tensor; the anisotropic form exists only
    as a test hook for the isotropy checks.  ``nuclear_zeeman_sign``
    multiplies the nuclear Zeeman term (+1 reproduces the printed
    Hamiltonian).
    """

    gamma_e: float | tuple[float, float, float] = GAMMA_E_DEFAULT
    gamma_n: float = GAMMA_N_DEFAULT
    hyperfine_a: float = HYPERFINE_A_DEFAULT
    spin_s: float = 0.5
    spin_i: float = 3.5
    nuclear_zeeman_sign: float = 1.0

    @property
    def dim(self) -> int:
        return round(2 * self.spin_s + 1) * round(2 * self.spin_i + 1)

    def gamma_e_diag(self) -> np.ndarray:
        g = np.asarray(self.gamma_e, dtype=float)
        return np.full(3, float(g)) if g.ndim == 0 else g

    def electron_operators(self):
        """(Sx, Sy, Sz) acting on the full product space."""
        return _product_operators(round(2 * self.spin_s), round(2 * self.spin_i))[0]

    def nuclear_operators(self):
        """(Ix, Iy, Iz) acting on the full product space."""
        return _product_operators(round(2 * self.spin_s), round(2 * self.spin_i))[1]


@lru_cache(maxsize=8)
def _product_operators(twos: int, twoi: int):
    s_ops = spin_operators(twos / 2.0)
    i_ops = spin_operators(twoi / 2.0)
    eye_s = np.eye(twos + 1)
    eye_i = np.eye(twoi + 1)
    s_full = tuple(np.kron(op, eye_i) for op in s_ops)
    i_full = tuple(np.kron(eye_s, op) for op in i_ops)
    for op in s_full + i_full:
        op.setflags(write=False)
    return s_full, i_full


def build_central_hamiltonian(model: CentralSpinModel, field: np.ndarray) -> np.ndarray:
    """H = gamma_e B.S + gamma_n B.I + A S.I on the 16-dim product space, in Hz."""
    b = np.asarray(field, dtype=float)
    if b.shape != (3,) or not np.all(np.isfinite(b)):
        raise ValueError("field must be a finite 3-vector in tesla")
    s_ops = model.electron_operators()
    i_ops = model.nuclear_operators()
    ge = model.gamma_e_diag()
    h = sum(ge[k] * b[k] * s_ops[k] for k in range(3))
    h = h + model.nuclear_zeeman_sign * model.gamma_n * sum(b[k] * i_ops[k] for k in range(3))
    h = h + model.hyperfine_a * sum(s_ops[k] @ i_ops[k] for k in range(3))
    return h


def field_derivative_operators(model: CentralSpinModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """dH/dB_k = gamma_e S_k + gamma_n I_k for k = x, y, z."""
    s_ops = model.electron_operators()
    i_ops = model.nuclear_operators()
    ge = model.gamma_e_diag()
    return tuple(ge[k] * s_ops[k] + model.nuclear_zeeman_sign * model.gamma_n * i_ops[k]
                 for k in range(3))


@dataclass
class EigenSystem:
    """Diagonalized central spin system at one field point.

    energies are ascending (Hz); states holds the eigenvectors as columns;
    sz and iz are the per-state expectation values <Sz> and <Iz>.
    """

    energies: np.ndarray
    states: np.ndarray
    field: np.ndarray
    sz: np.ndarray
    iz: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.energies)

    def transition_frequency(self, pair: tuple[int, int]) -> float:
        a, b = pair
        return float(self.energies[b] - self.energies[a])


_DEGENERACY_REL_TOL = 1e-9


def eigensystem(h: np.ndarray, model: CentralSpinModel, field=(0.0, 0.0, 0.0)) -> EigenSystem:
    """Diagonalize a central-spin Hamiltonian, with deterministic ordering.

    States come out in ascending energy.  Within a degenerate multiplet the
    eigenvectors are rotated to diagonalize Iz (then Sz), and ordered by
    descending <Iz> then <Sz>, which pins the basis at zero field where
    plain LAPACK output is arbitrary.
    """
    h = np.asarray(h, dtype=complex)
    scale = np.linalg.norm(h)
    if scale > 0 and np.linalg.norm(h - h.conj().T) > 1e-9 * scale:
        raise NonHermitianError("input matrix is not Hermitian within 1e-9 relative")
    energies, states = np.linalg.eigh(h)

    sz_op = model.electron_operators()[2]
    iz_op = model.nuclear_operators()[2]
    gap_tol = max(scale, 1.0) * _DEGENERACY_REL_TOL
    # resolve degenerate blocks deterministically
    start = 0
    n = len(energies)
    while start < n:
        stop = start + 1
        while stop < n and energies[stop] - energies[stop - 1] < gap_tol:
            stop += 1
        if stop - start > 1:
            block = states[:, start:stop]
            block = _diagonalize_in_block(block, iz_op)
            iz_vals = np.real(np.einsum("ij,ik,kj->j", block.conj(), iz_op, block))
            # further split ties in <Iz> using Sz
            sub = 0
            while sub < block.shape[1]:
                sub2 = sub + 1
                while sub2 < block.shape[1] and abs(iz_vals[sub2] - iz_vals[sub]) < 1e-6:
                    sub2 += 1
                if sub2 - sub > 1:
                    block[:, sub:sub2] = _diagonalize_in_block(block[:, sub:sub2], sz_op)
                sub = sub2
            iz_vals = np.real(np.einsum("ij,ik,kj->j", block.conj(), iz_op, block))
            sz_vals = np.real(np.einsum("ij,ik,kj->j", block.conj(), sz_op, block))
            order = np.lexsort((-sz_vals, -iz_vals))
            states[:, start:stop] = block[:, order]
        start = stop

    sz = np.real(np.einsum("ij,ik,kj->j", states.conj(), sz_op, states))
    iz = np.real(np.einsum("ij,ik,kj->j", states.conj(), iz_op, states))
    return EigenSystem(energies=energies, states=states, field=np.asarray(field, dtype=float),
                       sz=sz, iz=iz)


def _diagonalize_in_block(block: np.ndarray, op: np.ndarray) -> np.ndarray:
    """Rotate degenerate eigenvectors so `op` is diagonal within the block."""
    sub = block.conj().T @ op @ block
    _, rot = np.linalg.eigh((sub + sub.conj().T) / 2)
    return block @ rot


def eigensystem_at(model: CentralSpinModel, field) -> EigenSystem:
    """Convenience: build and diagonalize H at the given field."""
    return eigensystem(build_central_hamiltonian(model, np.asarray(field, dtype=float)),
                       model, field)


@dataclass
class TransitionRecord:
    """One eigenstate pair: frequency and drive matrix element."""

    pair: tuple[int, int]
    frequency: float              # Hz, E_b - E_a >= 0 for b > a
    strength: float               # |<a|S_drive|b>|^2, in [0, 1/4]
    significant: bool = False


def drive_axis_for(field: np.ndarray) -> np.ndarray:
    """Deterministic unit vector perpendicular to the static field.

    x-hat when the field is along z; otherwise normalize(z x B).
    """
    b = np.asarray(field, dtype=float)
    norm = np.linalg.norm(b)
    if norm == 0:
        return np.array([1.0, 0.0, 0.0])
    bhat = b / norm
    perp = np.cross([0.0, 0.0, 1.0], bhat)
    if np.linalg.norm(perp) < 1e-8:
        return np.array([1.0, 0.0, 0.0])
    return perp / np.linalg.norm(perp)


def transition_table(es: EigenSystem, model: CentralSpinModel,
                     threshold: float = 0.05) -> list[TransitionRecord]:
    """All n(n-1)/2 transitions with |<a|S_drive|b>|^2 strengths.

    The drive operator is the electron spin component along a fixed axis
    perpendicular to the static field.  Records with strength >= threshold
    are flagged significant.
    """
    axis = drive_axis_for(es.field)
    s_ops = model.electron_operators()
    drive = sum(axis[k] * s_ops[k] for k in range(3))
    amp = es.states.conj().T @ drive @ es.states
    records = []
    for a in range(es.dim):
        for b in range(a + 1, es.dim):
            strength = float(abs(amp[a, b]) ** 2)
            records.append(TransitionRecord(
                pair=(a, b),
                frequency=float(es.energies[b] - es.energies[a]),
                strength=strength,
                significant=strength >= threshold,
            ))
    return records


def state_labels(es: EigenSystem) -> tuple[np.ndarray, np.ndarray]:
    """Per-state (<Sz>, <Iz>) labels."""
    return es.sz, es.iz
