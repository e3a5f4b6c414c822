"""Cluster-correlation expansion of the central-spin coherence function.

The coherence of the superposition (|a> + |b>)/sqrt(2) under a pulse
sequence factorizes over connected clusters of bath spins,

    L(t) ~ prod_C Ltilde_C(t),   Ltilde_C = L_C / prod_{C' subset C} Ltilde_C',

where L_C is the coherence computed with only the cluster spins treated
quantum mechanically.  Every cluster Hamiltonian contains the full
multilevel central spin (generalized expansion), the point-dipole
couplings of the central electron spin to the cluster spins, all
intra-cluster dipolar couplings, the bath Zeeman terms, and static z
shifts from the sampled projections of out-of-cluster neighbors.

Coherences are reported in the rotating frame of the bare transition:
the zero-bath evolution factor is divided out, so a decoupled bath gives
L(t) = 1 identically for every sequence.  An opt-in two-level fast path
projects the central spin onto the (a, b) doublet and evolves the two
conditional bath branches instead; it drops the central off-diagonal
coupling terms, which are suppressed by (coupling / transition frequency)
and negligible for GHz transitions against kHz couplings.

Two initial bath-state conventions are supported per cluster: "sampled"
starts every bath spin in its sampled projection (a pure product state),
"mixed" averages over the full product basis (infinite-temperature
density matrix), which is what smooth per-realization free-induction
envelopes require for the unpolarized nuclear bath.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .constants import ANGSTROM, H_PLANCK, MU_0
from .lattice import BathConfiguration, dipolar_tensor
from .spincore import CentralSpinModel, build_central_hamiltonian, eigensystem_at


class ClusterBudgetError(RuntimeError):
    """Cluster enumeration exceeded the configured count budget."""


class DimensionBudgetError(RuntimeError):
    """A cluster Hilbert space exceeded the configured dimension budget."""


def log_time_grid(t_max: float, n: int = 64, t_min: float | None = None) -> np.ndarray:
    """Logarithmic grid of n points starting at 0 (for the L(0) = 1 anchor)."""
    if t_min is None:
        t_min = t_max * 1e-4
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, n - 1)])


@dataclass
class PulseSequence:
    """Ideal instantaneous pi-pulse sequence: ramsey (0), hahn (1), cpmg (N).

    For total evolution time t the pulses sit at t (2k - 1) / (2N),
    k = 1..N, i.e. segment durations (1/2N, 1/N, ..., 1/N, 1/2N) x t.
    """

    kind: str
    n_pulses: int

    def __post_init__(self):
        expected = {"ramsey": 0, "hahn": 1}
        if self.kind in expected and self.n_pulses != expected[self.kind]:
            raise ValueError(f"{self.kind} requires n_pulses={expected[self.kind]}")
        if self.kind == "cpmg" and self.n_pulses < 1:
            raise ValueError("cpmg requires n_pulses >= 1")
        if self.kind not in ("ramsey", "hahn", "cpmg"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")

    @classmethod
    def ramsey(cls) -> "PulseSequence":
        return cls("ramsey", 0)

    @classmethod
    def hahn(cls) -> "PulseSequence":
        return cls("hahn", 1)

    @classmethod
    def cpmg(cls, n: int) -> "PulseSequence":
        return cls("cpmg", n)

    def segment_fractions(self) -> np.ndarray:
        n = self.n_pulses
        if n == 0:
            return np.array([1.0])
        return np.array([0.5 / n] + [1.0 / n] * (n - 1) + [0.5 / n])

    def label(self) -> str:
        return self.kind if self.kind != "cpmg" else f"cpmg{self.n_pulses}"


@dataclass
class CCEConfig:
    """Expansion controls: order, geometry cutoffs, time grid, guards."""

    order: int = 3
    r_bath: float = 200 * ANGSTROM
    r_dipole: float = 40 * ANGSTROM
    time_grid: np.ndarray = dfield(default_factory=lambda: log_time_grid(1.0))
    subcluster_floor: float = 1e-4
    two_level: bool = False
    bath_state: str = "sampled"
    # clamp |Ltilde_C| <= 1: the standard stabilizer for strongly coupled
    # electron baths where the bare expansion diverges at low order
    clamp_contributions: bool = False
    cluster_budget: int = 500_000
    dim_budget: int = 6000

    def __post_init__(self):
        if not 1 <= self.order <= 4:
            raise ValueError("supported CCE orders are 1..4")
        if self.r_dipole > self.r_bath:
            raise ValueError("r_dipole must not exceed r_bath")
        if self.bath_state not in ("sampled", "mixed"):
            raise ValueError("bath_state must be 'sampled' or 'mixed'")
        self.time_grid = np.asarray(self.time_grid, dtype=float)

    def metadata(self) -> dict:
        return {
            "order": self.order,
            "r_bath_A": self.r_bath / ANGSTROM,
            "r_dipole_A": self.r_dipole / ANGSTROM,
            "subcluster_floor": self.subcluster_floor,
            "two_level": self.two_level,
            "bath_state": self.bath_state,
        }


@dataclass
class CoherenceCurve:
    """Sampled L(t) for one (configuration, sequence, transition)."""

    times: np.ndarray
    values: np.ndarray            # complex
    metadata: dict = dfield(default_factory=dict)

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


def enumerate_clusters(config: BathConfiguration, cce: CCEConfig) -> dict[int, list[tuple[int, ...]]]:
    """Connected subsets of bath spins, grouped by size, deterministic order.

    Two spins are adjacent when their separation is at most r_dipole; a
    cluster is a connected subgraph with at most `order` vertices.
    """
    n = len(config.spins)
    out: dict[int, list[tuple[int, ...]]] = {1: [(i,) for i in range(n)]}
    if n == 0:
        return {1: []}
    pos = config.positions()
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    adj = (dist <= cce.r_dipole) & (dist > 0)
    neighbors = [np.flatnonzero(adj[i]) for i in range(n)]

    total = n
    current: set[frozenset[int]] = {frozenset((i,)) for i in range(n)}
    for size in range(2, cce.order + 1):
        grown: set[frozenset[int]] = set()
        for cl in current:
            for i in cl:
                for j in neighbors[i]:
                    if j not in cl:
                        grown.add(cl | {int(j)})
        total += len(grown)
        if total > cce.cluster_budget:
            raise ClusterBudgetError(
                f"more than {cce.cluster_budget} clusters at order {size}; "
                "reduce order or r_dipole, or raise the budget")
        out[size] = sorted(tuple(sorted(cl)) for cl in grown)
        current = grown
    return out


def _embed(dims: list[int], ops: dict[int, np.ndarray]) -> np.ndarray:
    """Kronecker product over slots with identity on unlisted slots."""
    out = np.ones((1, 1), dtype=complex)
    for slot, dim in enumerate(dims):
        m = ops.get(slot)
        out = np.kron(out, m if m is not None else np.eye(dim))
    return out


class _CentralCache:
    """Per-(model, field, pair) central-spin pieces shared across clusters."""

    def __init__(self, model: CentralSpinModel, config: BathConfiguration,
                 pair: tuple[int, int]):
        self.model = model
        self.pair = pair
        self.h_central = build_central_hamiltonian(model, config.field)
        es = eigensystem_at(model, config.field)
        self.es = es
        a, b = pair
        u = es.states
        self.vec_a = u[:, a]
        self.vec_b = u[:, b]
        swap = np.eye(model.dim, dtype=complex)
        swap[a, a] = swap[b, b] = 0.0
        swap[a, b] = swap[b, a] = 1.0
        self.pulse = u @ swap @ u.conj().T
        self.psi0_central = (self.vec_a + self.vec_b) / math.sqrt(2.0)
        s_ops = model.electron_operators()
        self.s_exp_a = np.array([np.real(self.vec_a.conj() @ op @ self.vec_a) for op in s_ops])
        self.s_exp_b = np.array([np.real(self.vec_b.conj() @ op @ self.vec_b) for op in s_ops])
        self.gamma_e = float(np.mean(model.gamma_e_diag()))


class _CouplingCache:
    """Per-configuration dipolar geometry shared across clusters.

    Holds the central-spin coupling tensor for every bath spin, the
    intra-bath zz couplings inside the r_dipole neighborhood, and the
    total static z shift each spin feels from all its neighbors.
    """

    def __init__(self, config: BathConfiguration, gamma_e: float, r_dipole: float | None):
        n = len(config.spins)
        self.config = config
        self.central_tensors = [
            dipolar_tensor(np.zeros(3), s.position, gamma_e, s.species.gamma)
            for s in config.spins
        ]
        self.zz = np.zeros((n, n))
        if n and r_dipole is not None:
            pos = config.positions()
            gammas = np.array([s.species.gamma for s in config.spins])
            proj = np.array([s.projection for s in config.spins])
            diff = pos[None, :, :] - pos[:, None, :]
            dist = np.linalg.norm(diff, axis=-1)
            np.fill_diagonal(dist, np.inf)
            within = dist <= r_dipole
            with np.errstate(divide="ignore", invalid="ignore"):
                nz = diff[..., 2] / dist
                zz = (MU_0 * H_PLANCK / (4 * math.pi)) \
                    * np.outer(gammas, gammas) / dist ** 3 * (1 - 3 * nz ** 2)
            zz[~within] = 0.0
            self.zz = zz
            self.total_shift = zz @ proj
            self.proj = proj
        else:
            self.total_shift = np.zeros(n)
            self.proj = np.array([s.projection for s in config.spins])

    def mean_field_shifts(self, cluster: tuple[int, ...]) -> np.ndarray:
        """Static z shift on each cluster spin from out-of-cluster neighbors."""
        idx = np.array(cluster)
        shifts = self.total_shift[idx].copy()
        for pos_k, k in enumerate(idx):
            shifts[pos_k] -= self.zz[k, idx] @ self.proj[idx]
        return shifts


def _bath_local_hamiltonians(cluster, config, coupling: _CouplingCache,
                             shifts: np.ndarray, extra_field_rows=None):
    """Per-cluster-spin local Hamiltonians: Zeeman + mean field (+ branch term)."""
    locals_ = []
    for pos_k, k in enumerate(cluster):
        spin = config.spins[k]
        jx, jy, jz = spin.species.operators()
        b = config.field
        h = spin.species.gamma * (b[0] * jx + b[1] * jy + b[2] * jz) + shifts[pos_k] * jz
        if extra_field_rows is not None:
            hx, hy, hz = extra_field_rows[pos_k]
            h = h + hx * jx + hy * jy + hz * jz
        locals_.append(h)
    return locals_


def _pair_coupling_terms(cluster, config, coupling: _CouplingCache):
    """All intra-cluster dipolar couplings as (slot_i, slot_j, D) triples."""
    terms = []
    for (pi, ki), (pj, kj) in itertools.combinations(enumerate(cluster), 2):
        si, sj = config.spins[ki], config.spins[kj]
        d = dipolar_tensor(si.position, sj.position, si.species.gamma, sj.species.gamma)
        terms.append((pi, pj, d))
    return terms


def _evolve_segments(w: np.ndarray, v: np.ndarray, psi0: np.ndarray,
                     fractions: np.ndarray, times: np.ndarray,
                     pulse_eig: np.ndarray | None) -> np.ndarray:
    """Batched evolution of initial columns over all grid times.

    `psi0` has shape (dim,) or (dim, n_init); the result has shape
    (dim, n_init, n_times) in the same basis as `psi0`.
    """
    psi0 = psi0.reshape(len(w), -1)
    n_init = psi0.shape[1]
    nt = len(times)
    c = np.repeat(v.conj().T @ psi0, nt, axis=1).reshape(len(w), n_init, nt)
    for j, frac in enumerate(fractions):
        tau = frac * times
        c *= np.exp(-2j * math.pi * np.outer(w, tau))[:, None, :]
        if j < len(fractions) - 1 and pulse_eig is not None:
            c = np.einsum("ij,jbt->ibt", pulse_eig, c)
    return np.einsum("ij,jbt->ibt", v, c)


_MIXED_WORK_BUDGET = 300_000


def _bath_initial_columns(cluster, config, bath_state: str) -> np.ndarray:
    """Initial bath states as columns: one sampled product state, or the
    full product basis for the infinite-temperature mixture."""
    dims = [config.spins[k].species.dim for k in cluster]
    total = int(np.prod(dims)) if dims else 1
    if bath_state == "mixed":
        if total * total > _MIXED_WORK_BUDGET:
            raise DimensionBudgetError(
                f"mixed bath state over cluster {cluster} needs {total}x{total} "
                "evolution columns; use sampled projections for clusters this large")
        return np.eye(total, dtype=complex)
    bath0 = np.ones((1,), dtype=complex)
    for k in cluster:
        spin = config.spins[k]
        level = np.zeros(spin.species.dim, dtype=complex)
        level[np.argmin(np.abs(spin.species.projections() - spin.projection))] = 1.0
        bath0 = np.kron(bath0, level)
    return bath0[:, None]


def _coherence_full(cluster, config, model, pair, seq, times,
                    central: _CentralCache, coupling: _CouplingCache,
                    shifts: np.ndarray, dim_budget: int, bath_state: str) -> np.ndarray:
    """Generalized evaluation: full central space inside the cluster."""
    bath_dims = [config.spins[k].species.dim for k in cluster]
    dims = [model.dim] + bath_dims
    total_dim = int(np.prod(dims))
    if total_dim > dim_budget:
        raise DimensionBudgetError(
            f"cluster {cluster} needs Hilbert dimension {total_dim} > budget {dim_budget}")

    h = _embed(dims, {0: central.h_central})
    locals_ = _bath_local_hamiltonians(cluster, config, coupling, shifts)
    for pos_k, hloc in enumerate(locals_):
        h += _embed(dims, {1 + pos_k: hloc})
    s_ops = model.electron_operators()
    for pos_k, k in enumerate(cluster):
        d = coupling.central_tensors[k]
        jops = config.spins[k].species.operators()
        for alpha in range(3):
            j_eff = sum(d[alpha, beta] * jops[beta] for beta in range(3))
            h += _embed(dims, {0: s_ops[alpha], 1 + pos_k: j_eff})
    for pi, pj, d in _pair_coupling_terms(cluster, config, coupling):
        iops = config.spins[cluster[pi]].species.operators()
        jops = config.spins[cluster[pj]].species.operators()
        for alpha in range(3):
            j_eff = sum(d[alpha, beta] * jops[beta] for beta in range(3))
            h += _embed(dims, {1 + pi: iops[alpha], 1 + pj: j_eff})

    w, v = np.linalg.eigh(h)
    pulse = _embed(dims, {0: central.pulse})
    pulse_eig = v.conj().T @ pulse @ v

    bath_cols = _bath_initial_columns(cluster, config, bath_state)
    n_init = bath_cols.shape[1]
    psi0 = np.einsum("c,bn->cbn", central.psi0_central, bath_cols).reshape(total_dim, n_init)

    times_ext = np.concatenate([[0.0], times])
    psi_t = _evolve_segments(w, v, psi0, seq.segment_fractions(), times_ext, pulse_eig)
    psi_t = psi_t.reshape(model.dim, -1, n_init, len(times_ext))
    phi_a = np.einsum("c,cbnt->bnt", central.vec_a.conj(), psi_t)
    phi_b = np.einsum("c,cbnt->bnt", central.vec_b.conj(), psi_t)
    num = np.einsum("bnt,bnt->t", phi_a, phi_b.conj())
    return num[1:] / num[0]


def _coherence_branch(cluster, config, model, pair, seq, times,
                      central: _CentralCache, coupling: _CouplingCache,
                      shifts: np.ndarray, dim_budget: int, bath_state: str) -> np.ndarray:
    """Two-level fast path: conditional bath evolution per central branch."""
    bath_dims = [config.spins[k].species.dim for k in cluster]
    total_dim = int(np.prod(bath_dims))
    if total_dim > dim_budget:
        raise DimensionBudgetError(
            f"cluster {cluster} needs Hilbert dimension {total_dim} > budget {dim_budget}")

    h_shared = np.zeros((total_dim, total_dim), dtype=complex)
    for pi, pj, d in _pair_coupling_terms(cluster, config, coupling):
        iops = config.spins[cluster[pi]].species.operators()
        jops = config.spins[cluster[pj]].species.operators()
        for alpha in range(3):
            j_eff = sum(d[alpha, beta] * jops[beta] for beta in range(3))
            h_shared += _embed(bath_dims, {pi: iops[alpha], pj: j_eff})

    branch_h = []
    for s_exp in (central.s_exp_a, central.s_exp_b):
        rows = [s_exp @ coupling.central_tensors[k] for k in cluster]
        locals_ = _bath_local_hamiltonians(cluster, config, coupling, shifts,
                                           extra_field_rows=rows)
        h = h_shared.copy()
        for pos_k, hloc in enumerate(locals_):
            h += _embed(bath_dims, {pos_k: hloc})
        branch_h.append(h)

    eig = [np.linalg.eigh(h) for h in branch_h]
    bath_cols = _bath_initial_columns(cluster, config, bath_state)
    n_init = bath_cols.shape[1]

    times_ext = np.concatenate([[0.0], times])
    nt = len(times_ext)
    fractions = seq.segment_fractions()
    chi = []
    for start in (0, 1):
        x = np.repeat(bath_cols, nt, axis=1).reshape(total_dim, n_init, nt)
        for j, frac in enumerate(fractions):
            w, v = eig[(start + j) % 2]
            tau = frac * times_ext
            c = np.einsum("ij,jbt->ibt", v.conj().T, x)
            c *= np.exp(-2j * math.pi * np.outer(w, tau))[:, None, :]
            x = np.einsum("ij,jbt->ibt", v, c)
        chi.append(x)
    num = np.einsum("bnt,bnt->t", chi[0], chi[1].conj())
    return num[1:] / num[0]


def cluster_coherence(cluster, config: BathConfiguration, model: CentralSpinModel,
                      pair: tuple[int, int], seq: PulseSequence, times,
                      *, two_level: bool = False, r_dipole: float | None = None,
                      bath_state: str = "sampled", dim_budget: int = 6000,
                      _central: _CentralCache | None = None,
                      _coupling: _CouplingCache | None = None) -> np.ndarray:
    """L_C(t) for one cluster, normalized to the bare central evolution.

    With r_dipole given, out-of-cluster spins inside that radius contribute
    static z shifts to the cluster spins (their sampled projections acting
    as frozen neighbors); with r_dipole None no mean field is applied.
    """
    cluster = tuple(sorted(int(k) for k in cluster))
    times = np.asarray(times, dtype=float)
    central = _central if _central is not None else _CentralCache(model, config, pair)
    coupling = _coupling if _coupling is not None else _CouplingCache(
        config, central.gamma_e, r_dipole)
    shifts = coupling.mean_field_shifts(cluster) if r_dipole is not None \
        else np.zeros(len(cluster))
    if two_level:
        return _coherence_branch(cluster, config, model, pair, seq, times,
                                 central, coupling, shifts, dim_budget, bath_state)
    raw = _coherence_full(cluster, config, model, pair, seq, times,
                          central, coupling, shifts, dim_budget, bath_state)
    bare = _bare_factor(model, pair, seq, times, central)
    return raw / bare


def _bare_factor(model, pair, seq, times, central: _CentralCache) -> np.ndarray:
    """Zero-bath coherence factor of the sequence (pure phase)."""
    w, v = np.linalg.eigh(central.h_central)
    times_ext = np.concatenate([[0.0], times])
    pulse_eig = v.conj().T @ central.pulse @ v
    psi_t = _evolve_segments(w, v, central.psi0_central, seq.segment_fractions(),
                             times_ext, pulse_eig)[:, 0, :]
    num = (central.vec_a.conj() @ psi_t) * (central.vec_b.conj() @ psi_t).conj()
    return num[1:] / num[0]


def cce_coherence(config: BathConfiguration, model: CentralSpinModel,
                  pair: tuple[int, int], seq: PulseSequence,
                  cce: CCEConfig) -> CoherenceCurve:
    """Full cluster-correlation expansion of L(t) for one bath realization.

    Irreducible contributions are computed recursively by cluster size and
    multiplied in deterministic sorted-cluster order.  Whenever the product
    of a cluster's subcluster contributions falls below the configured
    floor at some time, that cluster is dropped (contribution 1) there.
    """
    times = cce.time_grid
    clusters = enumerate_clusters(config, cce)
    central = _CentralCache(model, config, pair)
    coupling = _CouplingCache(config, central.gamma_e, cce.r_dipole)

    tilde: dict[tuple[int, ...], np.ndarray] = {}
    total = np.ones(len(times), dtype=complex)
    for size in sorted(clusters):
        for cl in clusters[size]:
            l_c = cluster_coherence(cl, config, model, pair, seq, times,
                                    two_level=cce.two_level, r_dipole=cce.r_dipole,
                                    bath_state=cce.bath_state,
                                    dim_budget=cce.dim_budget,
                                    _central=central, _coupling=coupling)
            denom = np.ones(len(times), dtype=complex)
            for sub_size in range(1, size):
                for sub in itertools.combinations(cl, sub_size):
                    if sub in tilde:
                        denom = denom * tilde[sub]
            guarded = np.abs(denom) < cce.subcluster_floor
            contrib = np.where(guarded, 1.0, l_c / np.where(guarded, 1.0, denom))
            if cce.clamp_contributions:
                mag = np.abs(contrib)
                over = mag > 1.0
                contrib = np.where(over, contrib / np.where(over, mag, 1.0), contrib)
            tilde[cl] = contrib
            total = total * contrib

    return CoherenceCurve(
        times=times, values=total,
        metadata={"pair": list(pair), "sequence": seq.label(),
                  "seed": int(config.seed), "n_spins": len(config.spins),
                  "cce": cce.metadata()})


def exact_reference(config: BathConfiguration, model: CentralSpinModel,
                    pair: tuple[int, int], seq: PulseSequence, times,
                    bath_state: str = "sampled",
                    dim_budget: int = 30000) -> CoherenceCurve:
    """Direct unitary evolution of the complete central + bath system.

    No cluster expansion, no dipolar cutoff, no mean field; the oracle
    against which the expansion is validated on small baths.
    """
    times = np.asarray(times, dtype=float)
    central = _CentralCache(model, config, pair)
    coupling = _CouplingCache(config, central.gamma_e, None)
    cluster = tuple(range(len(config.spins)))
    shifts = np.zeros(len(cluster))
    raw = _coherence_full(cluster, config, model, pair, seq, times,
                          central, coupling, shifts, dim_budget, bath_state)
    values = raw / _bare_factor(model, pair, seq, times, central)
    return CoherenceCurve(
        times=times, values=values,
        metadata={"pair": list(pair), "sequence": seq.label(),
                  "seed": int(config.seed), "n_spins": len(config.spins),
                  "method": "exact", "bath_state": bath_state})


def factorized_coherence(l_e: CoherenceCurve, l_n: CoherenceCurve) -> CoherenceCurve:
    """Pointwise product of independently computed bath contributions."""
    if not np.array_equal(l_e.times, l_n.times):
        raise ValueError("coherence curves must share one time grid")
    meta = {"factorized": [l_e.metadata, l_n.metadata]}
    return CoherenceCurve(times=l_e.times.copy(), values=l_e.values * l_n.values,
                          metadata=meta)


def config_seed(master_seed: int, index: int) -> int:
    """Deterministic 64-bit seed for ensemble member `index`."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class EnsembleResult:
    curves: list[CoherenceCurve | None]
    mean_curve: CoherenceCurve
    failures: list[tuple[int, str]]

    @property
    def n_ok(self) -> int:
        return sum(1 for c in self.curves if c is not None)


def ensemble_run(master_seed: int, n_configs: int, bath_factory,
                 model: CentralSpinModel, pair: tuple[int, int],
                 seq: PulseSequence, cce: CCEConfig,
                 workers: int = 1) -> EnsembleResult:
    """CCE over an ensemble of independently sampled bath realizations.

    `bath_factory(seed)` builds one BathConfiguration.  Member k uses a
    seed derived deterministically from (master_seed, k); failures are
    recorded per index and the run continues.  The mean curve averages the
    real and imaginary parts of the successful members.
    """
    if n_configs < 1:
        raise ValueError("n_configs must be at least 1")
    seeds = [config_seed(master_seed, k) for k in range(n_configs)]
    jobs = [(bath_factory, seed, model, pair, seq, cce) for seed in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_ensemble_worker, jobs))
    else:
        outcomes = [_ensemble_worker(job) for job in jobs]

    curves: list[CoherenceCurve | None] = []
    failures: list[tuple[int, str]] = []
    for k, (curve, err) in enumerate(outcomes):
        curves.append(curve)
        if err is not None:
            failures.append((k, err))

    ok = [c for c in curves if c is not None]
    if not ok:
        raise RuntimeError(f"all {n_configs} ensemble members failed: {failures}")
    stack = np.stack([c.values for c in ok])
    mean_values = stack.real.mean(axis=0) + 1j * stack.imag.mean(axis=0)
    mean_curve = CoherenceCurve(
        times=ok[0].times.copy(), values=mean_values,
        metadata={"pair": list(pair), "sequence": seq.label(),
                  "master_seed": int(master_seed), "n_configs": n_configs,
                  "n_ok": len(ok), "cce": cce.metadata(), "kind": "ensemble-mean"})
    return EnsembleResult(curves=curves, mean_curve=mean_curve, failures=failures)


def _ensemble_worker(job):
    bath_factory, seed, model, pair, seq, cce = job
    try:
        config = bath_factory(seed)
        return cce_coherence(config, model, pair, seq, cce), None
    except Exception as exc:  # noqa: BLE001 - per-index reporting by contract
        return None, f"{type(exc).__name__}: {exc}"
