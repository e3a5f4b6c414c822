"""Magnetic-field sensitivity of transitions and clock-point detection.

For an eigenstate pair (a, b) the transition frequency nu(B) = E_b - E_a
carries a gradient and a curvature,

    grad_k = d nu / d B_k,        hess_kl = d^2 nu / dB_k dB_l,

evaluated by the Hellmann-Feynman theorem (gradient) and by central finite
differences of the gradient (curvature).  A quasi-static Gaussian field
noise of standard deviation sigma_B turns these into a coherence-time
estimate

    T2 = (|grad|^2 sigma^2 + 1/2 ||hess||_F sigma^4)^(-1/2),

capped at a configurable ceiling since the expression diverges at an exact
clock point.  Clock points are located as sign changes of the along-axis
gradient during a field scan, refined by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.optimize import linear_sum_assignment

from .spincore import (
    CentralSpinModel,
    EigenSystem,
    eigensystem_at,
    field_derivative_operators,
)


class StepTooCoarseError(RuntimeError):
    """State tracking lost its thread; refine the field path."""


class DegenerateTransitionError(RuntimeError):
    """An eigenstate of the pair is degenerate at this field; offset the field."""


class CalibrationError(ValueError):
    """No positive noise amplitude reproduces the reference coherence time."""


@dataclass
class NoiseModel:
    """Quasi-static Gaussian field noise: std dev sigma_b (T) and reporting cap (s)."""

    sigma_b: float
    t2_cap: float = 10.0

    def __post_init__(self):
        if self.sigma_b <= 0:
            raise ValueError("sigma_b must be positive")


@dataclass
class TransitionSensitivity:
    """Frequency, gradient, curvature and rapid-T2 of one pair at one field."""

    field: np.ndarray
    pair: tuple[int, int]
    frequency: float
    gradient: np.ndarray          # Hz/T, 3-vector
    hessian: np.ndarray           # Hz/T^2, symmetric 3x3
    rapid_t2: float = math.nan
    strength: float = math.nan

    @property
    def gradient_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))

    @property
    def curvature_norm(self) -> float:
        return float(np.linalg.norm(self.hessian))


@dataclass
class ClockPoint:
    field_magnitude: float
    frequency: float
    pair: tuple[int, int]
    residual_gradient: float
    curvature_norm: float


def match_states(reference: EigenSystem, other: EigenSystem,
                 min_overlap: float = 0.5) -> np.ndarray:
    """Permutation p such that other state p[k] continues reference state k.

    Solved as a global assignment on the |<v_ref|v_other>| overlap matrix;
    raises StepTooCoarseError when any matched overlap falls below
    ``min_overlap``.
    """
    overlap = np.abs(reference.states.conj().T @ other.states)
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty(reference.dim, dtype=int)
    perm[rows] = cols
    worst = overlap[rows, cols].min()
    if worst < min_overlap:
        raise StepTooCoarseError(
            f"minimum eigenvector overlap {worst:.3f} < {min_overlap}; "
            "refine the field step")
    return perm


def _reordered(es: EigenSystem, perm: np.ndarray) -> EigenSystem:
    return EigenSystem(energies=es.energies[perm], states=es.states[:, perm],
                       field=es.field, sz=es.sz[perm], iz=es.iz[perm])


def track_states(model: CentralSpinModel, field_path) -> list[EigenSystem]:
    """Eigensystems along a field path with consistent state labeling.

    The first point fixes the labels (ascending energy); every subsequent
    point is permuted to maximize overlap with its predecessor so a label
    follows one physical state through avoided crossings.
    """
    path = [np.asarray(b, dtype=float) for b in field_path]
    if not path:
        return []
    systems = [eigensystem_at(model, path[0])]
    for b in path[1:]:
        es = eigensystem_at(model, b)
        perm = match_states(systems[-1], es)
        systems.append(_reordered(es, perm))
    return systems


def _tracked_eigensystem(model: CentralSpinModel, field, reference: EigenSystem) -> EigenSystem:
    """Eigensystem at `field` with states ordered to continue `reference`."""
    es = eigensystem_at(model, field)
    return _reordered(es, match_states(reference, es))


def _state_gradients(model: CentralSpinModel, es: EigenSystem) -> np.ndarray:
    """Hellmann-Feynman dE_i/dB_k for every state: shape (dim, 3)."""
    ops = field_derivative_operators(model)
    return np.stack(
        [np.real(np.einsum("ij,ik,kj->j", es.states.conj(), op, es.states)) for op in ops],
        axis=1)


def _check_pair_gap(es: EigenSystem, pair: tuple[int, int], gap_tol: float = 1e3):
    e = es.energies
    for idx in pair:
        gaps = np.abs(np.delete(e, idx) - e[idx])
        if gaps.min() < gap_tol:
            raise DegenerateTransitionError(
                f"state {idx} is within {gaps.min():.3g} Hz of a neighbor; "
                "offset the field away from the degeneracy")


def transition_gradient(model: CentralSpinModel, field, pair: tuple[int, int],
                        es: EigenSystem | None = None) -> np.ndarray:
    """d nu / dB via Hellmann-Feynman: <b|dH/dB|b> - <a|dH/dB|a>."""
    b0 = np.asarray(field, dtype=float)
    if np.linalg.norm(b0) < 1e-4:
        raise ValueError("field magnitude below 0.1 mT; zero-field degeneracies")
    if es is None:
        es = eigensystem_at(model, b0)
    _check_pair_gap(es, pair)
    grads = _state_gradients(model, es)
    a, b = pair
    return grads[b] - grads[a]


def finite_difference_gradient(model: CentralSpinModel, field, pair: tuple[int, int],
                               step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with state tracking (independent check path)."""
    b0 = np.asarray(field, dtype=float)
    ref = eigensystem_at(model, b0)
    _check_pair_gap(ref, pair)
    a, b = pair
    out = np.empty(3)
    for k in range(3):
        delta = np.zeros(3)
        delta[k] = step
        hi = _tracked_eigensystem(model, b0 + delta, ref)
        lo = _tracked_eigensystem(model, b0 - delta, ref)
        out[k] = ((hi.energies[b] - hi.energies[a]) - (lo.energies[b] - lo.energies[a])) / (2 * step)
    return out


def transition_curvature(model: CentralSpinModel, field, pair: tuple[int, int],
                         step: float = 1e-5, richardson_check: bool = False) -> np.ndarray:
    """d^2 nu / dB_i dB_j by central differences of the HF gradient, symmetrized."""
    hess = _curvature_raw(model, field, pair, step)
    if richardson_check:
        finer = _curvature_raw(model, field, pair, step / 2)
        scale = max(np.linalg.norm(finer), 1.0)
        if np.linalg.norm(finer - hess) > 0.01 * scale:
            raise RuntimeError("curvature not converged at this finite-difference step")
        hess = finer
    return hess


def _curvature_raw(model: CentralSpinModel, field, pair, step: float) -> np.ndarray:
    b0 = np.asarray(field, dtype=float)
    ref = eigensystem_at(model, b0)
    _check_pair_gap(ref, pair)
    a, b = pair
    hess = np.empty((3, 3))
    for k in range(3):
        delta = np.zeros(3)
        delta[k] = step
        hi = _tracked_eigensystem(model, b0 + delta, ref)
        lo = _tracked_eigensystem(model, b0 - delta, ref)
        ghi = _state_gradients(model, hi)
        glo = _state_gradients(model, lo)
        hess[k] = ((ghi[b] - ghi[a]) - (glo[b] - glo[a])) / (2 * step)
    return (hess + hess.T) / 2


def sensitivity_at(model: CentralSpinModel, field, pair: tuple[int, int],
                   noise: NoiseModel | None = None,
                   curvature_step: float = 1e-5) -> TransitionSensitivity:
    """Assemble the full sensitivity record for one pair at one field."""
    b0 = np.asarray(field, dtype=float)
    es = eigensystem_at(model, b0)
    grad = transition_gradient(model, b0, pair, es=es)
    hess = transition_curvature(model, b0, pair, step=curvature_step)
    sens = TransitionSensitivity(
        field=b0, pair=pair, frequency=es.transition_frequency(pair),
        gradient=grad, hessian=hess)
    if noise is not None:
        sens.rapid_t2 = rapid_t2(sens, noise)
    return sens


def rapid_t2(sens: TransitionSensitivity, noise: NoiseModel) -> float:
    """Quasi-static estimate: time at which the decay exponent reaches one."""
    rate_sq = (sens.gradient_norm ** 2) * noise.sigma_b ** 2 \
        + 0.5 * sens.curvature_norm * noise.sigma_b ** 4
    if rate_sq <= 0:
        return noise.t2_cap
    return min(1.0 / math.sqrt(rate_sq), noise.t2_cap)


def calibrate_sigma(t2_ref: float, sens_ref: TransitionSensitivity) -> float:
    """Solve the rapid-T2 relation for sigma_B given a reference T2.

    With x = sigma^2 the relation is quadratic,
    1/2 ||hess||_F x^2 + |grad|^2 x = 1/T2^2; the positive root is returned.
    """
    if t2_ref <= 0:
        raise CalibrationError("reference T2 must be positive")
    g2 = sens_ref.gradient_norm ** 2
    h = 0.5 * sens_ref.curvature_norm
    target = 1.0 / t2_ref ** 2
    if g2 <= 0 and h <= 0:
        raise CalibrationError("zero sensitivity; cannot calibrate")
    # stable form of the positive quadratic root (avoids cancellation when
    # the gradient term dominates the curvature term by many decades)
    x = 2.0 * target / (g2 + math.sqrt(g2 * g2 + 4.0 * h * target))
    if x <= 0 or not math.isfinite(x):
        raise CalibrationError("no positive root for sigma^2")
    return math.sqrt(x)


@dataclass
class FieldScan:
    """State-tracked sweep of all transitions along one field axis.

    Pair-resolved arrays are indexed [field_point, pair_index]; the pair
    list enumerates (a, b) with a < b in lexicographic order.
    """

    model: CentralSpinModel
    axis: np.ndarray
    magnitudes: np.ndarray        # (n,) tesla
    pairs: list[tuple[int, int]]
    frequencies: np.ndarray       # (n, npair) Hz
    gradients: np.ndarray         # (n, npair, 3) Hz/T
    hessians: np.ndarray          # (n, npair, 3, 3) Hz/T^2
    strengths: np.ndarray         # (n, npair)
    energies: np.ndarray          # (n, dim) Hz
    sz: np.ndarray                # (n, dim)
    iz: np.ndarray                # (n, dim)
    rapid_t2: np.ndarray | None = None
    significance_threshold: float = 0.05
    systems: list[EigenSystem] = dfield(default_factory=list, repr=False)

    def gradient_along(self) -> np.ndarray:
        """(n, npair) directional gradient grad . axis."""
        return np.einsum("npk,k->np", self.gradients, self.axis)

    def significant_pairs(self) -> list[int]:
        """Pair indices whose strength reaches the threshold anywhere in the scan."""
        return [j for j in range(len(self.pairs))
                if self.strengths[:, j].max() >= self.significance_threshold]


def field_scan(model: CentralSpinModel, axis, b_range: tuple[float, float],
               step: float, noise: NoiseModel | dict | None = None,
               significance_threshold: float = 0.05,
               curvature_step: float = 1e-5) -> FieldScan:
    """Sweep |B| along `axis`, tracking states and collecting sensitivities.

    `noise` may be a single NoiseModel, a {pair: NoiseModel} mapping for
    per-transition calibration, or None to skip the rapid-T2 column.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    bmin, bmax = b_range
    if bmin < 1e-4:
        raise ValueError("scan must start at or above 0.1 mT")
    mags = np.arange(bmin, bmax + step / 2, step)
    systems = track_states(model, [m * axis for m in mags])

    dim = systems[0].dim
    pairs = [(a, b) for a in range(dim) for b in range(a + 1, dim)]
    pair_a = np.array([p[0] for p in pairs])
    pair_b = np.array([p[1] for p in pairs])

    n = len(mags)
    freqs = np.empty((n, len(pairs)))
    grads = np.empty((n, len(pairs), 3))
    hessians = np.empty((n, len(pairs), 3, 3))
    strengths = np.empty((n, len(pairs)))
    energies = np.empty((n, dim))
    sz = np.empty((n, dim))
    iz = np.empty((n, dim))

    from .spincore import transition_table  # local import to avoid cycle at module load

    for i, es in enumerate(systems):
        energies[i] = es.energies
        sz[i] = es.sz
        iz[i] = es.iz
        freqs[i] = es.energies[pair_b] - es.energies[pair_a]
        state_g = _state_gradients(model, es)
        grads[i] = state_g[pair_b] - state_g[pair_a]
        # curvature: state-resolved gradient differences at +-step along each axis
        state_h = np.empty((3, dim, 3))
        for k in range(3):
            delta = np.zeros(3)
            delta[k] = curvature_step
            hi = _tracked_eigensystem(model, es.field + delta, es)
            lo = _tracked_eigensystem(model, es.field - delta, es)
            state_h[k] = (_state_gradients(model, hi) - _state_gradients(model, lo)) / (2 * curvature_step)
        pair_h = state_h[:, pair_b, :] - state_h[:, pair_a, :]   # (3, npair, 3)
        pair_h = np.transpose(pair_h, (1, 0, 2))
        hessians[i] = (pair_h + np.transpose(pair_h, (0, 2, 1))) / 2
        table = transition_table(es, model, threshold=significance_threshold)
        strengths[i] = np.array([rec.strength for rec in table])

    scan = FieldScan(model=model, axis=axis, magnitudes=mags, pairs=pairs,
                     frequencies=freqs, gradients=grads, hessians=hessians,
                     strengths=strengths, energies=energies, sz=sz, iz=iz,
                     significance_threshold=significance_threshold, systems=systems)
    if noise is not None:
        apply_noise(scan, noise)
    return scan


def apply_noise(scan: FieldScan, noise: NoiseModel | dict) -> None:
    """Fill the rapid-T2 column of a scan from a noise model (or per-pair map)."""
    n, npair = scan.frequencies.shape
    t2 = np.full((n, npair), np.nan)
    for j, pair in enumerate(scan.pairs):
        nm = noise.get(pair) if isinstance(noise, dict) else noise
        if nm is None:
            continue
        gnorm2 = np.einsum("nk,nk->n", scan.gradients[:, j], scan.gradients[:, j])
        hnorm = np.linalg.norm(scan.hessians[:, j].reshape(n, 9), axis=1)
        rate_sq = gnorm2 * nm.sigma_b ** 2 + 0.5 * hnorm * nm.sigma_b ** 4
        with np.errstate(divide="ignore"):
            t2[:, j] = np.minimum(1.0 / np.sqrt(rate_sq), nm.t2_cap)
        t2[rate_sq <= 0, j] = nm.t2_cap
    scan.rapid_t2 = t2


def find_clock_points(scan: FieldScan, residual_limit: float = 1e6,
                      bisect_tol: float = 5e-7,
                      merge_db: float = 1e-3, merge_dnu: float = 3e7) -> list[ClockPoint]:
    """Locate along-axis gradient zeros of significant transitions.

    Sign changes of grad.axis between scan points are refined by bisection
    to `bisect_tol` in field.  Only minima where the transition is still
    significant and the residual gradient is below `residual_limit` are
    reported.  Near-degenerate doublet partners landing within
    (merge_db, merge_dnu) of each other merge into a single point.
    """
    g_along = scan.gradient_along()
    candidates: list[ClockPoint] = []
    for j in scan.significant_pairs():
        pair = scan.pairs[j]
        g = g_along[:, j]
        flips = np.where(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
        for i in flips:
            b_clock = _bisect_gradient_zero(
                scan, j, scan.magnitudes[i], scan.magnitudes[i + 1], bisect_tol)
            es = _tracked_eigensystem(scan.model, b_clock * scan.axis, scan.systems[i])
            grads = _state_gradients(scan.model, es)
            a, b = pair
            resid = abs(float((grads[b] - grads[a]) @ scan.axis))
            if resid >= residual_limit:
                continue
            from .spincore import transition_table
            table = transition_table(es, scan.model, threshold=scan.significance_threshold)
            strength = next(r.strength for r in table if r.pair == pair)
            if strength < scan.significance_threshold:
                continue
            hess = _curvature_from_reference(scan.model, es, pair)
            candidates.append(ClockPoint(
                field_magnitude=float(b_clock),
                frequency=float(es.transition_frequency(pair)),
                pair=pair,
                residual_gradient=resid,
                curvature_norm=float(np.linalg.norm(hess))))
    return _merge_clock_points(candidates, merge_db, merge_dnu)


def _curvature_from_reference(model, es_ref: EigenSystem, pair, step: float = 1e-5):
    a, b = pair
    hess = np.empty((3, 3))
    for k in range(3):
        delta = np.zeros(3)
        delta[k] = step
        hi = _tracked_eigensystem(model, es_ref.field + delta, es_ref)
        lo = _tracked_eigensystem(model, es_ref.field - delta, es_ref)
        ghi = _state_gradients(model, hi)
        glo = _state_gradients(model, lo)
        hess[k] = ((ghi[b] - ghi[a]) - (glo[b] - glo[a])) / (2 * step)
    return (hess + hess.T) / 2


def _bisect_gradient_zero(scan: FieldScan, pair_index: int,
                          b_lo: float, b_hi: float, tol: float) -> float:
    pair = scan.pairs[pair_index]
    a, b = pair
    i_ref = int(np.searchsorted(scan.magnitudes, b_lo))
    ref = scan.systems[min(i_ref, len(scan.systems) - 1)]

    def g(bmag: float) -> float:
        es = _tracked_eigensystem(scan.model, bmag * scan.axis, ref)
        grads = _state_gradients(scan.model, es)
        return float((grads[b] - grads[a]) @ scan.axis)

    glo = g(b_lo)
    ghi = g(b_hi)
    if glo == 0.0:
        return b_lo
    if ghi == 0.0:
        return b_hi
    while b_hi - b_lo > tol:
        mid = 0.5 * (b_lo + b_hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if np.sign(gm) == np.sign(glo):
            b_lo, glo = mid, gm
        else:
            b_hi, ghi = mid, gm
    return 0.5 * (b_lo + b_hi)


def _merge_clock_points(points: list[ClockPoint], db: float, dnu: float) -> list[ClockPoint]:
    merged: list[ClockPoint] = []
    for pt in sorted(points, key=lambda p: (p.field_magnitude, p.frequency, p.pair)):
        dup = next((m for m in merged
                    if abs(m.field_magnitude - pt.field_magnitude) < db
                    and abs(m.frequency - pt.frequency) < dnu), None)
        if dup is None:
            merged.append(pt)
        elif pt.residual_gradient < dup.residual_gradient:
            merged[merged.index(dup)] = pt
    return merged


def fibonacci_sphere(n: int) -> np.ndarray:
    """n quasi-uniform unit vectors on the sphere (golden-spiral mesh)."""
    k = np.arange(n, dtype=float)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    z = 1.0 - 2.0 * (k + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass
class AngularScan:
    directions: np.ndarray        # (n, 3)
    gradient_norm: np.ndarray     # (n,)
    curvature_norm: np.ndarray    # (n,)
    rapid_t2: np.ndarray          # (n,)
    pair: tuple[int, int]
    b_magnitude: float


def angular_scan(model: CentralSpinModel, b_magnitude: float, directions,
                 pair: tuple[int, int], noise: NoiseModel,
                 curvature_step: float = 1e-5) -> AngularScan:
    """Sensitivities of one transition over a mesh of field directions."""
    dirs = np.asarray(directions, dtype=float)
    norms = np.linalg.norm(dirs, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-9):
        raise ValueError("grid directions must be unit vectors")
    gout = np.empty(len(dirs))
    hout = np.empty(len(dirs))
    t2out = np.empty(len(dirs))
    for i, d in enumerate(dirs):
        sens = sensitivity_at(model, b_magnitude * d, pair, noise=noise,
                              curvature_step=curvature_step)
        gout[i] = sens.gradient_norm
        hout[i] = sens.curvature_norm
        t2out[i] = sens.rapid_t2
    return AngularScan(directions=dirs, gradient_norm=gout, curvature_norm=hout,
                       rapid_t2=t2out, pair=pair, b_magnitude=b_magnitude)
