import numpy as np
import pytest

from clockbath.clockfinder import (
    CalibrationError,
    DegenerateTransitionError,
    NoiseModel,
    StepTooCoarseError,
    TransitionSensitivity,
    angular_scan,
    calibrate_sigma,
    fibonacci_sphere,
    field_scan,
    find_clock_points,
    finite_difference_gradient,
    match_states,
    rapid_t2,
    sensitivity_at,
    track_states,
    transition_curvature,
    transition_gradient,
)
from clockbath.spincore import CentralSpinModel, eigensystem_at

GAMMA_E = 95.3e9


def _model():
    return CentralSpinModel()


# ---------------------------------------------------------------- tracking

def test_track_states_constant_path_is_identity():
    model = _model()
    systems = track_states(model, [[0, 0, 10e-3]] * 3)
    for es in systems[1:]:
        assert np.allclose(es.energies, systems[0].energies)


def test_track_states_forward_backward_permutations_compose_to_identity():
    model = _model()
    path = [[0, 0, b] for b in np.linspace(2e-3, 6e-3, 9)]
    systems = track_states(model, path)
    for a, b in zip(systems, systems[1:]):
        fwd = match_states(a, b)
        bwd = match_states(b, a)
        assert np.array_equal(bwd[fwd], np.arange(16))


def test_track_states_refinement_stability_across_crossings():
    # transition frequencies from coarse and 2x finer tracking agree
    model = _model()
    coarse_b = np.arange(15e-3, 22e-3, 0.1e-3)
    fine_b = np.arange(15e-3, 22e-3, 0.05e-3)
    coarse = track_states(model, [[0, 0, b] for b in coarse_b])
    fine = track_states(model, [[0, 0, b] for b in fine_b])
    nu_coarse = np.array([es.energies[8] - es.energies[5] for es in coarse])
    nu_fine = np.array([es.energies[8] - es.energies[5] for es in fine[::2]])
    assert np.abs(nu_coarse - nu_fine).max() < 1e3


def test_track_states_rejects_too_coarse_steps():
    model = _model()
    # a huge jump through the crossing region cannot be matched confidently
    with pytest.raises(StepTooCoarseError):
        es0 = eigensystem_at(model, [0, 0, 1e-4])
        es1 = eigensystem_at(model, [1.0, 0, 0])
        match_states(es0, es1, min_overlap=0.99)


# ---------------------------------------------------------------- gradients

def test_gradient_matches_finite_difference_oracle_on_random_samples():
    model = _model()
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 100:
        b = rng.uniform(-1, 1, 3)
        b = b / np.linalg.norm(b) * rng.uniform(2e-3, 50e-3)
        a = int(rng.integers(0, 15))
        bb = int(rng.integers(a + 1, 16))
        try:
            g_hf = transition_gradient(model, b, (a, bb))
            g_fd = finite_difference_gradient(model, b, (a, bb))
        except DegenerateTransitionError:
            continue
        scale = max(np.linalg.norm(g_hf), 1e3)
        assert np.linalg.norm(g_hf - g_fd) < 1e-3 * scale
        checked += 1


def test_gradient_high_field_electron_flip_asymptote():
    model = _model()
    # at 1 T the lowest-to-highest pair is an electron flip: |grad| -> gamma_e
    g = transition_gradient(model, [0, 0, 1.0], (0, 15))
    assert abs(np.linalg.norm(g) - GAMMA_E) < 0.01 * GAMMA_E


def test_gradient_suppressed_at_clock_field():
    model = _model()
    g = transition_gradient(model, [0, 0, 18.5e-3], (5, 8))
    assert abs(g[2]) <= 1e-3 * GAMMA_E


def test_gradient_requires_minimum_field():
    with pytest.raises(ValueError):
        transition_gradient(_model(), [0, 0, 1e-5], (0, 15))


def test_gradient_rejects_degenerate_pairs():
    # the guard fires when either pair state sits within 1 kHz of a neighbor
    model = _model()
    es_degenerate = eigensystem_at(model, [0, 0, 1e-8])
    with pytest.raises(DegenerateTransitionError):
        transition_gradient(model, [0, 0, 1e-3], (0, 8), es=es_degenerate)


# ---------------------------------------------------------------- curvature

def test_curvature_symmetric_and_richardson_stable():
    model = _model()
    hess = transition_curvature(model, [0, 0, 18.5e-3], (5, 8), richardson_check=True)
    assert np.allclose(hess, hess.T)


def test_curvature_vanishes_for_pure_zeeman_model():
    model = CentralSpinModel(hyperfine_a=0.0)
    # spectrum is linear in |B|: the along-axis curvature vanishes at any
    # field; the transverse entries carry only the geometric f'/|B| term,
    # below 1 Hz/uT^2 once the field is large enough
    hess = transition_curvature(model, [0, 0, 10e-3], (0, 15))
    assert abs(hess[2, 2]) < 1e6
    hess_high = transition_curvature(model, [0, 0, 0.1], (0, 15))
    assert np.abs(hess_high).max() < 1e12


# ---------------------------------------------------------------- rapid T2

def _sens(grad_norm, hess_norm):
    grad = np.array([0.0, 0.0, grad_norm])
    hess = np.diag([0.0, 0.0, hess_norm])
    return TransitionSensitivity(field=np.array([0, 0, 0.025]), pair=(6, 9),
                                 frequency=2.2e9, gradient=grad, hessian=hess)


def test_rapid_t2_fully_protected_limit_returns_cap():
    noise = NoiseModel(sigma_b=1e-9, t2_cap=10.0)
    assert rapid_t2(_sens(0.0, 0.0), noise) == 10.0


def test_rapid_t2_reference_value():
    # |grad| sigma = 25.6 Hz with negligible curvature -> T2 = 39 ms
    noise = NoiseModel(sigma_b=1e-9)
    t2 = rapid_t2(_sens(25.6e9, 0.0), noise)
    assert abs(t2 - 1 / 25.6) < 1e-12
    assert abs(t2 - 0.039) < 1e-3


def test_rapid_t2_halves_when_sigma_doubles():
    s = _sens(1e10, 0.0)
    t1 = rapid_t2(s, NoiseModel(sigma_b=1e-9))
    t2 = rapid_t2(s, NoiseModel(sigma_b=2e-9))
    assert abs(t1 / t2 - 2.0) < 1e-12


def test_rapid_t2_strictly_decreases_with_sigma():
    s = _sens(5e9, 3e12)
    sigmas = np.geomspace(1e-10, 1e-7, 12)
    vals = [rapid_t2(s, NoiseModel(sigma_b=x, t2_cap=1e12)) for x in sigmas]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_calibration_round_trip_random_inputs():
    rng = np.random.default_rng(23)
    for _ in range(20):
        s = _sens(rng.uniform(1e8, 1e11), rng.uniform(0.0, 1e13))
        t2_ref = rng.uniform(1e-4, 1.0)
        sigma = calibrate_sigma(t2_ref, s)
        back = rapid_t2(s, NoiseModel(sigma_b=sigma, t2_cap=1e12))
        assert abs(back - t2_ref) < 1e-6 * t2_ref


def test_calibration_closed_form_without_curvature():
    s = _sens(2.5e10, 0.0)
    sigma = calibrate_sigma(0.039, s)
    assert abs(sigma - 1.0 / (2.5e10 * 0.039)) < 1e-15


def test_calibration_rejects_zero_sensitivity():
    with pytest.raises(CalibrationError):
        calibrate_sigma(0.039, _sens(0.0, 0.0))


def test_calibration_at_reference_field_matches_reported_noise_amplitude():
    # transition 1 at 25 mT with the 39 ms reference pins sigma_B near 0.93 nT
    sens = sensitivity_at(_model(), [0, 0, 25e-3], (6, 9))
    sigma = calibrate_sigma(0.039, sens)
    assert 0.93e-9 / 2 < sigma < 0.93e-9 * 2


# ---------------------------------------------------------------- scans

@pytest.fixture(scope="module")
def narrow_scan():
    model = _model()
    return field_scan(model, [0, 0, 1.0], (17e-3, 20e-3), 0.1e-3,
                      noise=NoiseModel(sigma_b=0.954e-9))


def test_field_scan_finds_clock_point_in_window(narrow_scan):
    points = find_clock_points(narrow_scan)
    assert len(points) == 1
    pt = points[0]
    assert abs(pt.field_magnitude - 18.5e-3) < 0.2e-3
    assert abs(pt.frequency - 2.11e9) < 20e6
    assert pt.residual_gradient < 1e6


def test_clock_point_is_local_t2_maximum(narrow_scan):
    scan = narrow_scan
    points = find_clock_points(scan)
    pt = points[0]
    j = scan.pairs.index(pt.pair)
    i = int(np.argmin(np.abs(scan.magnitudes - pt.field_magnitude)))
    t2 = scan.rapid_t2[:, j]
    assert t2[i] >= t2[max(i - 5, 0)]
    assert t2[i] >= t2[min(i + 5, len(t2) - 1)]


def test_bisection_agrees_with_dense_grid(narrow_scan):
    model = _model()
    pt = find_clock_points(narrow_scan)[0]
    dense_b = np.arange(18.2e-3, 18.8e-3, 1e-6)
    systems = track_states(model, [[0, 0, b] for b in dense_b])
    a, b = pt.pair
    nu = np.array([es.energies[b] - es.energies[a] for es in systems])
    slope = np.gradient(nu, dense_b)
    b_dense = dense_b[int(np.argmin(np.abs(slope)))]
    assert abs(pt.field_magnitude - b_dense) < 2e-6


def test_scan_isotropy_across_axes():
    model = _model()
    kwargs = dict(b_range=(17e-3, 19e-3), step=0.25e-3,
                  noise=NoiseModel(sigma_b=0.954e-9))
    scan_z = field_scan(model, [0, 0, 1.0], **kwargs)
    scan_x = field_scan(model, [1.0, 0, 0], **kwargs)
    assert np.allclose(scan_z.frequencies, scan_x.frequencies, rtol=1e-6, atol=1.0)
    assert np.allclose(scan_z.rapid_t2, scan_x.rapid_t2, rtol=1e-6, atol=1e-9)


def test_full_scan_recovers_three_clock_points_with_pure_zeeman_empty():
    model = CentralSpinModel(hyperfine_a=0.0)
    scan = field_scan(model, [0, 0, 1.0], (5e-3, 30e-3), 0.5e-3)
    assert find_clock_points(scan) == []


def test_halving_scan_step_moves_clock_points_little():
    model = _model()
    pts = []
    for step in (0.1e-3, 0.05e-3):
        scan = field_scan(model, [0, 0, 1.0], (18e-3, 19e-3), step)
        pts.append(find_clock_points(scan)[0].field_magnitude)
    assert abs(pts[0] - pts[1]) < 0.025e-3


# ---------------------------------------------------------------- angular

def test_fibonacci_sphere_unit_norm_and_count():
    d = fibonacci_sphere(326)
    assert d.shape == (326, 3)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)


def test_angular_scan_uniform_for_isotropic_model():
    model = _model()
    noise = NoiseModel(sigma_b=0.954e-9)
    result = angular_scan(model, 18.5e-3, fibonacci_sphere(64), (6, 9), noise)
    ratio = result.rapid_t2.max() / result.rapid_t2.min()
    assert ratio < 1 + 1e-6


def test_angular_scan_antipodal_pairs_match():
    model = _model()
    noise = NoiseModel(sigma_b=0.954e-9)
    dirs = np.array([[0.3, -0.5, 0.81], [-0.3, 0.5, -0.81]])
    dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    result = angular_scan(model, 18.5e-3, dirs, (6, 9), noise)
    assert abs(result.rapid_t2[0] - result.rapid_t2[1]) < 1e-6 * result.rapid_t2[0]
    assert abs(result.gradient_norm[0] - result.gradient_norm[1]) < 1e-3


def test_angular_scan_detects_injected_anisotropy():
    model = CentralSpinModel(gamma_e=(95.3e9 * 1.01, 95.3e9, 95.3e9))
    noise = NoiseModel(sigma_b=0.954e-9)
    result = angular_scan(model, 18.5e-3, fibonacci_sphere(32), (6, 9), noise)
    ratio = result.rapid_t2.max() / result.rapid_t2.min()
    assert ratio > 1 + 1e-4


def test_angular_scan_rejects_non_unit_directions():
    with pytest.raises(ValueError):
        angular_scan(_model(), 18.5e-3, np.array([[1.0, 1.0, 0.0]]), (6, 9),
                     NoiseModel(sigma_b=1e-9))
