import numpy as np
import numpy.testing as npt
import pytest
from scipy import integrate

from conftest import hermitian_kubo_sigma, hermitian_qgt, smooth_gauge
from nhgeo.errors import BranchViolationError, PoleOnAxisError
from nhgeo.geometry import anomalous_connection, qgt_rr_two_band
from nhgeo.models import BlochModel, RMParams
from nhgeo.response import (TransitionTable, absorptive_part,
                            conductivity_wavepacket, drude_coefficient,
                            interband_fh, lehmann_correlator, lorentzian_kernel,
                            lower_branch_arg, optical_weight_bz,
                            optical_weight_numeric, optical_weight_quadrature)
from nhgeo.spectra import eigensystem_two_band, matrix_elements

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]])


def _toy_table():
    return TransitionTable(energies=np.array([1.0 - 0.2j, -1.0 - 0.3j]),
                           operators=(SX, SY))


# -- Lorentzian kernel --------------------------------------------------------

def test_lorentzian_peak_value():
    assert lorentzian_kernel(0.0, 0.0, 1.0, 0.0) == pytest.approx(1.0 / np.pi)


def test_lorentzian_normalization():
    val, _ = integrate.quad(lambda w: lorentzian_kernel(0.7, 0.1, 0.4, w),
                            -np.inf, np.inf)
    assert abs(val - 1.0) < 1e-6


def test_lorentzian_sign_inversion():
    w = np.linspace(-5, 5, 101)
    assert np.all(lorentzian_kernel(0.3, 0.0, -0.5, w) <= 0.0)


# -- Lehmann correlator -------------------------------------------------------

def test_lehmann_single_transition_value():
    # one initial level, off-resonance: a single resolvent term per operator pair
    table = _toy_table()
    rho = np.array([1.0, 0.0])
    omega = np.array([5.0])
    pi = lehmann_correlator(table, rho, omega)
    e_nm = 2.0
    s_nm = 0.5
    expected = SX[0, 1] * SX[1, 0] / (5.0 + e_nm - 1j * s_nm) \
        + SX[0, 0] * SX[0, 0] / (5.0 - 1j * 0.4)
    npt.assert_allclose(pi[0, 0, 0], expected, atol=1e-14)


def test_lehmann_absorptive_is_lorentzian_sum():
    # v* Pi^abs v must equal pi * sum_nm rho_n |O_mn . v|^2 L_nm(omega)
    table = _toy_table()
    rho = np.array([0.6, 0.4])
    omegas = np.linspace(-4, 4, 41)
    pi = lehmann_correlator(table, rho, omegas)
    pa = absorptive_part(pi)
    rng = np.random.default_rng(5)
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    quad_form = np.real(np.einsum("i,wij,j->w", np.conj(v), pa, v))
    direct = np.zeros_like(omegas)
    ops = table.operators
    for n in range(2):
        for m in range(2):
            ov = ops[0][m, n] * v[0] + ops[1][m, n] * v[1]
            kern = lorentzian_kernel(table.e_diff[n, m], 0.0,
                                     table.sigma_pp[n, m], omegas)
            direct += np.pi * rho[n] * abs(ov) ** 2 * kern
    npt.assert_allclose(quad_form, direct, atol=1e-12)


def test_lehmann_pole_on_axis():
    table = TransitionTable(energies=np.array([1.0 + 0j, -1.0 + 0j]),
                            operators=(SX,))
    with pytest.raises(PoleOnAxisError):
        lehmann_correlator(table, np.array([1.0, 0.0]), np.array([-2.0]))


def test_kramers_kronig_single_lorentzian():
    # analytic in the lower half-plane: Re Pi(w0) = -(1/pi) PV int Im Pi/(w - w0)
    table = TransitionTable(energies=np.array([0.5 - 0.3j, -0.5 - 0.2j]),
                            operators=(SX,))
    rho = np.array([1.0, 0.0])

    def pi_of(w):
        return lehmann_correlator(table, rho, np.atleast_1d(w))[0, 0, 0]

    w0 = 0.8
    val, _ = integrate.quad(lambda w: np.imag(pi_of(w)), -80.0, 80.0,
                            weight="cauchy", wvar=w0, limit=400)
    tail = 0.0  # integrand decays as 1/w^2; the window is wide enough for 1e-3
    assert abs(np.real(pi_of(w0)) - (-(val + tail) / np.pi)) < 1e-3


# -- absorptive part ----------------------------------------------------------

def test_response_spectrum_container():
    from nhgeo.response import ResponseSpectrum, response_spectrum
    table = _toy_table()
    omegas = np.linspace(-2.0, 2.0, 11)
    spec = response_spectrum(table, np.array([1.0, 0.0]), omegas)
    npt.assert_array_equal(spec.pi_abs, absorptive_part(spec.pi))
    with pytest.raises(ValueError):
        ResponseSpectrum(omegas=omegas, pi=spec.pi, pi_abs=spec.pi_abs + 1e-3)


def test_absorptive_symmetric_matrix():
    pi = np.array([[1.0 + 2.0j, 0.3 - 0.4j], [0.3 - 0.4j, -0.5 + 1.0j]])
    npt.assert_allclose(absorptive_part(pi), np.imag(pi), atol=1e-15)


def test_absorptive_anti_hermitian_input():
    a = np.array([[1.0j, 0.5 + 0.2j], [-0.5 + 0.2j, -2.0j]])
    assert np.max(np.abs(a + a.conj().T)) < 1e-15
    npt.assert_allclose(absorptive_part(a), -1j * a, atol=1e-15)


# -- interband coefficients ---------------------------------------------------

def test_fh_gauge_invariance(rm_model):
    for kx, ky in [(0.7, -1.3), (2.0, 0.4)]:
        f0, h0 = interband_fh(rm_model, kx, ky, band=0)
        f1, h1 = interband_fh(rm_model, kx, ky, band=0, gauge=smooth_gauge(seed=9))
        assert np.max(np.abs(f0 - f1)) < 1e-8
        assert np.max(np.abs(h0 - h1)) < 1e-8


def test_h_vanishes_hermitian(hermitian_model):
    _, hc = interband_fh(hermitian_model, 0.7, -1.3, band=0)
    assert np.max(np.abs(hc)) < 1e-12


def test_f_sum_identity(rm_model):
    # sum_mu f_mumu = tr G^RR + (i/2) div Q^R, the anomalous-connection identity
    for kx, ky in [(0.7, -1.3), (2.0, 0.4), (-1.1, 2.8)]:
        f, _ = interband_fh(rm_model, kx, ky, band=0)
        fsum = f[0, 0] + f[1, 1]
        kxa, kya = np.asarray(kx), np.asarray(ky)
        eig = eigensystem_two_band(rm_model.hamiltonian(kxa, kya), ordering="branch")
        q = qgt_rr_two_band(eig, rm_model.derivative(kxa, kya, 0),
                            rm_model.derivative(kxa, kya, 1), band=0)
        trg = np.real(q[0, 0] + q[1, 1])
        step = 1e-5

        def q_r(akx, aky, axis):
            e = eigensystem_two_band(rm_model.hamiltonian(np.asarray(akx), np.asarray(aky)),
                                     ordering="branch")
            return anomalous_connection(e, rm_model.derivative(np.asarray(akx), np.asarray(aky), axis),
                                        band=0, side="R")

        div = ((q_r(kx + step, ky, 0) - q_r(kx - step, ky, 0)) / (2 * step)
               + (q_r(kx, ky + step, 1) - q_r(kx, ky - step, 1)) / (2 * step))
        npt.assert_allclose(fsum, trg + 0.5j * div, atol=1e-9)


def test_f_reduces_to_hermitian_qgt(hermitian_model):
    # f_{mu nu} -> <d_mu n|m><m|d_nu n>, the band-resolved QGT term
    kx, ky = 0.7, -1.3
    f, _ = interband_fh(hermitian_model, kx, ky, band=0)
    ref = hermitian_qgt(hermitian_model.hamiltonian(kx, ky),
                        hermitian_model.derivative(kx, ky, 0),
                        hermitian_model.derivative(kx, ky, 1), band=1)
    npt.assert_allclose(f, ref, atol=1e-8)


# -- conductivity -------------------------------------------------------------

def test_conductivity_hermitian_matches_kubo(hermitian_model):
    for omega in (0.37, 1.9):
        for kx, ky in [(0.7, -1.3), (2.2, 0.9)]:
            sig = conductivity_wavepacket(hermitian_model, kx, ky, band=0,
                                          omega=omega)
            ref = hermitian_kubo_sigma(hermitian_model.hamiltonian(kx, ky),
                                       hermitian_model.derivative(kx, ky, 0),
                                       hermitian_model.derivative(kx, ky, 1),
                                       band=1, omega=omega)
            npt.assert_allclose(sig, ref, atol=1e-8)


def test_conductivity_large_omega_decay(rm_model):
    s1 = conductivity_wavepacket(rm_model, 0.7, -1.3, band=0, omega=50.0)
    s2 = conductivity_wavepacket(rm_model, 0.7, -1.3, band=0, omega=100.0)
    ratio = np.max(np.abs(s2)) / np.max(np.abs(s1))
    assert abs(ratio - 0.5) < 0.1


def test_drude_coefficient_matches_velocity_derivative(rm_model):
    # second derivative of e vs first finite difference of the band velocity
    kx, ky = 0.7, -1.3
    dd = drude_coefficient(rm_model, kx, ky, band=0, h=1e-4)

    def vel(akx, aky, axis):
        kxa, kya = np.asarray(akx), np.asarray(aky)
        eig = eigensystem_two_band(rm_model.hamiltonian(kxa, kya), ordering="branch")
        v = matrix_elements(eig.left, rm_model.derivative(kxa, kya, axis), eig.right)
        return v[0, 0]

    step = 1e-4
    d2xx = (vel(kx + step, ky, 0) - vel(kx - step, ky, 0)) / (2 * step)
    d2xy = (vel(kx, ky + step, 0) - vel(kx, ky - step, 0)) / (2 * step)
    npt.assert_allclose(dd[0, 0], d2xx, atol=1e-5)
    npt.assert_allclose(dd[0, 1], d2xy, atol=1e-5)


# -- optical weights ----------------------------------------------------------

def test_weight_closed_vs_quadrature_25_points(rm_model, rng):
    worst = 0.0
    for kx, ky in rng.uniform(-np.pi, np.pi, size=(25, 2)):
        wq = optical_weight_quadrature(rm_model, kx, ky, eta=1e-3)
        wn, _ = optical_weight_numeric(rm_model, kx, ky, eta=1e-3)
        worst = max(worst, abs(wq - wn) / max(abs(wq), 1e-9))
    assert worst < 1e-4


def test_weight_eta_dependence_is_logarithmic(rm_model):
    kx, ky = 0.7, -1.3
    w1, coeff = optical_weight_numeric(rm_model, kx, ky, eta=1e-3)
    w2, _ = optical_weight_numeric(rm_model, kx, ky, eta=1e-2)
    npt.assert_allclose(w2 - w1, coeff * np.log(10.0), atol=1e-12)


def test_weight_bz_ln_eta_cancels(rm_model):
    res = optical_weight_bz(rm_model, band="slowest", n_grid=48, eta=1e-3)
    assert abs(res.ln_eta_coefficient) < 1e-6


def test_weight_bz_eta_robustness(rm_model):
    a = optical_weight_bz(rm_model, band="slowest", n_grid=32, eta=1e-3)
    b = optical_weight_bz(rm_model, band="slowest", n_grid=32, eta=1e-2)
    assert abs(a.bz_trace - b.bz_trace) / abs(a.bz_trace) < 1e-4


def test_weight_hermitian_reduces_to_metric(hermitian_model):
    # eta-independent and equal to pi * (metric trace of the occupied band)
    kx, ky = 0.7, -1.3
    w, coeff = optical_weight_numeric(hermitian_model, kx, ky, eta=1e-3)
    assert abs(coeff) < 1e-10
    ref = hermitian_qgt(hermitian_model.hamiltonian(kx, ky),
                        hermitian_model.derivative(kx, ky, 0),
                        hermitian_model.derivative(kx, ky, 1), band=0)
    npt.assert_allclose(w, np.pi * np.real(ref[0, 0] + ref[1, 1]), atol=1e-8)


def test_weight_bz_closed_form_smooth_regime():
    # slowest band k-smooth for Gamma above 2 max|Im sqrt(d.d)|: the BZ sum
    # collapses onto int trG^RR (pi + 2 arg) up to the spectral Riemann error
    m = BlochModel.rice_mele(RMParams(gamma=1.0, Gamma=1.5, variant="supplemental"))
    res = optical_weight_bz(m, band="slowest", n_grid=48, eta=1e-3)
    assert abs(res.bz_trace - res.closed_trace) / abs(res.closed_trace) < 1e-3
    assert res.bound_trace > 0.0


def test_weight_bz_stitched_regime_reports(rm_model):
    # below the smoothness threshold the weight field has physical jump
    # lines; the closed reduction then only tracks the numeric value
    res = optical_weight_bz(rm_model, band="slowest", n_grid=48, eta=1e-3)
    assert res.bound_trace > 0.0
    assert -np.pi <= res.arg_infimum <= 0.0
    assert abs(res.bz_trace - res.closed_trace) / abs(res.closed_trace) < 0.2


def test_weight_fixed_band_branch_guard(rm_model):
    # a fixed branch band grows in parts of the zone: the [-pi, 0] branch
    # logarithm must refuse rather than wrap
    with pytest.raises(BranchViolationError):
        optical_weight_bz(rm_model, band=1, n_grid=16, eta=1e-3)


def test_branch_arg_convention():
    npt.assert_allclose(lower_branch_arg(np.array([-2.0 + 0j])), [-np.pi])
    npt.assert_allclose(lower_branch_arg(np.array([3.0 + 0j])), [0.0])
    npt.assert_allclose(lower_branch_arg(np.array([1.0 - 1.0j])), [-np.pi / 4])
    with pytest.raises(BranchViolationError):
        lower_branch_arg(np.array([1.0 + 0.5j]))


def test_branch_continuity_along_rows():
    # smooth slowest band: the branch argument never wraps along mesh rows
    m = BlochModel.rice_mele(RMParams(gamma=1.0, Gamma=1.5, variant="supplemental"))
    res = optical_weight_bz(m, band="slowest", n_grid=48, eta=1e-3)
    jumps = np.abs(np.diff(res.arg_per_k, axis=1))
    assert np.max(jumps) < np.pi / 2
    assert np.all(res.arg_per_k <= 0.0)
    assert np.all(res.arg_per_k > -np.pi)
