import numpy as np
import pytest
from numpy.testing import assert_allclose

from chainqed.hamiltonian import (
    ClassicalDrive,
    FieldMode,
    OperatorCache,
    PhononMode,
    SystemParams,
    TotalHamiltonian,
    build_exchange,
    build_h0,
    build_hc,
    build_hcf,
    build_hcp,
    build_hdrive,
    build_hf,
    build_hp,
    build_total,
    coupling_q,
)
from chainqed.hilbert import ModeSpec, Operator, SpaceSpec, build_space, commutator
from chainqed.transition_ops import build_transition_set


def uniform_params(n, omega=1.0, j=0.0, shift=0.0, **kwargs):
    return SystemParams(
        site_energies=tuple((shift - omega / 2, shift + omega / 2) for _ in range(n)),
        exchange_j=j,
        **kwargs,
    )


def two_site_xxz_eigenvalues(omega, j):
    """Analytic spectrum of the uniform two-site chain with doubled exchange.

    Basis {|aa>, triplet-0, singlet, |bb>}: the zz term gives +J on the
    aligned states and -J on the mixed ones; the flip-flop contributes
    +-2J on triplet/singlet.
    """
    return sorted([-omega + j, omega + j, j, -3 * j])


def test_h0_single_site_eigenvalues():
    space = build_space(SpaceSpec(1))
    params = SystemParams(site_energies=((0.0, 1.3),))
    evals = np.linalg.eigvalsh(build_h0(space, params).to_dense())
    assert_allclose(evals, [0.0, 1.3], atol=1e-14)


def test_h0_sigma_representation():
    # H0 equals (omega/2) sigma_z + (E_low + E_up)/2 per site, exactly
    space = build_space(SpaceSpec(2))
    params = SystemParams(site_energies=((0.2, 1.0), (-0.3, 0.9)))
    h0 = build_h0(space, params)
    rebuilt = None
    for v, (e_low, e_up) in enumerate(params.site_energies):
        ts = build_transition_set(space, v)
        term = 0.5 * (e_up - e_low) * ts.z + 0.5 * (e_low + e_up) * ts.unit
        rebuilt = term if rebuilt is None else rebuilt + term
    assert (h0 - rebuilt).max_abs() <= 1e-15


def test_h0_trace_oracle():
    # trace = 2^(n-1) * sum_v (E_low + E_up) on the site factor
    space = build_space(SpaceSpec(3))
    params = SystemParams(site_energies=((0.1, 0.9), (-0.2, 0.5), (0.0, 2.0)))
    trace = np.trace(build_h0(space, params).to_dense()).real
    expected = 2 ** (3 - 1) * sum(a + b for a, b in params.site_energies)
    assert_allclose(trace, expected, atol=1e-12)


def test_hc_reduces_to_h0_without_exchange():
    space = build_space(SpaceSpec(2))
    params = uniform_params(2, j=0.0)
    assert (build_hc(space, params) - build_h0(space, params)).max_abs() == 0.0


def test_two_site_exchange_spectrum_matches_analytic():
    space = build_space(SpaceSpec(2))
    params = uniform_params(2, omega=1.0, j=0.17)
    evals = np.linalg.eigvalsh(build_hc(space, params).to_dense())
    assert_allclose(sorted(evals), two_site_xxz_eigenvalues(1.0, 0.17), atol=1e-13)


def test_exchange_conserves_total_inversion():
    space = build_space(SpaceSpec(3))
    params = uniform_params(3, j=0.3)
    hc = build_hc(space, params)
    total_z = None
    for v in range(3):
        z = build_transition_set(space, v).z
        total_z = z if total_z is None else total_z + z
    assert commutator(hc, total_z).max_abs() <= 1e-13


def test_hc_zero_shift_is_half_omega_sigma_z():
    space = build_space(SpaceSpec(2))
    params = uniform_params(2, omega=0.8, j=0.0)
    expected = None
    for v in range(2):
        term = 0.4 * build_transition_set(space, v).z
        expected = term if expected is None else expected + term
    assert (build_hc(space, params) - expected).max_abs() == 0.0


def test_exchange_invariant_under_site_reversal():
    n = 4
    space = build_space(SpaceSpec(n))
    params = uniform_params(n, j=0.21)
    hj = build_exchange(space, params).to_dense()
    # permutation reversing the site order
    perm = np.zeros(space.dim, dtype=int)
    for i in range(space.dim):
        occ = space.index_to_occupation(i)
        perm[i] = space.occupation_to_index(tuple(reversed(occ)))
    assert_allclose(hj, hj[np.ix_(perm, perm)], atol=1e-14)


# -- coupling function ------------------------------------------------------------


@pytest.fixture
def coupled_params():
    return SystemParams(
        site_energies=((-0.5, 0.5),),
        field_modes=(FieldMode(omega=1.3, wavevector=0.0, amplitude=0.4,
                               polarization_overlap=(0.8,)),),
        dipole=(1.2,),
        coupling_mode="literal_time_dependent",
    )


def test_coupling_q_at_origin_is_real_negative(coupled_params):
    q = coupling_q(coupled_params, 0, 0, 0.0)
    assert_allclose(q.imag, 0.0, atol=1e-15)
    assert q.real == pytest.approx(-1.2 * 0.8 * 0.4)


def test_coupling_q_modulus_time_independent(coupled_params):
    mags = [abs(coupling_q(coupled_params, 0, 0, t)) for t in (0.0, 0.7, 13.9)]
    assert_allclose(mags, mags[0], rtol=1e-14)


def test_coupling_q_periodicity(coupled_params):
    period = 2 * np.pi / coupled_params.field_modes[0].omega
    assert coupling_q(coupled_params, 0, 0, period) == pytest.approx(
        coupling_q(coupled_params, 0, 0, 0.0), abs=1e-14
    )


def test_coupling_q_static_mode_freezes_phase(coupled_params):
    static = SystemParams(
        site_energies=coupled_params.site_energies,
        field_modes=coupled_params.field_modes,
        dipole=coupled_params.dipole,
        coupling_mode="static_phase_at_t0",
    )
    assert coupling_q(static, 0, 0, 5.0) == coupling_q(static, 0, 0, 0.0)


# -- interaction Hamiltonian -------------------------------------------------------


def test_hcf_without_modes_is_zero():
    space = build_space(SpaceSpec(2))
    params = uniform_params(2)
    assert build_hcf(space, params).max_abs() == 0.0


def test_hcf_sparsity_pattern_non_rwa():
    # single site, single mode: elements connect |site m> <-> |flipped m -+ 1>,
    # both rotating and counter-rotating blocks present
    space = build_space(SpaceSpec(1, (ModeSpec(3),)))
    params = SystemParams(
        site_energies=((-0.5, 0.5),),
        field_modes=(FieldMode(omega=1.0, amplitude=0.3, polarization_overlap=(1.0,)),),
    )
    h = build_hcf(space, params).to_dense()
    nonzero = np.argwhere(np.abs(h) > 1e-15)
    assert len(nonzero)
    for i, j in nonzero:
        occ_i = space.index_to_occupation(i)
        occ_j = space.index_to_occupation(j)
        assert occ_i[0] != occ_j[0]            # site always flips
        assert abs(occ_i[1] - occ_j[1]) == 1   # photon number changes by one
    # counter-rotating element: |lower, 1> <-> |upper, 2>
    i = space.occupation_to_index((1, 2))
    j = space.occupation_to_index((0, 1))
    assert abs(h[i, j]) > 1e-15


def test_hcf_scales_linearly_in_amplitude():
    space = build_space(SpaceSpec(1, (ModeSpec(2),)))

    def build(amp):
        params = SystemParams(
            site_energies=((-0.5, 0.5),),
            field_modes=(FieldMode(omega=1.0, amplitude=amp, polarization_overlap=(1.0,)),),
        )
        return build_hcf(space, params)

    assert (build(0.6) - 3.0 * build(0.2)).max_abs() <= 1e-14


def test_hcf_hermitian_at_random_times():
    space = build_space(SpaceSpec(2, (ModeSpec(2),)))
    params = SystemParams(
        site_energies=((-0.5, 0.5), (-0.6, 0.6)),
        field_modes=(FieldMode(omega=0.9, wavevector=1.1, amplitude=0.3,
                               polarization_overlap=(1.0, 0.7)),),
        coupling_mode="literal_time_dependent",
    )
    rng = np.random.default_rng(5)
    for t in rng.uniform(0, 20, size=4):
        assert build_hcf(space, params, t).hermiticity_defect() <= 1e-13


# -- field and phonon Hamiltonians ----------------------------------------------------


def test_hf_eigenvalues():
    space = build_space(SpaceSpec(1, (ModeSpec(2),)))
    omega = 0.7
    params = SystemParams(
        site_energies=((-0.5, 0.5),),
        field_modes=(FieldMode(omega=omega),),
    )
    hf = build_hf(space, params).to_dense()
    evals = sorted(set(np.round(np.linalg.eigvalsh(hf), 12)))
    assert_allclose(evals, [omega / 2, 3 * omega / 2, 5 * omega / 2], atol=1e-12)


def test_hf_commutes_with_number():
    space = build_space(SpaceSpec(1, (ModeSpec(3),)))
    params = SystemParams(
        site_energies=((-0.5, 0.5),), field_modes=(FieldMode(omega=1.1),)
    )
    cache = OperatorCache(space)
    assert commutator(build_hf(space, params, cache), cache.a_num[0]).max_abs() == 0.0


def test_hp_hcp_basics():
    space = build_space(SpaceSpec(2, (), (ModeSpec(2),)))
    params_off = SystemParams(
        site_energies=((-0.5, 0.5), (-0.5, 0.5)),
        phonon_modes=(PhononMode(nu=0.4, coupling=0.0),),
    )
    assert build_hcp(space, params_off).max_abs() == 0.0
    params = SystemParams(
        site_energies=((-0.5, 0.5), (-0.5, 0.5)),
        phonon_modes=(PhononMode(nu=0.4, coupling=0.15),),
    )
    cache = OperatorCache(space)
    hcp = build_hcp(space, params, cache)
    assert hcp.is_hermitian()
    for j in range(2):
        assert commutator(hcp, cache.sigma[j].z).max_abs() == 0.0
    # commutator with a raising operator: the basis of the transverse
    # phonon corrections
    expected = 2 * 0.15 * ((cache.b[0] + cache.b_dag[0]) @ cache.sigma[0].plus)
    assert (commutator(hcp, cache.sigma[0].plus) - expected).max_abs() <= 1e-14


def test_hp_ground_energy():
    space = build_space(SpaceSpec(1, (), (ModeSpec(2), ModeSpec(3))))
    params = SystemParams(
        site_energies=((-0.5, 0.5),),
        phonon_modes=(PhononMode(nu=0.3), PhononMode(nu=0.8)),
    )
    evals = np.linalg.eigvalsh(build_hp(space, params).to_dense())
    assert_allclose(evals[0], 0.5 * (0.3 + 0.8), atol=1e-13)


# -- total Hamiltonian -----------------------------------------------------------------


def test_total_decoupled_is_diagonal_with_additive_spectrum():
    space = build_space(SpaceSpec(1, (ModeSpec(2),), (ModeSpec(1),)))
    params = SystemParams(
        site_energies=((0.0, 1.0),),
        field_modes=(FieldMode(omega=0.7, amplitude=0.0),),
        phonon_modes=(PhononMode(nu=0.3, coupling=0.0),),
    )
    h = build_total(space, params).to_dense()
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0
    diag = np.diag(h).real
    for i in range(space.dim):
        site, m, q = space.index_to_occupation(i)
        expected = site * 1.0 + 0.7 * (m + 0.5) + 0.3 * (q + 0.5)
        assert_allclose(diag[i], expected, atol=1e-13)


def test_total_hermitian_at_random_t():
    space = build_space(SpaceSpec(2, (ModeSpec(2),), (ModeSpec(1),)))
    params = SystemParams(
        site_energies=((-0.5, 0.5), (-0.4, 0.6)),
        exchange_j=0.1,
        field_modes=(FieldMode(omega=1.0, wavevector=0.4, amplitude=0.25,
                               polarization_overlap=(1.0, 0.9)),),
        phonon_modes=(PhononMode(nu=0.5, coupling=0.1),),
        coupling_mode="literal_time_dependent",
    )
    rng = np.random.default_rng(17)
    for t in rng.uniform(0, 30, size=3):
        assert build_total(space, params, t).hermiticity_defect() <= 1e-13


def test_total_static_mode_time_independent():
    space = build_space(SpaceSpec(1, (ModeSpec(2),)))
    params = SystemParams(
        site_energies=((-0.5, 0.5),),
        field_modes=(FieldMode(omega=1.0, amplitude=0.3, polarization_overlap=(1.0,)),),
        coupling_mode="static_phase_at_t0",
    )
    h1 = build_total(space, params, 0.0)
    h2 = build_total(space, params, 7.31)
    assert (h1 - h2).max_abs() == 0.0


def test_total_hamiltonian_precompiled_matches_builder():
    space = build_space(SpaceSpec(2, (ModeSpec(2),)))
    params = SystemParams(
        site_energies=((-0.5, 0.5), (-0.45, 0.55)),
        exchange_j=0.07,
        field_modes=(FieldMode(omega=1.2, wavevector=0.9, amplitude=0.2,
                               polarization_overlap=(1.0, 0.8)),),
        coupling_mode="literal_time_dependent",
        drives=(ClassicalDrive(amplitude=0.05 + 0.02j, frequency=1.0),),
    )
    ham = TotalHamiltonian(space, params)
    assert not ham.is_static
    rng = np.random.default_rng(23)
    psi = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    for t in (0.0, 0.83, 4.2):
        h_ref = build_total(space, params, t)
        assert (ham.at(t) - h_ref).max_abs() <= 1e-13
        assert_allclose(ham.apply(t, psi), h_ref.to_dense() @ psi, atol=1e-12)


def test_drive_term():
    space = build_space(SpaceSpec(1))
    params = SystemParams(
        site_energies=((-0.5, 0.5),),
        drives=(ClassicalDrive(amplitude=0.1, frequency=1.0),),
    )
    h = build_hdrive(space, params, 0.0)
    cache = OperatorCache(space)
    assert (h - 0.2 * cache.sigma_x[0]).max_abs() <= 1e-15


def test_params_validation():
    with pytest.raises(ValueError, match="upper level"):
        SystemParams(site_energies=((0.5, -0.5),))
    with pytest.raises(ValueError, match="boundary"):
        SystemParams(site_energies=((-0.5, 0.5),), boundary="twisted")
    space = build_space(SpaceSpec(2, (ModeSpec(2),)))
    params = uniform_params(2)
    problems = params.validate_against(space)
    assert any("field modes" in p for p in problems)


def test_periodic_neighbors():
    params = uniform_params(4, boundary="periodic")
    assert params.neighbors(0) == (3, 1)
    assert params.bonds() == ((0, 1), (1, 2), (2, 3), (3, 0))
    open_params = uniform_params(4)
    assert open_params.neighbors(0) == (1,)
    assert open_params.neighbors(3) == (2,)
