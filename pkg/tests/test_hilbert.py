import numpy as np
import pytest
from numpy.testing import assert_allclose

from chainqed.hilbert import (
    DimensionMismatchError,
    ModeSpec,
    Operator,
    SpaceSpec,
    SpaceTooLargeError,
    annihilation_local,
    anticommutator,
    build_space,
    coherent_local,
    commutator,
    creation_local,
    embed_local,
    fock_local,
    identity,
    number_local,
    product_state,
    site_local_state,
    top_level_projector_local,
)
from chainqed.transition_ops import SIGMA_PLUS_LOCAL, SIGMA_Z_LOCAL


@pytest.mark.parametrize(
    "spec,expected_dim",
    [
        (SpaceSpec(1), 2),
        (SpaceSpec(2, (ModeSpec(3),)), 16),
        (SpaceSpec(3), 8),
        (SpaceSpec(2, (ModeSpec(2),), (ModeSpec(1),)), 24),
    ],
)
def test_space_dimensions(spec, expected_dim):
    space = build_space(spec)
    assert space.dim == expected_dim
    assert space.dim == spec.dimension


def test_space_cap_enforced():
    spec = SpaceSpec(4, (ModeSpec(255),))
    with pytest.raises(SpaceTooLargeError, match="space too large"):
        build_space(spec, dimension_cap=1000)


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        SpaceSpec(0)
    with pytest.raises(ValueError):
        ModeSpec(0)


def test_index_occupation_round_trip():
    space = build_space(SpaceSpec(2, (ModeSpec(3),), (ModeSpec(2),)))
    for i in range(space.dim):
        occ = space.index_to_occupation(i)
        assert space.occupation_to_index(occ) == i
    # tuples respect local dimensions
    occs = [space.index_to_occupation(i) for i in range(space.dim)]
    assert len(set(occs)) == space.dim


def test_subsystem_ordering_sites_then_field_then_phonon():
    space = build_space(SpaceSpec(2, (ModeSpec(2),), (ModeSpec(1),)))
    kinds = [s.kind for s in space.subsystems]
    assert kinds == ["site", "site", "field", "phonon"]
    assert space.site_slot(1) == 1
    assert space.field_slot(0) == 2
    assert space.phonon_slot(0) == 3


def test_embed_identity_is_identity():
    space = build_space(SpaceSpec(2, (ModeSpec(2),)))
    op = embed_local(space, 1, np.eye(2))
    assert_allclose(op.to_dense(), np.eye(space.dim))


def test_embed_dimension_mismatch_names_subsystem():
    space = build_space(SpaceSpec(1, (ModeSpec(3),)))
    with pytest.raises(DimensionMismatchError, match=r"field\[0\]"):
        embed_local(space, 1, np.eye(2))


def test_disjoint_embeddings_commute():
    space = build_space(SpaceSpec(2))
    z0 = embed_local(space, 0, SIGMA_Z_LOCAL)
    plus1 = embed_local(space, 1, SIGMA_PLUS_LOCAL)
    assert commutator(z0, plus1).max_abs() == 0.0


def test_embedding_is_algebra_homomorphism():
    space = build_space(SpaceSpec(1, (ModeSpec(3),)))
    rng = np.random.default_rng(11)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    slot = space.field_slot(0)
    lhs = embed_local(space, slot, a @ b)
    rhs = embed_local(space, slot, a) @ embed_local(space, slot, b)
    assert (lhs - rhs).max_abs() <= 1e-14
    lhs_sum = embed_local(space, slot, a + b)
    rhs_sum = embed_local(space, slot, a) + embed_local(space, slot, b)
    assert (lhs_sum - rhs_sum).max_abs() <= 1e-14


@pytest.mark.parametrize("cutoff", [1, 2, 5])
def test_annihilation_matrix_elements(cutoff):
    a = annihilation_local(cutoff)
    expected = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    for n in range(1, cutoff + 1):
        expected[n - 1, n] = np.sqrt(n)
    assert_allclose(a, expected)


def test_annihilation_small_cases():
    assert_allclose(annihilation_local(1), [[0, 1], [0, 0]])
    assert_allclose(np.diag(annihilation_local(2), k=1), [1, np.sqrt(2)])


def test_number_operator_diagonal():
    a = annihilation_local(4)
    assert_allclose(a.conj().T @ a, number_local(4), atol=1e-15)


def test_truncated_commutation_relation():
    # [a, a^dag] = 1 - (cutoff + 1) |top><top| on the truncated ladder
    cutoff = 2
    space = build_space(SpaceSpec(1, (ModeSpec(cutoff),)))
    slot = space.field_slot(0)
    a = embed_local(space, slot, annihilation_local(cutoff))
    expected = identity(space) - (cutoff + 1) * embed_local(
        space, slot, top_level_projector_local(cutoff)
    )
    assert (commutator(a, a.dag()) - expected).max_abs() <= 1e-14


def test_operator_arithmetic_identities():
    space = build_space(SpaceSpec(2))
    rng = np.random.default_rng(3)
    a = Operator(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    assert commutator(a, a).max_abs() == 0.0
    eye = identity(space)
    assert (anticommutator(eye, a) - 2.0 * a).max_abs() <= 1e-15


def test_operator_dimension_mismatch():
    a = Operator(np.eye(2))
    b = Operator(np.eye(4))
    with pytest.raises(DimensionMismatchError):
        a + b
    with pytest.raises(DimensionMismatchError):
        a @ b


def test_hermiticity_detection():
    herm = Operator(np.array([[1.0, 2.0 + 1j], [2.0 - 1j, -1.0]]))
    assert herm.is_hermitian()
    assert not Operator(np.array([[0, 1], [0, 0]])).is_hermitian()


def test_coherent_state_moments():
    alpha = 1.5 + 0.5j
    cutoff = 30
    vec = coherent_local(alpha, cutoff)
    assert_allclose(np.linalg.norm(vec), 1.0, atol=1e-14)
    n_op = number_local(cutoff)
    mean_n = np.vdot(vec, n_op @ vec).real
    assert_allclose(mean_n, abs(alpha) ** 2, rtol=1e-10)
    a = annihilation_local(cutoff)
    assert_allclose(np.vdot(vec, a @ vec), alpha, rtol=1e-10)


def test_product_state_assembly():
    space = build_space(SpaceSpec(1, (ModeSpec(2),)))
    psi = product_state(space, [site_local_state("excited"), fock_local(1, 2)])
    expected_index = space.occupation_to_index((1, 1))
    assert_allclose(abs(psi[expected_index]), 1.0)
    assert_allclose(np.linalg.norm(psi), 1.0)


def test_site_local_state_angles():
    vec = site_local_state("angles", theta=np.pi / 2, phi=np.pi / 4)
    assert_allclose(abs(vec[0]), abs(vec[1]), atol=1e-15)
    assert_allclose(np.angle(vec[1]), np.pi / 4)
