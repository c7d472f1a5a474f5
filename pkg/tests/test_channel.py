import numpy as np
import pytest

from qbayes.algebra import (
    AlgebraElement,
    HomSpec,
    MultiMatrixAlgebra,
    apply_hom,
    matrix_units,
    unit,
)
from qbayes.channel import (
    Channel,
    LinearMap,
    ae_deterministic,
    ae_equal,
    compose,
    from_hom,
    from_kraus,
    hs_adjoint,
    identity_channel,
    is_ucp,
    stinespring,
)
from qbayes.errors import NotCP, NotHermitian
from qbayes.generators import (
    inclusion_hom,
    nonsubalgebra_deterministic_instance,
    random_complex,
    random_hom,
    random_kraus_channel,
    random_state,
)
from qbayes.linalg import dagger, kron, partial_trace_left
from qbayes.state import State, in_nullspace, pullback, support


def random_element(rng, alg):
    return AlgebraElement(alg, tuple(random_complex(rng, d, d) for d in alg.block_dims))


def test_identity_channel():
    alg = MultiMatrixAlgebra((2, 3))
    rng = np.random.default_rng(0)
    F = identity_channel(alg)
    A = random_element(rng, alg)
    assert (F.apply(A) - A).norm() < 1e-14
    assert is_ucp(F)


def test_from_hom_matches_apply_hom():
    rng = np.random.default_rng(1)
    h = random_hom(rng, (2, 3), max_mult=2)
    F = from_hom(h)
    for E in matrix_units(h.source):
        assert (F.apply(E) - apply_hom(h, E)).norm() < 1e-13
    assert is_ucp(F)


def test_from_hom_multiplicity_embedding():
    h = inclusion_hom(2, 2)
    F = from_hom(h)
    rng = np.random.default_rng(2)
    B = random_element(rng, h.source)
    np.testing.assert_allclose(
        F.apply(B).blocks[0], kron(np.eye(2), B.blocks[0]), atol=1e-13
    )


def test_compose_identity_and_homs():
    rng = np.random.default_rng(3)
    h = random_hom(rng, (2, 2), max_mult=2)
    F = from_hom(h)
    ident = identity_channel(h.target)
    comp = compose(ident, F)
    assert comp.close_to(F, 1e-12)
    # composite of embeddings carries the product multiplicity matrix
    g = random_hom(rng, tuple(h.target.block_dims), max_mult=1)
    G = from_hom(g)
    both = compose(G, F)
    prod_mult = tuple(
        tuple(int(c) for c in row) for row in (g.matrix @ h.matrix)
    )
    direct = from_hom(HomSpec(h.source, g.target, prod_mult))
    assert both.close_to(direct, 1e-12)


def test_from_kraus_dephasing():
    alg = MultiMatrixAlgebra((2,))
    ops = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    F = from_kraus(alg, alg, ops)
    assert is_ucp(F)
    rng = np.random.default_rng(4)
    B = random_element(rng, alg)
    np.testing.assert_allclose(
        F.apply(B).blocks[0], np.diag(np.diag(B.blocks[0])), atol=1e-14
    )


def test_channel_requires_hermitian_choi():
    alg = MultiMatrixAlgebra((2,))
    T = np.zeros((2, 2, 2, 2), dtype=complex)
    T[0, 0, 1, 1] = 1.0  # not matched by its conjugate entry
    with pytest.raises(NotHermitian):
        Channel(alg, alg, [[T]])


def test_hs_adjoint_pairing_and_involution():
    rng = np.random.default_rng(5)
    source = MultiMatrixAlgebra((2, 2))
    target = MultiMatrixAlgebra((3,))
    F = random_kraus_channel(rng, source, target, 2)
    Fs = hs_adjoint(F)
    for A in matrix_units(target):
        for B in matrix_units(source):
            lhs = sum(
                np.trace(dagger(F.apply(B).blocks[x]) @ A.blocks[x])
                for x in range(target.n_blocks)
            )
            rhs = sum(
                np.trace(dagger(B.blocks[y]) @ Fs.apply(A).blocks[y])
                for y in range(source.n_blocks)
            )
            assert abs(lhs - rhs) < 1e-11
    assert hs_adjoint(Fs).close_to(F, 1e-12)


def test_hs_adjoint_of_embedding_is_partial_trace():
    h = inclusion_hom(2, 3)
    F = from_hom(h)
    Fs = hs_adjoint(F)
    rng = np.random.default_rng(6)
    M = random_complex(rng, 6, 6)
    M = M + dagger(M)
    A = AlgebraElement(h.target, (M,))
    np.testing.assert_allclose(
        Fs.apply(A).blocks[0], partial_trace_left(M, 2, 3), atol=1e-12
    )


def test_hs_adjoint_reverses_composition():
    rng = np.random.default_rng(7)
    B = MultiMatrixAlgebra((2,))
    C = MultiMatrixAlgebra((3,))
    A = MultiMatrixAlgebra((4,))
    G = random_kraus_channel(rng, B, C, 2)
    F = random_kraus_channel(rng, C, A, 2)
    lhs = hs_adjoint(compose(F, G))
    rhs = compose(hs_adjoint(G), hs_adjoint(F))
    assert lhs.close_to(rhs, 1e-12)


def test_hs_adjoint_trace_preserving_iff_unital():
    rng = np.random.default_rng(8)
    F = random_kraus_channel(rng, MultiMatrixAlgebra((2,)), MultiMatrixAlgebra((3,)), 2)
    Fs = hs_adjoint(F)
    A = random_element(rng, MultiMatrixAlgebra((3,)))
    assert abs(Fs.apply(A).trace() - A.trace()) < 1e-11


def test_is_ucp_transpose_witness():
    alg = MultiMatrixAlgebra((2,))

    def transpose_fn(x, y, E):
        return E.T

    lm = LinearMap.from_block_fn(alg, alg, transpose_fn)
    F = Channel(alg, alg, lm.tensors)  # Choi is the swap: Hermitian but not PSD
    verdict = is_ucp(F)
    assert not verdict
    assert not verdict.cp_ok
    assert verdict.unital_ok
    assert verdict.min_choi_eigenvalue < -0.9
    assert verdict.witness_block == (0, 0)


def test_is_ucp_random_kraus():
    rng = np.random.default_rng(9)
    F = random_kraus_channel(rng, MultiMatrixAlgebra((2, 2)), MultiMatrixAlgebra((3,)), 3)
    assert is_ucp(F)


def test_ae_equal_exact_and_faithful():
    rng = np.random.default_rng(10)
    alg = MultiMatrixAlgebra((2,))
    F = random_kraus_channel(rng, alg, alg, 2)
    G = random_kraus_channel(rng, alg, alg, 2)
    omega = random_state(rng, alg)
    assert ae_equal(F, F, omega)
    assert not ae_equal(F, G, omega)


def test_ae_equal_off_support_perturbation():
    alg = MultiMatrixAlgebra((2,))
    omega = State(alg, (1.0,), (np.diag([1.0, 0.0]),))
    ident = identity_channel(alg)

    def perturbed(x, y, E):
        return E + 0.5 * np.trace(E) * np.diag([0.0, 1.0])

    lm = LinearMap.from_block_fn(alg, alg, perturbed)
    G = Channel(alg, alg, lm.tensors)
    assert not G.close_to(ident, 1e-8)
    assert ae_equal(ident, G, omega)
    faithful = State(alg, (1.0,), (np.eye(2) / 2,))
    assert not ae_equal(ident, G, faithful)


def test_ae_deterministic_homs_and_depolarizing():
    rng = np.random.default_rng(11)
    h = random_hom(rng, (2, 2), max_mult=2)
    F = from_hom(h)
    omega = random_state(rng, h.target)
    assert ae_deterministic(F, omega)

    alg = MultiMatrixAlgebra((2,))

    def depolarize(x, y, E):
        return 0.5 * E + 0.5 * np.trace(E) * np.eye(2) / 2

    lm = LinearMap.from_block_fn(alg, alg, depolarize)
    D = Channel(alg, alg, lm.tensors)
    faithful = random_state(rng, alg)
    assert not ae_deterministic(D, faithful)


def test_ae_deterministic_nonsubalgebra_example():
    F, omega = nonsubalgebra_deterministic_instance()
    assert is_ucp(F)
    assert ae_deterministic(F, omega)
    faithful = State(F.target, (1.0,), (np.eye(4) / 4,))
    assert not ae_deterministic(F, faithful)


def test_nullspace_transport():
    rng = np.random.default_rng(12)
    source = MultiMatrixAlgebra((2,))
    target = MultiMatrixAlgebra((4,))
    F = random_kraus_channel(rng, source, target, 2)
    omega = random_state(rng, target, ranks=(2,))
    xi = pullback(omega, F)
    P_xi = support(xi).projection
    perp = unit(source) - P_xi
    for E in matrix_units(source):
        B = E @ perp  # basis of the nullspace of xi
        if B.norm() < 1e-12:
            continue
        assert in_nullspace(xi, B)
        assert in_nullspace(omega, F.apply(B), scale=1.0)


def test_stinespring_hom_and_random():
    rng = np.random.default_rng(13)
    h = inclusion_hom(2, 2)
    data = stinespring(from_hom(h))
    assert data.reconstruction_residual < 1e-10
    fac = data.factors[0]
    V = fac.isometry
    np.testing.assert_allclose(dagger(V) @ V, np.eye(4), atol=1e-10)

    F = random_kraus_channel(rng, MultiMatrixAlgebra((2, 2)), MultiMatrixAlgebra((3,)), 2)
    data = stinespring(F)
    assert data.reconstruction_residual < 1e-9
    for fac in data.factors:
        V = fac.isometry
        m = F.target.block_dims[fac.target_index]
        np.testing.assert_allclose(dagger(V) @ V, np.eye(m), atol=1e-9)


def test_stinespring_dilation_rank_matches_choi():
    rng = np.random.default_rng(14)
    F = random_kraus_channel(rng, MultiMatrixAlgebra((2,)), MultiMatrixAlgebra((2,)), 2)
    C = F.choi_block(0, 0)
    rank = int((np.linalg.eigvalsh((C + dagger(C)) / 2) > 1e-9).sum())
    data = stinespring(F)
    assert len(data.factors[0].kraus[0]) == rank


def test_stinespring_rejects_non_cp():
    alg = MultiMatrixAlgebra((2,))
    lm = LinearMap.from_block_fn(alg, alg, lambda x, y, E: E.T)
    F = Channel(alg, alg, lm.tensors)
    with pytest.raises(NotCP):
        stinespring(F)
