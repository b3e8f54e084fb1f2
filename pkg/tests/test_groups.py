import numpy as np
import pytest

from qmask import classical as cl
from qmask.errors import (
    BadFactorizationError,
    DomainTooLargeError,
    ExponentNotInvertibleError,
    GroupLawError,
    HomomorphismError,
    NotPrimeError,
)
from qmask.groups import (
    FiniteGroup,
    Homomorphism,
    group_units_mod,
    group_vector_gf,
    group_zp_star,
    hom_identity,
    hom_matrix,
    hom_power,
    powmod_array,
    validate_group,
    validate_homomorphism,
)


def test_zp_star_examples():
    G = group_zp_star(7)
    assert G.mul(3, 5) == 1
    assert G.inv(3) == 5
    assert group_zp_star(11).order == 10


def test_zp_star_rejects_composite():
    with pytest.raises(NotPrimeError):
        group_zp_star(15)


def test_units_mod_examples():
    assert group_units_mod(15, [3, 5]).order == 8
    assert group_units_mod(7, [7]).support == group_zp_star(7).support
    with pytest.raises(BadFactorizationError):
        group_units_mod(15, [3, 4])


def test_vector_gf_examples():
    V = group_vector_gf(5, 2)
    enc = lambda v: cl.encode_vector(v, 5)  # noqa: E731
    assert V.mul(enc((2, 3)), enc((4, 4))) == enc((1, 2))
    assert V.identity == enc((0, 0))
    assert V.inv(enc((2, 3))) == enc((3, 2))


def test_vector_gf_too_large():
    with pytest.raises(DomainTooLargeError):
        group_vector_gf(2, 21)


@pytest.mark.parametrize(
    "G",
    [group_zp_star(3), group_zp_star(101), group_units_mod(21, [3, 7]), group_vector_gf(3, 3), group_vector_gf(2, 6)],
    ids=lambda G: G.name,
)
def test_group_laws_by_brute_force(G):
    # independent oracle: Python-level tables, no vectorized ops
    E = G.support
    table = {(g, h): G.mul(g, h) for g in E for h in E}
    assert all(v in set(E) for v in table.values())
    for g in E:
        for h in E:
            for k in E[:12]:
                assert table[(table[(g, h)], k)] == table[(g, table[(h, k)])]
        assert table[(g, G.identity)] == g and table[(g, G.inv(g))] == G.identity


def test_validate_group_catches_bad_law():
    bad = FiniteGroup(
        "bad", 5, np.arange(5), 0, lambda x, y: (np.asarray(x) - y) % 5, lambda x: np.asarray(x) % 5
    )
    with pytest.raises(GroupLawError):
        validate_group(bad)


def test_hom_power_examples():
    h = hom_power(group_zp_star(11), 3)
    assert h(2) == 8 and h.classical_inverse(8) == 2
    one = hom_power(group_zp_star(13), 1)
    assert all(one(g) == g for g in range(1, 13))
    with pytest.raises(ExponentNotInvertibleError):
        hom_power(group_zp_star(7), 3)


def test_hom_identity():
    h = hom_identity(group_zp_star(31))
    assert [h(g) for g in range(1, 31)] == list(range(1, 31))


def test_hom_matrix_inverse_on_full_domain():
    rng = np.random.default_rng(0)
    for p, n in ((5, 2), (3, 3), (11, 2)):
        A = cl.random_sparse_invertible(n, p, rng)
        h = hom_matrix(group_vector_gf(p, n), A)
        for g in range(p**n):
            assert h.classical_inverse(h(g)) == g


def test_hom_matrix_rejects_singular():
    V = group_vector_gf(5, 2)
    with pytest.raises((HomomorphismError, Exception)):
        hom_matrix(V, cl.SparseMatrixGF.from_dense([[1, 1], [2, 2]], 5))


def test_validate_homomorphism_catches_non_hom():
    G = group_zp_star(11)
    fake = Homomorphism(G, lambda x: (np.asarray(x) % 10) + 1, lambda h: h - 1, "shift")
    with pytest.raises(HomomorphismError):
        validate_homomorphism(fake)


def test_powmod_array_matches_pow():
    x = np.arange(0, 1000)
    for e in (0, 1, 3, 17, 1000003):
        assert powmod_array(x, e, 1009).tolist() == [pow(int(v), e, 1009) for v in x]
