import math

import numpy as np
import pytest

from qmask import classical as cl
from qmask.errors import (
    BadFactorizationError,
    ExponentNotInvertibleError,
    InvalidDivisorError,
    SingularMatrixError,
    UnsupportedInputError,
)
from qmask.groups import group_vector_gf, group_zp_star, hom_identity, hom_matrix, hom_power
from qmask.protocols import (
    InputSpec,
    divmod_damage_bound,
    masked_divmod,
    masked_hom_inverse,
    masked_kth_root,
    masked_mod_inverse,
    masked_mod_inverse_composite,
    masked_mod_inverse_zero_safe,
    masked_sparse_solve,
    masked_sqrt,
)

S2 = 1 / math.sqrt(2)
A5 = cl.SparseMatrixGF.from_dense([[1, 1], [0, 1]], 5)


def assert_final(result, expected: dict, tol=1e-12):
    got = result.final_state.amplitudes
    assert set(got) == set(expected), f"support {sorted(got)} != {sorted(expected)}"
    for k, v in expected.items():
        assert abs(got[k] - v) < tol
    assert result.fidelity >= 1 - 1e-9


def vec(v, p=5):
    return cl.encode_vector(v, p)


# -- modular inversion ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_inverse_basis(seed):
    assert_final(masked_mod_inverse(InputSpec.basis(3, 7), 7, seed), {(3, 5): 1.0})


def test_inverse_superposition():
    res = masked_mod_inverse(InputSpec.uniform([3, 5], 7), 7, seed=2)
    assert_final(res, {(3, 5): S2, (5, 3): S2})


def test_inverse_marginal_uniform():
    rec = masked_mod_inverse(InputSpec.basis(3, 7), 7).measurement
    assert rec.outcomes.tolist() == list(range(1, 7))
    assert np.max(np.abs(rec.probabilities - 1 / 6)) < 1e-12


def test_inverse_registers_and_transcript():
    res = masked_mod_inverse(InputSpec.uniform([2, 9], 11), 11, seed=4)
    assert [r.label for r in res.final_state.registers] == ["a", "a_inv"]
    assert len(res.transcript) == 1
    assert res.byproducts["t"] == res.measurement.outcome


def test_inverse_rejects_zero():
    with pytest.raises(UnsupportedInputError):
        masked_mod_inverse(InputSpec.basis(0, 7), 7)


def test_zero_safe_examples():
    assert_final(masked_mod_inverse_zero_safe(InputSpec.basis(0, 7), 7), {(0, 0): 1.0})
    assert_final(masked_mod_inverse_zero_safe(InputSpec.uniform([0, 3], 7), 7, seed=3), {(0, 0): S2, (3, 5): S2})
    assert_final(masked_mod_inverse_zero_safe(InputSpec.basis(0, 7), 7, zero_image=6), {(0, 6): 1.0})


def test_zero_safe_marginal_does_not_leak_zero():
    m0 = masked_mod_inverse_zero_safe(InputSpec.basis(0, 7), 7).measurement
    m3 = masked_mod_inverse_zero_safe(InputSpec.basis(3, 7), 7).measurement
    assert np.array_equal(m0.outcomes, m3.outcomes)
    assert np.max(np.abs(m0.probabilities - m3.probabilities)) < 1e-12


def _composite_oracle(amps, n, t):
    """Projection of sum_a amp |a>|r> over units r onto a*r == t, by enumeration."""
    units = [r for r in range(1, n) if math.gcd(r, n) == 1]
    branch = {(a, r): amp for a, amp in amps.items() for r in units if a * r % n == t}
    norm = math.sqrt(sum(abs(v) ** 2 for v in branch.values()))
    return {k: v / norm for k, v in branch.items()}


@pytest.mark.parametrize("seed", range(8))
def test_composite_projection(seed):
    res = masked_mod_inverse_composite(InputSpec.uniform([2, 3], 15), 15, [3, 5], seed)
    t = res.measurement.outcome
    if math.gcd(t, 15) == 1:
        assert res.tag == "unit"
        assert_final(res, {(2, 8): 1.0})
    else:
        assert res.tag == "non-unit"
        assert_final(res, _composite_oracle({2: S2, 3: S2}, 15, t))


def test_composite_unit_input_always_unit():
    for seed in range(6):
        res = masked_mod_inverse_composite(InputSpec.basis(4, 15), 15, [3, 5], seed)
        assert res.tag == "unit" and math.gcd(res.measurement.outcome, 15) == 1
        assert_final(res, {(4, 4): 1.0})


def test_composite_non_unit_input():
    for seed in range(6):
        res = masked_mod_inverse_composite(InputSpec.basis(3, 15), 15, [3, 5], seed)
        assert res.tag == "non-unit" and math.gcd(res.measurement.outcome, 15) == 3


def test_composite_bad_factorization():
    with pytest.raises(BadFactorizationError):
        masked_mod_inverse_composite(InputSpec.basis(2, 15), 15, [3, 4])


# -- roots ----------------------------------------------------------------------


def test_sqrt_keep_example():
    # 4^-1 = 10 mod 13, square roots of 10 are {6, 7}
    assert_final(masked_sqrt(InputSpec.basis(4, 13), 13, "keep"), {(4, 6): 1.0})


def test_sqrt_replace_examples():
    assert_final(masked_sqrt(InputSpec.basis(4, 13), 13, "replace"), {(2,): 1.0})
    assert_final(masked_sqrt(InputSpec.uniform([4, 9], 13), 13, "replace", seed=5), {(2,): S2, (3,): S2})


def test_sqrt_rejects_non_residue():
    with pytest.raises(UnsupportedInputError):
        masked_sqrt(InputSpec.basis(5, 13), 13)


@pytest.mark.parametrize("p", [13, 41])
def test_sqrt_marginal_input_independent(p):
    residues = [a for a in range(1, p) if pow(a, (p - 1) // 2, p) == 1]
    m1 = masked_sqrt(InputSpec.basis(residues[0], p), p).measurement
    m2 = masked_sqrt(InputSpec.uniform(residues[-3:], p), p).measurement
    assert m1.outcomes.tolist() == residues
    assert np.max(np.abs(m1.probabilities - m2.probabilities)) < 1e-12


def test_kth_root_examples():
    assert_final(masked_kth_root(InputSpec.basis(8, 11), 11, 3), {(8, 6): 1.0})
    assert_final(masked_kth_root(InputSpec.basis(1, 13), 13, 5), {(1, 1): 1.0})
    assert_final(masked_kth_root(InputSpec.basis(8, 11), 11, 3, mode="replace"), {(2,): 1.0})


def test_kth_root_k1_is_inversion():
    for a in range(1, 11):
        kth = masked_kth_root(InputSpec.basis(a, 11), 11, 1, seed=a).final_state.amplitudes
        inv = masked_mod_inverse(InputSpec.basis(a, 11), 11, seed=a).final_state.amplitudes
        assert kth == inv


def test_kth_root_rejects_bad_exponent():
    with pytest.raises(ExponentNotInvertibleError):
        masked_kth_root(InputSpec.basis(2, 7), 7, 3)


# -- sparse solve and homomorphisms ----------------------------------------------


def test_sparse_solve_example():
    res = masked_sparse_solve(InputSpec.basis(vec((2, 3)), 25), A5)
    assert_final(res, {(vec((4, 3)),): 1.0})


def test_sparse_solve_identity():
    I = cl.SparseMatrixGF.from_dense(np.eye(2, dtype=int), 5)
    spec = InputSpec.uniform([vec((1, 2)), vec((4, 0))], 25)
    assert_final(masked_sparse_solve(spec, I, seed=1), {(vec((1, 2)),): S2, (vec((4, 0)),): S2})


def test_sparse_solve_marginal_uniform():
    rec = masked_sparse_solve(InputSpec.basis(vec((2, 3)), 25), A5).measurement
    assert len(rec.outcomes) == 25 and np.max(np.abs(rec.probabilities - 1 / 25)) < 1e-12


def test_sparse_solve_singular():
    with pytest.raises(SingularMatrixError):
        masked_sparse_solve(InputSpec.basis(0, 25), cl.SparseMatrixGF.from_dense([[1, 1], [2, 2]], 5))


def test_hom_inverse_examples():
    assert_final(masked_hom_inverse(InputSpec.basis(8, 11), hom_power(group_zp_star(11), 3)), {(8, 6): 1.0})
    assert_final(masked_hom_inverse(InputSpec.basis(3, 7), hom_identity(group_zp_star(7))), {(3, 5): 1.0})
    res = masked_hom_inverse(InputSpec.basis(vec((2, 3)), 25), hom_matrix(group_vector_gf(5, 2), A5))
    assert_final(res, {(vec((2, 3)), vec((1, 2))): 1.0})


def test_hom_inverse_marginal_uniform_over_group():
    rec = masked_hom_inverse(InputSpec.basis(8, 11), hom_power(group_zp_star(11), 3)).measurement
    assert rec.outcomes.tolist() == list(range(1, 11))
    assert np.max(np.abs(rec.probabilities - 0.1)) < 1e-12


# -- division --------------------------------------------------------------------


def test_divmod_examples():
    assert_final(masked_divmod(InputSpec.basis(23, 32), 5, 8), {(4, 3): 1.0})
    assert_final(masked_divmod(InputSpec.basis(0, 16), 5, 6), {(0, 0): 1.0})


def test_divmod_basis_inputs_never_damaged():
    for a in range(16):
        res = masked_divmod(InputSpec.basis(a, 16), 5, 6, seed=a)
        assert res.success and res.damage_probability == 0.0


def test_divmod_damage_for_two_branch_input():
    # oracle: c = a + r, r uniform on [0, 320); success needs 12 <= c <= 3 + 319
    R = 2**6 * 5
    outside = sum(1 for a in (3, 12) for r in range(R) if not 12 <= a + r <= 3 + R - 1)
    res = masked_divmod(InputSpec.uniform([3, 12], 16), 5, 6)
    assert res.damage_probability == pytest.approx(outside / (2 * R), abs=1e-15)
    assert outside / (2 * R) == pytest.approx(0.028125)


def test_divmod_uniform_input_damage():
    R = 2**6 * 5
    outside = sum(1 for a in range(16) for r in range(R) if not 15 <= a + r <= R - 1)
    res = masked_divmod(InputSpec.uniform(range(16), 16), 5, 6)
    assert res.damage_probability == pytest.approx(outside / (16 * R), abs=1e-15)
    assert res.damage_probability <= 2 * divmod_damage_bound(4, 5, 6)


def test_divmod_rejects_bad_divisor():
    with pytest.raises(InvalidDivisorError):
        masked_divmod(InputSpec.basis(3, 16), 1, 6)


# -- shared invariants -------------------------------------------------------------


def _runs():
    yield masked_mod_inverse(InputSpec.uniform([2, 5, 6], 7), 7, seed=1), "a"
    yield masked_mod_inverse_zero_safe(InputSpec.uniform([0, 4], 7), 7, seed=1), "a"
    yield masked_sqrt(InputSpec.uniform([1, 3, 9], 13), 13, "keep", seed=1), "a"
    yield masked_kth_root(InputSpec.uniform([2, 7, 8], 11), 11, 3, seed=1), "a"
    yield masked_hom_inverse(InputSpec.uniform([2, 7], 11), hom_power(group_zp_star(11), 3), seed=1), "a"


@pytest.mark.parametrize("run", list(_runs()), ids=lambda r: r[0].protocol)
def test_input_register_preserved(run):
    res, label = run
    reg = res.final_state.register(label)
    inputs = {k[0]: v for k, v in res.final_state.amplitudes.items()}
    marg = res.final_state.marginal(reg)
    assert set(marg) == set(inputs)
    # the input was uniform with positive amplitudes
    assert all(abs(p - 1 / len(marg)) < 1e-12 for p in marg.values())
    assert all(abs(v.imag) < 1e-15 and v.real > 0 for v in res.final_state.amplitudes.values())
