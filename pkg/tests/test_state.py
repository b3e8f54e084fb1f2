import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmask.errors import (
    DiscardEntangledError,
    InvalidModulusError,
    InvalidSupportError,
    LayoutMismatchError,
    NonReversibleMapError,
    OverlappingRegisterError,
    RegisterNotFreshError,
)
from qmask.state import (
    Bijection,
    Combine,
    MeasurementRecord,
    OutOfPlace,
    SparseState,
    fidelity,
    new_state,
)

S2 = 1 / math.sqrt(2)


def basis(moduli, values):
    return SparseState.from_amplitudes(moduli, {tuple(values): 1.0})


# -- construction -------------------------------------------------------------


def test_new_state_is_vacuous():
    s = new_state()
    assert s.amplitudes == {(): 1.0}
    assert s.norm() == pytest.approx(1.0)


def test_alloc_extends_with_zero():
    s = new_state()
    s.alloc_register(7, "a")
    assert s.amplitudes == {(0,): 1.0}


def test_alloc_ancilla_on_superposition():
    s = SparseState.from_amplitudes([16], {(3,): S2, (5,): S2})
    s.alloc_register(2, "anc")
    assert s.amplitudes == pytest.approx({(3, 0): S2, (5, 0): S2})


def test_alloc_rejects_modulus_one():
    with pytest.raises(InvalidModulusError):
        new_state().alloc_register(1)


def test_register_ids_unique():
    s = new_state()
    ids = {s.alloc_register(3).id for _ in range(5)}
    assert len(ids) == 5


def test_prepare_uniform_units_mod_7():
    s = new_state()
    r = s.alloc_register(7, "mask")
    s.prepare_uniform(r, range(1, 7))
    assert s.amplitudes == pytest.approx({(v,): 1 / math.sqrt(6) for v in range(1, 7)})


def test_prepare_uniform_division_mask_layout():
    s = new_state()
    hi = s.alloc_register(2**6, "r1")
    lo = s.alloc_register(5, "r2")
    s.prepare_uniform(hi, range(2**6))
    s.prepare_uniform(lo, range(5))
    assert len(s) == 2**6 * 5
    assert s.marginal(hi) == pytest.approx({v: 1 / 64 for v in range(64)})


def test_prepare_uniform_singleton():
    s = new_state()
    r = s.alloc_register(7)
    s.prepare_uniform(r, {3})
    assert s.amplitudes == {(3,): 1.0}


def test_prepare_uniform_rejects_used_register():
    s = new_state()
    r = s.alloc_register(7)
    s.prepare_uniform(r, {3})
    with pytest.raises(RegisterNotFreshError):
        s.prepare_uniform(r, {1, 2})


def test_prepare_uniform_rejects_bad_support():
    s = new_state()
    r = s.alloc_register(7)
    with pytest.raises(InvalidSupportError):
        s.prepare_uniform(r, [])
    with pytest.raises(InvalidSupportError):
        s.prepare_uniform(r, [7])


# -- reversible maps ----------------------------------------------------------


def test_negation_mod_7():
    s = basis([7], [3])
    s.apply_bijection(s.registers, lambda x: (-x) % 7)
    assert s.amplitudes == {(4,): 1.0}


def test_multiply_by_constant():
    s = basis([7], [5])
    s.apply_bijection(s.registers, lambda x: 3 * x % 7)
    assert s.amplitudes == {(1,): 1.0}


def test_non_injective_map_rejected():
    s = basis([7], [2])
    with pytest.raises(NonReversibleMapError):
        s.apply_bijection(s.registers, lambda x: 0 if x in (2, 3) else x)


def test_non_injective_on_touched_values_above_validate_limit():
    s = SparseState.from_amplitudes([7], {(2,): S2, (3,): S2}, validate_limit=1)
    with pytest.raises(NonReversibleMapError):
        s.apply_bijection(s.registers, lambda x: 0 if x in (2, 3) else x)


def test_out_of_place_product():
    s = basis([7, 7, 7], [3, 4, 0])
    a, r, t = s.registers
    s.apply_out_of_place([a, r], t, lambda x, y: x * y % 7)
    assert s.amplitudes == {(3, 4, 5): 1.0}


def test_square_then_uncompute():
    s = basis([13, 13], [5, 0])
    r, d = s.registers
    op = OutOfPlace((r,), d, lambda x: x * x % 13)
    s.apply(op)
    assert s.amplitudes == {(5, 12): 1.0}
    s.apply(op.inverse())
    assert s.amplitudes == {(5, 0): 1.0}


def test_chained_square_and_product():
    s = basis([13, 13, 13], [4, 6, 0])
    a, r, t = s.registers
    s.apply_out_of_place([a, r], t, lambda x, y: x * y * y % 13)
    assert s.amplitudes == {(4, 6, 1): 1.0}


def test_multiplicative_combine_rejects_non_unit():
    s = basis([7, 6], [2, 1])
    src, dst = s.registers
    with pytest.raises(NonReversibleMapError):
        s.apply_out_of_place([src], dst, lambda x: x, Combine.MUL)


def test_combine_inverses():
    dst, val = np.array([1, 2, 3]), np.array([4, 5, 6])
    for c in Combine:
        assert np.array_equal(c.inverse(c(dst, val, 7), val, 7), dst)


def test_controlled_negation():
    s = basis([2, 7], [1, 2])
    c, x = s.registers
    s.apply_controlled(c, 1, Bijection((x,), lambda v: (-v) % 7))
    assert s.amplitudes == {(1, 5): 1.0}


def test_controlled_not_satisfied():
    s = basis([2, 7], [0, 2])
    c, x = s.registers
    s.apply_controlled(c, 1, Bijection((x,), lambda v: (-v) % 7))
    assert s.amplitudes == {(0, 2): 1.0}


def test_controlled_overlap_rejected():
    s = basis([2, 7], [1, 2])
    c, x = s.registers
    with pytest.raises(OverlappingRegisterError):
        s.apply_controlled(c, 1, Bijection((c, x), lambda u, v: (u, v)))


def test_zero_flag_controlled_copy():
    s = SparseState.from_amplitudes([7, 2, 7, 7], {(0, 1, 3, 0): 1.0})
    a, flag, r, t = s.registers
    s.apply_controlled(flag, 1, OutOfPlace((r,), t, lambda v: v))
    assert s.amplitudes == {(0, 1, 3, 3): 1.0}


# -- marginals and measurement ------------------------------------------------


def test_marginal_plus_state():
    s = SparseState.from_amplitudes([2], {(0,): S2, (1,): S2})
    assert s.marginal(s.registers[0]) == pytest.approx({0: 0.5, 1: 0.5})


@pytest.mark.parametrize("a", range(1, 7))
def test_product_register_uniform(a):
    s = basis([7], [a])
    r = s.alloc_register(7)
    s.prepare_uniform(r, range(1, 7))
    t = s.alloc_register(7)
    s.apply_out_of_place([s.registers[0], r], t, lambda x, y: x * y % 7)
    marg = s.marginal(t)
    assert sorted(marg) == list(range(1, 7))
    assert max(abs(p - 1 / 6) for p in marg.values()) < 1e-12


def test_division_marginal_damage_mass():
    # oracle: exact enumeration with Fractions over a in {3, 12}, r uniform on [0, 320)
    R = 2**6 * 5
    dist: dict[int, Fraction] = {}
    for a in (3, 12):
        for r in range(R):
            dist[a + r] = dist.get(a + r, 0) + Fraction(1, 2 * R)
    below = sum(p for c, p in dist.items() if c < 12)
    assert below == Fraction(9, 640)

    s = SparseState.from_amplitudes([2**10], {(3,): S2, (12,): S2})
    r = s.alloc_register(R)
    s.prepare_uniform(r, range(R))
    c = s.alloc_register(2**10)
    s.apply_out_of_place([s.registers[0], r], c, lambda x, y: x + y, vectorized=True)
    marg = s.marginal(c)
    assert sum(p for v, p in marg.items() if v < 12) == pytest.approx(float(below), abs=1e-15)
    assert all(marg[v] == pytest.approx(float(p), abs=1e-15) for v, p in dist.items())


def test_measure_deterministic():
    s = basis([7], [4])
    rec = s.measure(s.registers[0], 0)
    assert rec.outcome == 4 and s.amplitudes == {(4,): 1.0}
    assert rec.marginal == {4: 1.0}


def _masked_product(amps):
    s = SparseState.from_amplitudes([7], amps)
    r = s.alloc_register(7)
    s.prepare_uniform(r, range(1, 7))
    t = s.alloc_register(7)
    s.apply_out_of_place([s.registers[0], r], t, lambda x, y: x * y % 7)
    return s, t


@pytest.mark.parametrize("seed", range(12))
def test_measure_projects_basis_input(seed):
    s, t = _masked_product({(3,): 1.0})
    out = s.measure(t, seed).outcome
    assert s.amplitudes == pytest.approx({(3, 5 * out % 7, out): 1.0})


@pytest.mark.parametrize("seed", range(12))
def test_measure_projects_superposed_input(seed):
    s, t = _masked_product({(3,): S2, (5,): S2})
    out = s.measure(t, seed).outcome
    # 3^-1 = 5 and 5^-1 = 3 mod 7
    assert s.amplitudes == pytest.approx({(3, 5 * out % 7, out): S2, (5, 3 * out % 7, out): S2})


def test_measure_seed_reproducible():
    s, t = _masked_product({(3,): S2, (5,): S2})
    outs = [s.copy().measure(t, 99).outcome for _ in range(3)]
    assert len(set(outs)) == 1


def test_measurement_frequencies_match_marginal():
    s, t = _masked_product({(3,): 1.0})
    trials = 6000
    counts = np.zeros(7)
    rng = np.random.default_rng(0)
    for _ in range(trials):
        counts[s.copy().measure(t, rng).outcome] += 1
    sigma = math.sqrt(trials * (1 / 6) * (5 / 6))
    assert counts[0] == 0
    assert np.all(np.abs(counts[1:] - trials / 6) < 5 * sigma)


def test_measurement_record_round_trip():
    s, t = _masked_product({(3,): 1.0})
    rec = s.measure(t, 5, seed=5)
    back = MeasurementRecord.from_dict(rec.to_dict())
    assert back.outcome == rec.outcome and back.seed == 5
    assert back.marginal == rec.marginal


# -- discard ------------------------------------------------------------------


def test_discard_plus_ancilla():
    s = SparseState.from_amplitudes([7, 2], {(3, 0): 0.6 * S2, (3, 1): 0.6 * S2, (5, 0): 0.8 * S2, (5, 1): 0.8 * S2})
    s.discard(s.registers[1])
    assert s.amplitudes == pytest.approx({(3,): 0.6, (5,): 0.8})


def test_discard_zero_register():
    s = SparseState.from_amplitudes([7, 3], {(3, 0): 0.6, (5, 0): 0.8})
    s.discard(s.registers[1])
    assert s.amplitudes == pytest.approx({(3,): 0.6, (5,): 0.8})


def test_discard_bell_pair_rejected():
    s = SparseState.from_amplitudes([2, 2], {(0, 0): S2, (1, 1): S2})
    with pytest.raises(DiscardEntangledError) as info:
        s.discard(s.registers[0])
    assert info.value.residual == pytest.approx(S2, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(2, 6))
def test_discard_product_states(seed, m1, m2):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=m1) + 1j * rng.normal(size=m1)
    v = rng.normal(size=m2) + 1j * rng.normal(size=m2)
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    s = SparseState.from_amplitudes([m1, m2], {(i, j): u[i] * v[j] for i in range(m1) for j in range(m2)})
    assert s.factorization_residual(s.registers[0]) < 1e-12
    s.discard(s.registers[0])
    got = np.array([s.amplitudes.get((j,), 0) for j in range(m2)])
    assert abs(np.vdot(v, got)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_discard_entangled_states(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    M /= np.linalg.norm(M)
    s = SparseState.from_amplitudes([3, 3], {(i, j): M[i, j] for i in range(3) for j in range(3)})
    sv = np.linalg.svd(M, compute_uv=False)
    expected = math.sqrt(max(0.0, 1 - sv[0] ** 2))
    assert s.factorization_residual(s.registers[0]) == pytest.approx(expected, abs=1e-9)
    if expected >= 1e-9:
        with pytest.raises(DiscardEntangledError):
            s.discard(s.registers[0])


# -- fidelity and invariants --------------------------------------------------


def test_fidelity_examples():
    plus = SparseState.from_amplitudes([2], {(0,): S2, (1,): S2})
    zero = basis([2], [0])
    one = basis([2], [1])
    assert fidelity(plus, plus) == pytest.approx(1.0)
    assert fidelity(zero, one) == 0.0
    assert fidelity(plus, zero) == pytest.approx(0.5)


def test_fidelity_layout_mismatch():
    with pytest.raises(LayoutMismatchError):
        fidelity(basis([2], [0]), basis([3], [0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(2, 7), min_size=2, max_size=3))
def test_bijection_round_trip_is_exact(seed, moduli):
    rng = np.random.default_rng(seed)
    total = math.prod(moduli)
    size = int(rng.integers(1, total + 1))
    codes = rng.choice(total, size=size, replace=False)
    amps = rng.normal(size=size) + 1j * rng.normal(size=size)
    amps /= np.linalg.norm(amps)
    keys = [tuple(int(x) for x in np.unravel_index(c, moduli)) for c in codes]
    s = SparseState.from_amplitudes(moduli, dict(zip(keys, amps)))
    before = s.amplitudes
    m0, m1 = moduli[0], moduli[1]
    perm = rng.permutation(m0 * m1)
    inv = np.argsort(perm)
    regs = s.registers[:2]
    s.apply_bijection(regs, lambda x, y: divmod(int(perm[x * m1 + y]), m1))
    assert abs(s.norm() - 1) < 1e-12
    s.apply_bijection(regs, lambda x, y: divmod(int(inv[x * m1 + y]), m1))
    after = s.amplitudes
    assert after.keys() == before.keys()
    assert max(abs(after[k] - before[k]) for k in before) <= 1e-15


def test_serialization_round_trip():
    s, t = _masked_product({(3,): S2, (5,): S2})
    back = SparseState.from_dict(s.to_dict())
    assert back.amplitudes == s.amplitudes
    assert [(r.modulus, r.label) for r in back.registers] == [(r.modulus, r.label) for r in s.registers]
