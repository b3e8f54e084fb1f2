import json
import math
from importlib import resources

import pytest

from qmask import cost

RAW = json.loads(resources.files("qmask").joinpath("cost_defaults.json").read_text())
C = {k: v["value"] for k, v in RAW["constants"].items()}


def test_every_constant_has_provenance():
    for name, entry in RAW["constants"].items():
        assert entry["provenance"], name
        assert cost.DEFAULTS.provenance[name] == entry["provenance"]
    assert RAW["citation"]


def test_inverse_matches_hand_formula():
    for n in (8, 64, 256, 2048):
        masked = C["mask_prep"] * n * n / math.log2(n) + C["qq_mult"] * n * n + 2 * C["windowed_mult"] * n * n / math.log2(n)
        c = cost.cost_masked_inverse(n)
        assert c.total == pytest.approx(masked)
        assert c.baseline == pytest.approx(C["euclid_inverse"] * n * n)


def test_inverse_ratio_at_256_in_interval():
    lo, hi = RAW["inverse_ratio_interval"]
    assert lo <= cost.cost_masked_inverse(256).ratio <= hi


def test_inverse_slope_approaches_two():
    ns = [2**e for e in range(8, 21)]
    totals = [cost.cost_masked_inverse(n).total for n in ns]
    slopes = [math.log2(b / a) for a, b in zip(totals, totals[1:])]
    assert all(b >= a for a, b in zip(slopes, slopes[1:]))
    assert 1.9 < slopes[-1] < 2.0


def test_sqrt_itemization():
    c = cost.cost_masked_sqrt(64)
    assert c.counts == {"modular_square": 2, "classical_quantum_multiply": 2, "comparison": 1, "modular_inversion": 1}
    keep = cost.cost_masked_sqrt(64, clear_input=False)
    assert keep.counts["modular_square"] == 1 and keep.counts["masked_inversion"] == 1
    assert keep.total < c.total
    assert c.baseline == pytest.approx(C["tonelli_shanks"] * 64**3)


@pytest.mark.parametrize("k,expected", [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (7, 4), (15, 6), (16, 4)])
def test_power_chain_length(k, expected):
    # oracle: count squarings and multiplies of left-to-right binary exponentiation
    bits = bin(k)[3:]
    assert len(bits) + bits.count("1") == expected
    assert cost.power_chain_length(k) == expected


def test_kth_root_grows_with_k_and_pebbling():
    a = cost.cost_masked_kth_root(64, 3).total
    b = cost.cost_masked_kth_root(64, 65537).total
    deeper = cost.cost_masked_kth_root(64, 3, cost.DEFAULTS.replace(pebbling_depth=2)).total
    assert a < b and a < deeper


def test_rines_chuang_addition_count():
    adds = cost.rines_chuang_additions(16, 5)
    assert len(adds) == 2 * (16 - 2)


def test_divmod_ratio_monotone():
    ratios = [cost.cost_masked_divmod(n, 2 * n, 5).ratio for n in [2**e for e in range(4, 13)]]
    # ratio is baseline/masked; masked/baseline must shrink
    inverse = [1 / r for r in ratios]
    assert all(b < a for a, b in zip(inverse, inverse[1:]))


def test_divmod_requires_wide_mask():
    with pytest.raises(ValueError):
        cost.cost_masked_divmod(16, 8, 5)


def test_divmod_crossover():
    n = cost.divmod_crossover(2, 5)
    c = cost.cost_masked_divmod(n, 2 * n, 5)
    prev = cost.cost_masked_divmod(n - 1, 2 * (n - 1), 5)
    assert c.total < c.baseline and prev.total >= prev.baseline


def test_sparse_savings():
    unit = cost.DEFAULTS.replace(sparse_mult=1, dense_mult=1)
    for N, M, k in ((100, 100, 3), (100, 100, 100), (7, 40, 0), (1, 1, 1)):
        c = cost.cost_masked_sparse(N, M, k, unit)
        assert c.extras["savings"] == N * (M - k)
    assert cost.cost_masked_sparse(100, 100, 100).extras["savings"] == 0


def test_override_changes_ratio():
    cheap = cost.DEFAULTS.replace(euclid_inverse=1.0)
    assert cost.cost_masked_inverse(256, cheap).ratio < cost.cost_masked_inverse(256).ratio
    with pytest.raises(KeyError):
        cost.DEFAULTS.replace(nonsense=1.0)


def test_table_round_trip():
    table = cost.Table.from_breakdowns("inv", [cost.cost_masked_inverse(n) for n in (64, 128, 256)])
    assert cost.Table.from_json(table.to_json()) == table
    csv_lines = table.to_csv().splitlines()
    assert csv_lines[0].split(",") == table.columns and len(csv_lines) == 4
    assert "ratio" in table.to_text()
