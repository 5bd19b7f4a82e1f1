import math
from fractions import Fraction

import numpy as np
import pytest

from ncagm.errors import InvalidArgumentError, ResourceLimitError
from ncagm.generate import random_family
from ncagm.hermitian import OperatorFamily
from ncagm.partitions import SetPartition, enumerate_partitions, refines_leq
from ncagm.products import (
    average_product,
    embedding_factors,
    falling_factorial,
    full_sum_direct,
    full_sum_embedded,
    p_d_bruteforce,
    p_d_via_mobius,
    restricted_sum,
)
from oracles import elementary_mean, full_sum_oracle, pd_oracle, restricted_oracle


def _fixed(frozen):
    return OperatorFamily(np.array(frozen["fixed_family"], dtype=float))


def test_fixed_family_matches_frozen_pd(frozen):
    fam = _fixed(frozen)
    for d, expected in frozen["fixed_family_pd"].items():
        d = int(d)
        for got in (p_d_bruteforce(fam, d), p_d_via_mobius(fam, d), p_d_via_mobius(fam, d, method="loop")):
            assert np.allclose(got, expected, atol=1e-12)


def test_fixed_family_full_sums(frozen):
    fam = _fixed(frozen)
    for text, expected in frozen["fixed_family_full_sums"].items():
        sigma = SetPartition.parse(text)
        assert np.allclose(full_sum_direct(fam, sigma), expected, atol=1e-10)
        assert np.allclose(full_sum_embedded(fam, sigma), expected, atol=1e-10)


def test_scalar_values_exact(frozen):
    for case in frozen["scalar_pd"]:
        fam = OperatorFamily([[[v]] for v in case["values"]])
        got = p_d_via_mobius(fam, case["d"])[0, 0]
        assert got.real == pytest.approx(float(Fraction(case["exact"])), rel=1e-12, abs=1e-12)
        assert abs(got.imag) == 0


def test_three_scalars_degree_two():
    fam = OperatorFamily([[[1.0]], [[2.0]], [[3.0]]])
    assert average_product(fam, 2)[0, 0].real == pytest.approx(11 / 3)


def test_three_by_three_worked_identity(rng):
    # [12|3] = (sum x^2)(sum x) = <12|3> + <123> for n = d = 3
    fam = random_family(rng, 3, 2)
    sigma = SetPartition.parse("1,2|3")
    expected = fam.square_sum() @ fam.total()
    assert np.allclose(full_sum_direct(fam, sigma), expected)
    split = restricted_sum(fam, sigma) + restricted_sum(fam, SetPartition.coarsest(3))
    assert np.allclose(split, expected)


def test_commuting_family_gives_elementary_mean(rng):
    vals = rng.standard_normal((7, 3))
    fam = OperatorFamily([np.diag(v) for v in vals])
    for d in range(1, 5):
        got = np.real(np.diagonal(average_product(fam, d)))
        expected = [elementary_mean(list(vals[:, j]), d) for j in range(3)]
        assert np.allclose(got, expected, atol=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_routes_agree_with_itertools_oracle(rng, d):
    fam = random_family(rng, 5, 3)
    oracle = pd_oracle([fam.stack] * d, d)
    assert np.allclose(p_d_bruteforce(fam, d), oracle, atol=1e-12)
    assert np.allclose(p_d_via_mobius(fam, d), oracle, atol=1e-12)


def test_full_and_restricted_sums_agree_with_oracles(rng):
    fam = random_family(rng, 4, 2)
    for sigma in enumerate_partitions(4):
        blocks = [list(b) for b in sigma.blocks]
        full = full_sum_oracle([fam.stack] * 4, blocks)
        assert np.allclose(full_sum_direct(fam, sigma), full, atol=1e-11)
        assert np.allclose(full_sum_direct(fam, sigma, method="loop"), full, atol=1e-11)
        assert np.allclose(full_sum_embedded(fam, sigma), full, atol=1e-11)
        assert np.allclose(restricted_sum(fam, sigma), restricted_oracle([fam.stack] * 4, blocks), atol=1e-11)
        upward = sum(restricted_sum(fam, pi) for pi in enumerate_partitions(4) if refines_leq(sigma, pi))
        assert np.allclose(upward, full, atol=1e-11)


def test_positional_families(rng):
    fams = [random_family(rng, 4, 2) for _ in range(3)]
    stacks = [f.stack for f in fams]
    sigma = SetPartition.parse("1,3|2")
    assert np.allclose(full_sum_direct(fams, sigma), full_sum_oracle(stacks, [[1, 3], [2]]))
    assert np.allclose(full_sum_embedded(fams, sigma), full_sum_oracle(stacks, [[1, 3], [2]]))
    assert np.allclose(p_d_bruteforce(fams, 3), pd_oracle(stacks, 3))
    assert np.allclose(p_d_via_mobius(fams, 3), pd_oracle(stacks, 3))
    with pytest.raises(InvalidArgumentError):
        full_sum_direct(fams[:2], sigma)


def test_restricted_sum_empty_when_too_few_indices(rng):
    fam = random_family(rng, 2, 2)
    assert np.all(restricted_sum(fam, SetPartition.finest(3)) == 0)


def test_embedding_roles():
    roles = [(f.role, f.slot) for f in embedding_factors(SetPartition.parse("1,3,4|2|5,6"))]
    assert roles == [("min", 0), ("singleton", None), ("mid", 0), ("max", 0), ("min", 1), ("max", 1)]


def test_caps_and_argument_checks(rng):
    fam = random_family(rng, 6, 2)
    with pytest.raises(ResourceLimitError):
        p_d_bruteforce(fam, 4, cap=100)
    with pytest.raises(ResourceLimitError):
        full_sum_embedded(fam, SetPartition.parse("1,2|3,4"), dim_cap=10)
    with pytest.raises(ResourceLimitError):
        full_sum_direct(fam, SetPartition.finest(4), method="loop", cap=10)
    with pytest.raises(InvalidArgumentError):
        p_d_via_mobius(fam, 7)
    with pytest.raises(InvalidArgumentError):
        full_sum_direct(fam, SetPartition.finest(2), method="magic")


def test_falling_factorial():
    assert falling_factorial(6, 3) == 120
    assert falling_factorial(5, 0) == 1
    assert falling_factorial(4, 4) == math.factorial(4)


def test_output_is_hermitian(rng):
    fam = random_family(rng, 6, 4)
    for d in (2, 3, 4):
        pd = average_product(fam, d)
        assert np.array_equal(pd, pd.conj().T)
