import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dirichlet_wiener.basis import schauder_eval
from dirichlet_wiener.spectral import (
    CONVERGES,
    DIVERGES,
    INCONCLUSIVE,
    EigenvalueSequence,
    chain_index,
    closability_report,
    eigen_sum_brute_force,
    eigen_sum_closed_form,
    index_chain,
    sandwich_rows,
    spectral_apply,
    tail_envelope,
    worst_case_terms,
)

RULES = [
    EigenvalueSequence.constant(),
    EigenvalueSequence.power(0.5),
    EigenvalueSequence.power(1.0),
    EigenvalueSequence.logarithmic(),
    EigenvalueSequence.geometric(0.7),
]


def dyadics(max_level):
    out = ["1"]
    for level in range(1, max_level + 1):
        out += [f"{n}/{1 << level}" for n in range(1, 1 << level, 2)]
    return out


class TestSequence:
    def test_parse_roundtrip(self):
        for text in ["constant", "power:0.5", "log", "geometric:0.5", "table:1,2,3"]:
            lam = EigenvalueSequence.parse(text)
            assert EigenvalueSequence.parse(lam.describe().split("(")[0]).values(8) == pytest.approx(lam.values(8))

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            EigenvalueSequence.from_table([2.0, 1.0])
        with pytest.raises(ValueError):
            EigenvalueSequence.parse("power:-1")

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            EigenvalueSequence.parse("cubic:3")


class TestSpectralApply:
    def test_examples(self):
        lam = EigenvalueSequence.power(1.0)
        assert spectral_apply([1, 1, 0, 0], lam, "A") == pytest.approx([1, 2, 0, 0])
        e = np.zeros(5)
        e[3] = 1
        assert spectral_apply(e, lam, "J")[3] == pytest.approx(4**-0.5)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
    def test_a_then_j_twice_is_identity(self, h):
        for lam in RULES:
            out = spectral_apply(spectral_apply(spectral_apply(h, lam, "A"), lam, "J"), lam, "J")
            assert np.allclose(out, h, atol=1e-12)


class TestIndexChain:
    def test_examples(self):
        assert index_chain("3/4", 1, 1).indices == (2, 4)
        assert index_chain("1/2", 1, 1).indices == (2,)
        assert index_chain("1/2", 2, 2).indices == (4,)
        assert index_chain("1/4", 2, 2).indices == (4, 6)
        assert index_chain(1, 1, 1).indices == ()

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_support_scan(self, d):
        # every nonzero <S_i(s), e_j> beyond i = j lies on the chain, one per level
        for s in dyadics(5):
            for j in range(1, d + 1):
                chain = index_chain(s, j, d)
                level = len(chain.digits)
                scan = [
                    i for i in range(d + 1, d * (1 << level) + 1)
                    if schauder_eval(i, float(Fraction(s)), d)[j - 1] != 0.0
                ]
                assert tuple(scan) == chain.indices


class TestEigenSum:
    def test_anchor(self):
        lam = EigenvalueSequence.power(1.0)
        assert eigen_sum_closed_form("3/4", 1, lam) == pytest.approx(19 / 16, abs=1e-14)
        assert eigen_sum_brute_force("3/4", 1, lam) == pytest.approx(19 / 16, abs=1e-14)

    @pytest.mark.parametrize("d", [1, 2])
    def test_parseval(self, d):
        lam = EigenvalueSequence.constant()
        for s in dyadics(6):
            for j in range(1, d + 1):
                assert eigen_sum_closed_form(s, j, lam, d) == pytest.approx(float(Fraction(s)), abs=1e-12)

    @given(st.integers(1, 8), st.integers(0, 255), st.integers(1, 3), st.sampled_from(RULES))
    def test_closed_form_matches_brute_force(self, level, num, d, lam):
        s = Fraction(2 * (num % (1 << (level - 1))) + 1, 1 << level)
        for j in range(1, d + 1):
            a = eigen_sum_closed_form(s, j, lam, d)
            b = eigen_sum_brute_force(s, j, lam, d)
            assert abs(a - b) <= 1e-10 * max(1.0, abs(b))


class TestClosability:
    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0])
    def test_power_rule(self, alpha):
        rep = closability_report(EigenvalueSequence.power(alpha), depth=16)
        expected = CONVERGES if alpha < 1 else DIVERGES
        assert rep.verdict == expected
        assert rep.first.symbolic == rep.first.numeric == expected

    def test_examples(self):
        assert closability_report(EigenvalueSequence.constant()).verdict == CONVERGES
        assert closability_report(EigenvalueSequence.power(1.0)).verdict == DIVERGES
        rep = closability_report(EigenvalueSequence.power(0.25))
        assert rep.verdict == CONVERGES and rep.second.verdict == CONVERGES
        rep = closability_report(EigenvalueSequence.power(0.5))
        assert rep.verdict == CONVERGES and rep.second.verdict == DIVERGES

    def test_table_without_tail(self):
        lam = EigenvalueSequence.from_table([1, 2, 3])
        assert closability_report(lam).first.symbolic == INCONCLUSIVE
        tailed = EigenvalueSequence.from_table([1, 2, 3], tail=EigenvalueSequence.power(1.5))
        assert closability_report(tailed).verdict == DIVERGES

    def test_geometric(self):
        assert closability_report(EigenvalueSequence.geometric(0.6)).verdict == CONVERGES
        assert closability_report(EigenvalueSequence.geometric(1.0)).verdict == DIVERGES

    def test_depth_floor(self):
        with pytest.raises(ValueError):
            closability_report(EigenvalueSequence.constant(), depth=4)

    def test_worst_terms_for_linear_rule(self):
        terms = worst_case_terms(EigenvalueSequence.power(1.0), 1, 1, 10)
        assert terms == pytest.approx(np.ones(10))

    @pytest.mark.parametrize("lam", RULES)
    @pytest.mark.parametrize("d", [1, 2])
    def test_sandwich(self, lam, d):
        for j in range(1, d + 1):
            for row in sandwich_rows(lam, j, d, 8):
                assert row["lower_ok"] and row["upper_ok"]

    def test_report_serialises(self):
        import json

        json.dumps(closability_report(EigenvalueSequence.power(0.5), d=2).to_dict())


class TestTail:
    def test_constant_tail_is_geometric(self):
        assert tail_envelope(EigenvalueSequence.constant(), 1, 1, 10) == pytest.approx(2.0**-10)

    def test_divergent_tail(self):
        assert math.isinf(tail_envelope(EigenvalueSequence.power(1.5), 1, 1, 10))

    @pytest.mark.parametrize("depth", [4, 8, 16])
    def test_tail_of_square_root_rule(self, depth):
        lam = EigenvalueSequence.power(0.5)
        direct = sum(lam(float(2**p)) / 2**p for p in range(depth + 1, 200))
        assert tail_envelope(lam, 1, 1, depth) == pytest.approx(direct, rel=1e-12)

    def test_chain_index_formula(self):
        assert chain_index((1, 1), 2, 1, 1) == 4
        assert chain_index((0, 1), 2, 2, 2) == 6
