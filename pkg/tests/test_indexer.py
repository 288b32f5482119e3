import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qaplp.indexer import (
    build_space,
    count_pair,
    count_pair_closed_form,
    count_rows,
    count_triple,
    growth_exponent,
    growth_report,
    pair_admissible,
    triple_admissible,
    variable_counts,
)


def arcs(n):
    return [(i, r, j) for r in range(1, n) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]


def consequence_rule(a, b):
    """Admissibility spelled out case by case instead of as a partial injection."""
    if b[1] == a[1] + 1:
        return b[0] == a[2] and b[2] not in (a[0], a[2])
    return len({a[0], a[2], b[0], b[2]}) == 4


def brute_pairs(n):
    return [(a, b) for a in arcs(n) for b in arcs(n) if a[1] < b[1] and consequence_rule(a, b)]


def brute_triples(n):
    return [
        (a, b, c) for a in arcs(n) for b in arcs(n) for c in arcs(n)
        if a[1] < b[1] < c[1] and consequence_rule(a, b) and consequence_rule(b, c) and consequence_rule(a, c)
    ]


class TestAdmissibility:
    def test_examples(self):
        assert pair_admissible((1, 1, 2), (2, 2, 3))
        assert not pair_admissible((1, 1, 2), (3, 2, 4))
        assert not triple_admissible((1, 1, 2), (2, 2, 3), (3, 3, 1))

    def test_stage_order(self):
        with pytest.raises(ValueError):
            pair_admissible((1, 2, 3), (2, 1, 3))
        with pytest.raises(ValueError):
            triple_admissible((1, 1, 2), (2, 3, 3), (3, 2, 4))

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_pair_rule_matches_consequences(self, n):
        for a in arcs(n):
            for b in arcs(n):
                if a[1] < b[1]:
                    assert pair_admissible(a, b) == consequence_rule(a, b)

    def test_n3_has_six_pairs(self):
        pairs = brute_pairs(3)
        assert len(pairs) == 6
        firsts = [a for a, _ in pairs]
        assert sorted(firsts) == sorted(a for a in arcs(3) if a[1] == 1)

    def test_n4_has_24_triples(self):
        assert len(brute_triples(4)) == 24
        assert len(build_space(4).triple) == 24

    @given(st.integers(4, 6), st.data())
    def test_triple_is_pairwise(self, n, data):
        a, b, c = sorted(data.draw(st.lists(st.sampled_from(arcs(n)), min_size=3, max_size=3,
                                            unique_by=lambda x: x[1])), key=lambda x: x[1])
        expected = pair_admissible(a, b) and pair_admissible(b, c) and pair_admissible(a, c)
        assert triple_admissible(a, b, c) == expected


class TestSpace:
    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_enumeration_matches_brute_force(self, n):
        space = build_space(n)
        assert sorted(space.pair) == sorted(a + b for a, b in brute_pairs(n))
        if n <= 4:
            assert sorted(space.triple) == sorted(a + b + c for a, b, c in brute_triples(n))

    def test_counts(self):
        assert build_space(4).counts == {"diag": 36, "pair": 72, "triple": 24}
        assert build_space(6).counts["diag"] == 150
        assert build_space(2).counts == {"diag": 2, "pair": 0, "triple": 0}
        assert build_space(3).counts["triple"] == 0

    def test_pair_split_n4(self):
        space = build_space(4)
        adjacent = sum(1 for p in space.pair if p[4] == p[1] + 1)
        assert (adjacent, len(space.pair) - adjacent) == (48, 24)

    @pytest.mark.parametrize("n", range(2, 8))
    def test_closed_forms(self, n):
        assert count_pair(n) == count_pair_closed_form(n)
        if n <= 6:
            space = build_space(n)
            assert space.counts == {k: v for k, v in variable_counts(n).items() if k != "total"}
            assert len(space.triple) == count_triple(n)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_roundtrip_and_order(self, n):
        space = build_space(n)
        for col in range(space.size):
            key = space.tuple_of(col)
            assert space.col(key) == col
            assert space.parse_name(space.name(col)) == col
        for fam in ("diag", "pair", "triple"):
            keys = getattr(space, fam)
            assert list(keys) == sorted(keys)
        assert [space.family_of(c) for c in range(space.size)] == (
            ["diag"] * len(space.diag) + ["pair"] * len(space.pair) + ["triple"] * len(space.triple))

    def test_names(self):
        space = build_space(4)
        assert space.name(0) == "YD_1_1_2"
        assert space.names()[space.offset("triple")].startswith("Z_")
        assert space.col((1, 1, 1)) is None
        with pytest.raises(IndexError):
            space.tuple_of(space.size)

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            build_space(1)


class TestGrowth:
    def test_monotone(self):
        table = growth_report([4, 5, 6])["table"]
        for key in ("diag", "pair", "triple", "total", "rows"):
            values = [t[key] for t in table]
            assert values == sorted(values) and len(set(values)) == 3

    def test_triple_ratio_tends_to_degree_nine(self):
        # exact counts: log-ratio slope between n and n+1 climbs toward 9
        slopes = [math.log(count_triple(n + 1) / count_triple(n)) / math.log((n + 1) / n)
                  for n in (40, 80, 160)]
        assert slopes == sorted(slopes, reverse=True)
        assert abs(slopes[-1] - 9) < abs(slopes[0] - 9) < 1.0

    def test_fitted_slope_is_ls_fit(self):
        ns = [2, 4, 8]
        assert growth_exponent(ns, [n**3 for n in ns]) == pytest.approx(3)

    def test_rows_without_building(self):
        from qaplp.model import build_model
        from qaplp.instance import make_uniform

        for n in (3, 4, 5):
            for cuts in (False, True):
                assert build_model(make_uniform(n), valid_cuts=cuts).family_counts() == count_rows(n, cuts)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            growth_report([1, 4])

    def test_exponents_present(self):
        rep = growth_report(range(6, 13))
        assert set(rep["exponents"]) == {"diag", "pair", "triple", "total", "rows"}
        assert np.isfinite(list(rep["exponents"].values())).all()
