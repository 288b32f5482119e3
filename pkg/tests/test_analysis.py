import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qaplp.analysis import (
    CLAIM_CONSISTENT,
    CLASSIFICATIONS,
    DECOMPOSITION_FAILED,
    GAP_FOUND,
    NONINTEGRAL_VERTEX,
    audit,
    classify,
    decompose,
    find_layered_path,
    flow_value,
    support_graph,
    vertex_is_integral,
)
from qaplp.indexer import build_space
from qaplp.instance import Matching, all_matchings, brute_force_optimum, evaluate, generate_random, make_uniform
from qaplp.model import build_model, embed
from qaplp.simplex import solve

SPACE4 = build_space(4)
MATCHINGS4 = list(all_matchings(4))


def mix(space, parts):
    return sum(w * embed(space, m).astype(float) for m, w in parts)


@st.composite
def mixtures(draw, max_k=4):
    ms = draw(st.lists(st.sampled_from(MATCHINGS4), min_size=1, max_size=max_k, unique=True))
    raw = draw(st.lists(st.integers(1, 100), min_size=len(ms), max_size=len(ms)))
    total = sum(raw)
    return [(m, r / total) for m, r in zip(ms, raw)]


class TestSupport:
    def test_embedding(self):
        g = support_graph(SPACE4, embed(SPACE4, Matching((1, 3, 2, 4))))
        assert all(g.chi(r) == 1 for r in SPACE4.stages)
        assert all(v == 1 for v in g.mass.values())

    def test_midpoint(self):
        a, b = Matching((1, 2, 3, 4)), Matching((1, 2, 4, 3))
        g = support_graph(SPACE4, mix(SPACE4, [(a, 0.5), (b, 0.5)]))
        assert [g.chi(r) for r in SPACE4.stages] == [1, 2, 2]

    def test_lp_optimum_stage_mass(self):
        inst = generate_random(4, "no-opcost", 4)
        model = build_model(inst)
        g = support_graph(model.space, solve(model))
        assert all(abs(v - 1) <= 1e-7 for v in g.mass.values())
        assert all(1 <= g.chi(r) <= 12 for r in model.space.stages)


class TestPaths:
    def test_embedding_path(self):
        m = Matching((4, 2, 1, 3))
        path = find_layered_path(SPACE4, embed(SPACE4, m))
        assert path.matching == m and path.flow == 1

    def test_mixture_path(self):
        a, b = Matching((1, 2, 3, 4)), Matching((2, 1, 4, 3))
        x = mix(SPACE4, [(a, 0.3), (b, 0.7)])
        path = find_layered_path(SPACE4, x)
        assert path.matching == a and path.flow == pytest.approx(0.3, abs=1e-15)
        assert flow_value(SPACE4, x, b) == pytest.approx(0.7)

    def test_zeroed_pairs_block_paths(self):
        x = embed(SPACE4, Matching((1, 2, 3, 4))).astype(float)
        for col, key in enumerate(SPACE4.pair, start=SPACE4.offset("pair")):
            if key[1] == 1 and key[4] == 3:
                x[col] = 0
        assert find_layered_path(SPACE4, x) is None

    @given(mixtures())
    def test_flow_bounds(self, parts):
        x = mix(SPACE4, parts)
        path = find_layered_path(SPACE4, x)
        mass = min(support_graph(SPACE4, x).mass.values())
        assert 0 <= path.flow <= mass + 1e-12 <= 1 + 1e-12


class TestDecompose:
    def test_single(self):
        m = Matching((2, 4, 1, 3))
        rep = decompose(SPACE4, embed(SPACE4, m))
        assert rep.components == [(m, 1.0)] and rep.residual == 0 and rep.decomposed

    def test_three_way(self):
        parts = [(Matching((1, 2, 3, 4)), 0.5), (Matching((3, 1, 4, 2)), 0.3), (Matching((4, 3, 2, 1)), 0.2)]
        rep = decompose(SPACE4, mix(SPACE4, parts))
        got = {m: w for m, w in rep.components}
        assert set(got) == {m for m, _ in parts}
        assert all(abs(got[m] - w) <= 1e-9 for m, w in parts)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_every_embedding(self, n):
        space = build_space(n)
        for m in all_matchings(n):
            rep = decompose(space, embed(space, m))
            assert rep.components == [(m, 1.0)] and rep.residual == 0

    @given(mixtures())
    def test_roundtrip(self, parts):
        rep = decompose(SPACE4, mix(SPACE4, parts))
        assert rep.decomposed and rep.residual <= 1e-9
        got = dict(rep.components)
        assert set(got) == {m for m, _ in parts}
        assert all(abs(got[m] - w) <= 1e-9 for m, w in parts)
        assert all(w > 0 for w in got.values()) and rep.weight_sum <= 1 + 1e-9

    @given(mixtures(), st.integers(0, 10**6))
    def test_weighted_value_matches_objective(self, parts, seed):
        inst = generate_random(4, "with-opcost", seed)
        model = build_model(inst, SPACE4)
        x = mix(SPACE4, parts)
        rep = decompose(SPACE4, x, inst=inst)
        assert rep.weighted_value() == pytest.approx(float(model.c @ x), rel=1e-6)

    def test_non_decomposable_point(self):
        # diagonal flow alone, pair and triple mass removed
        x = embed(SPACE4, Matching((1, 2, 3, 4))).astype(float)
        x[SPACE4.offset("pair"):] = 0
        rep = decompose(SPACE4, x)
        assert not rep.decomposed and rep.residual > 0

    def test_qapn6x_optimum_value(self):
        inst = make_uniform(4)
        model = build_model(inst)
        sol = solve(model)
        rep = decompose(model.space, sol, inst=inst)
        assert rep.decomposed and rep.weighted_value() == pytest.approx(6000)

    def test_lp_matchings_are_not_cheaper_than_lp(self):
        for seed in range(5):
            inst = generate_random(4, "no-opcost", seed)
            model = build_model(inst)
            sol = solve(model)
            rep = decompose(model.space, sol, inst=inst)
            assert all(v >= sol.objective - 1e-6 * abs(sol.objective) for v in rep.values)


class TestIntegrality:
    def test_embedding(self):
        assert vertex_is_integral(embed(SPACE4, Matching((1, 2, 3, 4))))

    def test_midpoint(self):
        x = mix(SPACE4, [(Matching((1, 2, 3, 4)), 0.5), (Matching((2, 1, 3, 4)), 0.5)])
        assert not vertex_is_integral(x)


class TestAudit:
    def test_uniform_consistent(self):
        inst = make_uniform(4)
        model = build_model(inst)
        rep = audit(inst, model, solve(model), brute_force_optimum(inst))
        assert rep.classification == CLAIM_CONSISTENT and rep.gap == pytest.approx(0, abs=1e-6)
        d = rep.to_dict()
        assert d["classification"] in CLASSIFICATIONS and d["pbm_count"] >= 1

    def test_without_oracle(self):
        inst = generate_random(4, "no-opcost", 3)
        model = build_model(inst)
        rep = audit(inst, model, solve(model), None)
        assert rep.gap is None and rep.oracle_value is None and rep.classification in CLASSIFICATIONS

    def test_fractional_mixture_classification(self):
        inst = make_uniform(4)
        model = build_model(inst)
        x = mix(model.space, [(Matching((1, 2, 3, 4)), 0.5), (Matching((4, 3, 2, 1)), 0.5)])
        rep = audit(inst, model, x, brute_force_optimum(inst))
        assert rep.classification == NONINTEGRAL_VERTEX and rep.pbm_count == 2

    def test_gap_and_failed(self):
        inst = generate_random(4, "no-opcost", 3)
        model = build_model(inst)
        x = embed(model.space, Matching((1, 2, 3, 4))).astype(float)
        x[model.space.offset("pair"):] = 0
        rep = audit(inst, model, x, brute_force_optimum(inst))
        assert rep.classification in (GAP_FOUND, DECOMPOSITION_FAILED)

    @pytest.mark.parametrize("args,expected", [
        ((1.0, 100.0, True, True), GAP_FOUND),
        ((0.0, 100.0, True, False), DECOMPOSITION_FAILED),
        ((0.0, 100.0, False, True), NONINTEGRAL_VERTEX),
        ((None, 100.0, True, True), CLAIM_CONSISTENT),
        ((1e-9, 1.0, True, True), CLAIM_CONSISTENT),
    ])
    def test_classify(self, args, expected):
        assert classify(*args) == expected

    def test_relaxation_gap_never_negative(self):
        for seed in range(5):
            inst = generate_random(4, "with-opcost", seed)
            model = build_model(inst)
            rep = audit(inst, model, solve(model), brute_force_optimum(inst))
            assert rep.gap >= -1e-6 * rep.oracle_value
            assert math.isfinite(rep.relative_gap)
