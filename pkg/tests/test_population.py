"""Synthetic populations, utility families, and the logit choice rule."""

import math

import numpy as np
import pytest

from gbs.core import sigmoid
from gbs.population import (
    LINEAR,
    MixtureSpec,
    NET,
    PAIRWISE,
    Population,
    PopulationSpec,
    RespondentModel,
    UtilityContext,
    answer,
    choice_probability,
    generate_population,
    holdout_population,
    load_population,
    population_from_json,
    population_to_json,
    representative_utility,
    sample_respondents,
    save_population,
    utility_matrix,
)


class TestGeneration:
    def test_deterministic(self):
        spec = PopulationSpec(k=5, size=3, utility_type=LINEAR, seed=42)
        a = generate_population(spec)
        b = generate_population(spec)
        for ra, rb in zip(a.respondents, b.respondents):
            assert np.array_equal(ra.w, rb.w)
        assert np.array_equal(a.context.mu, b.context.mu)

    def test_dense_interactions_at_k10(self):
        pop = generate_population(PopulationSpec(k=10, size=4, utility_type=PAIRWISE, seed=1))
        assert len(pop.context.pair_index) == 45
        for r in pop.respondents:
            assert r.interactions.shape == (45,)
            assert np.all((r.interactions >= -2.0) & (r.interactions <= 0.0))

    def test_sparse_interactions_at_k100(self):
        pop = generate_population(PopulationSpec(k=100, size=3, utility_type=PAIRWISE, seed=1))
        assert len(pop.context.pair_index) == 100
        # pairs are unique, ordered (k < k'), and shared by construction
        pairs = {tuple(p) for p in pop.context.pair_index.tolist()}
        assert len(pairs) == 100
        assert all(a < b for a, b in pairs)
        for r in pop.respondents:
            assert r.interactions.shape == (100,)

    def test_mixture_requires_pairwise(self):
        with pytest.raises(ValueError, match="pairwise"):
            PopulationSpec(k=4, size=2, utility_type=LINEAR, mixture=MixtureSpec())

    def test_mixture_covariates_are_exp_w(self):
        pop = generate_population(
            PopulationSpec(k=6, size=10, utility_type=PAIRWISE, mixture=MixtureSpec(), seed=3)
        )
        for r in pop.respondents:
            np.testing.assert_allclose(r.x, np.exp(r.w), rtol=1e-15)
            assert np.all(r.x > 0)

    def test_mixture_default_means(self):
        m1, m2 = MixtureSpec().means(5)
        assert m1.tolist() == [1, 1, 1, -1, -1]
        assert np.array_equal(m2, -m1)

    def test_mixture_symmetry_zero_mean(self):
        pop = generate_population(
            PopulationSpec(k=6, size=4000, utility_type=PAIRWISE, mixture=MixtureSpec(), seed=9)
        )
        W = np.stack([r.w for r in pop.respondents])
        bound = 4 * W.std(axis=0) / math.sqrt(len(pop))
        assert np.all(np.abs(W.mean(axis=0)) <= bound)

    def test_holdout_shares_context_disjoint_respondents(self):
        pop = generate_population(PopulationSpec(k=5, size=10, utility_type=PAIRWISE, seed=7))
        test = holdout_population(pop, 20, seed=123)
        assert test.context is pop.context
        train_ids = {r.id for r in pop.respondents}
        test_ids = {r.id for r in test.respondents}
        assert not train_ids & test_ids
        # different draws entirely
        assert not np.array_equal(pop.respondents[0].w, test.respondents[0].w)


class TestUtility:
    def test_linear_zero_profile(self):
        pop = generate_population(PopulationSpec(k=4, size=2, utility_type=LINEAR, seed=0))
        z = np.zeros(4, dtype=np.int64)
        assert representative_utility(pop.respondents[0], z, pop.context) == 0.0

    def test_pairwise_closed_form(self):
        ctx = UtilityContext(
            k=2, utility_type=PAIRWISE,
            pair_index=np.array([[0, 1]], dtype=np.int64),
        )
        r = RespondentModel(id=0, w=np.array([1.0, -2.0]),
                            interactions=np.array([-0.5]))
        v = representative_utility(r, np.array([1, 1]), ctx)
        assert v == pytest.approx(-1.5, abs=1e-12)

    def test_net_matches_independent_forward(self):
        pop = generate_population(PopulationSpec(k=6, size=2, utility_type=NET, seed=5))
        f0 = pop.context.f0
        z = np.array([1, 0, 1, 1, 0, 1])
        # independent loop-based forward pass
        h = z.astype(float)
        for layer, (w, b) in enumerate(zip(f0.weights, f0.biases)):
            pre = np.array([sum(h[i] * w[i, j] for i in range(w.shape[0])) + b[j]
                            for j in range(w.shape[1])])
            h = pre if layer == len(f0.weights) - 1 else np.tanh(pre)
        expected = 4.0 * h[0]
        got = representative_utility(pop.respondents[0], z, pop.context)
        assert got == pytest.approx(expected, abs=1e-10)

    def test_net_shared_across_population(self):
        pop = generate_population(PopulationSpec(k=4, size=5, utility_type=NET, seed=6))
        z = np.array([1, 0, 0, 1])
        vals = {representative_utility(r, z, pop.context) for r in pop.respondents}
        assert len(vals) == 1

    def test_utility_matrix_matches_scalar_path(self):
        for utype in (LINEAR, PAIRWISE, NET):
            pop = generate_population(PopulationSpec(k=5, size=7, utility_type=utype, seed=8))
            rng = np.random.default_rng(1)
            profiles = rng.integers(0, 2, size=(6, 5))
            M = utility_matrix(pop, profiles)
            for p in range(6):
                for i, r in enumerate(pop.respondents):
                    assert M[p, i] == pytest.approx(
                        representative_utility(r, profiles[p], pop.context), abs=1e-10
                    )


class TestChoice:
    def _ctx_linear(self, w):
        ctx = UtilityContext(k=len(w), utility_type=LINEAR, mu=np.zeros(len(w)))
        r = RespondentModel(id=0, w=np.asarray(w, dtype=float))
        return ctx, r

    def test_equal_utilities_fair_coin(self):
        ctx, r = self._ctx_linear([1.0, 1.0])
        p = choice_probability(r, np.array([1, 0]), np.array([0, 1]), ctx)
        assert p == 0.5

    def test_log3_gap_gives_three_quarters(self):
        ctx, r = self._ctx_linear([math.log(3.0)])
        p = choice_probability(r, np.array([1]), np.array([0]), ctx)
        assert p == pytest.approx(0.75, abs=1e-12)

    def test_empirical_frequency_matches_closed_form(self):
        ctx, r = self._ctx_linear([0.8, -0.3])
        z1 = np.array([1, 1])
        z2 = np.array([0, 1])
        p = choice_probability(r, z1, z2, ctx)
        rng = np.random.default_rng(4)
        n = 100_000
        hits = sum(answer(r, z1, z2, ctx, rng) for _ in range(n))
        se = math.sqrt(p * (1 - p) / n)
        assert abs(hits / n - p) < 3 * se

    def test_translation_invariance(self):
        # same number of active bits on both sides: shifting every
        # part-worth by a constant shifts both utilities equally
        ctx1, r1 = self._ctx_linear([0.5, -1.0, 0.2])
        ctx2, r2 = self._ctx_linear([0.5 + 7.0, -1.0 + 7.0, 0.2 + 7.0])
        z1 = np.array([1, 1, 0])
        z2 = np.array([0, 1, 1])
        p1 = choice_probability(r1, z1, z2, ctx1)
        p2 = choice_probability(r2, z1, z2, ctx2)
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_monotone_in_utility_gap(self):
        ctx, r = self._ctx_linear([2.0, 1.0, 0.5, -0.5])
        z2 = np.zeros(4, dtype=np.int64)
        profiles = [np.array(b) for b in
                    ([0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0])]
        gaps = [float(r.w @ z) for z in profiles]
        probs = [choice_probability(r, z, z2, ctx) for z in profiles]
        order = np.argsort(gaps)
        assert np.all(np.diff(np.asarray(probs)[order]) > 0)


class TestSerialization:
    @pytest.mark.parametrize("utype,mixture", [
        (LINEAR, None), (PAIRWISE, None), (NET, None), (PAIRWISE, MixtureSpec()),
    ])
    def test_json_roundtrip_exact(self, tmp_path, utype, mixture):
        pop = generate_population(
            PopulationSpec(k=5, size=4, utility_type=utype, mixture=mixture, seed=13)
        )
        path = tmp_path / "pop.json"
        save_population(pop, path)
        back = load_population(path)
        assert back.spec == pop.spec
        for ra, rb in zip(pop.respondents, back.respondents):
            assert np.array_equal(ra.w, rb.w)
            if ra.interactions is not None:
                assert np.array_equal(ra.interactions, rb.interactions)
            if ra.x is not None:
                assert np.array_equal(ra.x, rb.x)
        z = np.array([1, 0, 1, 0, 1])
        for ra, rb in zip(pop.respondents, back.respondents):
            assert representative_utility(ra, z, pop.context) == \
                representative_utility(rb, z, back.context)
