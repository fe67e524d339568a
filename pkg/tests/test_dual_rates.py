import itertools
import math

import numpy as np
import pytest

from mismatchkit import (
    Codebook,
    Dmc,
    DualVars,
    Metric,
    PrimalProblem,
    dual_ascent,
    dual_objective,
    dual_rate,
    gmi,
    inner_min,
    lemma1_rhs,
    margin_error_event,
    mismatch_error_event,
    product_channel,
    product_metric,
)
from mismatchkit.dual_rates import gmi_optimizer
from mismatchkit.errors import HypothesisViolated, InfeasibleMetric, ValidationError
from mismatchkit.lm_rates import OuterSearchConfig

from conftest import random_instances

LOG2 = math.log(2)


def loop_objective(px, w, q, s, a):
    """Four nested loops, no vectorization."""
    nx, ny = w.shape
    total = 0.0
    for x in range(nx):
        for y in range(ny):
            if px[x] * w[x, y] == 0:
                continue
            denom = 0.0
            for xp in range(nx):
                denom += px[xp] * math.exp(s * q[xp, y] + a[xp])
            total += px[x] * w[x, y] * (s * q[x, y] + a[x] - math.log(denom))
    return total


class TestObjective:
    def test_zero_point(self, rng):
        w, q = random_instances(1, 1, 3, 2)[0]
        assert dual_objective([0.2, 0.3, 0.5], w, q, DualVars.zero(3)) == 0.0

    def test_zero_with_neg_inf(self):
        w = Dmc(np.eye(2))
        q = Metric.matched(w)
        assert dual_objective([0.5, 0.5], w, q, DualVars.zero(2)) == 0.0

    def test_shift_invariance(self, rng):
        w, q = random_instances(2, 1, 2, 3)[0]
        v = DualVars(1.3, [0.2, 0.7])
        shifted = DualVars(1.3, [1.2, 1.7])
        assert dual_objective([0.4, 0.6], w, q, v) == pytest.approx(
            dual_objective([0.4, 0.6], w, q, shifted), abs=1e-13)

    def test_loop_oracle(self, rng):
        for w, q in random_instances(3, 10, 2, 2):
            px = rng.dirichlet(np.ones(2))
            s, a = rng.uniform(0, 3), rng.uniform(0, 2, 2)
            got = dual_objective(px, w, q, DualVars(s, a))
            assert got == pytest.approx(loop_objective(px, w.w, q.q, s, a), abs=1e-12)

    def test_letter_normalization(self):
        w, q = Dmc.bsc(0.1), Metric.indicator(2)
        w2, q2 = product_channel(w, 2), product_metric(q, 2)
        single = dual_objective([0.5, 0.5], w, q, DualVars.zero(2, 2.0))
        # product input, a = 0, s scaled by k: the objective tensorizes
        double = dual_objective(np.full(4, 0.25), w2, q2, DualVars.zero(4, 4.0))
        assert double == pytest.approx(single, abs=1e-12)

    def test_concave_along_segments(self, rng):
        w, q = random_instances(4, 1, 3, 3)[0]
        px = np.array([0.3, 0.3, 0.4])
        for _ in range(20):
            u = DualVars(rng.uniform(0, 4), rng.uniform(0, 2, 3))
            v = DualVars(rng.uniform(0, 4), rng.uniform(0, 2, 3))
            mid = DualVars((u.s + v.s) / 2, (u.a + v.a) / 2)
            f = lambda d: dual_objective(px, w, q, d)
            assert f(mid) >= (f(u) + f(v)) / 2 - 1e-12

    def test_rejects_negative_variables(self):
        with pytest.raises(ValidationError):
            DualVars(-1.0, [0.0, 0.0])
        with pytest.raises(ValidationError):
            DualVars(1.0, [0.0, -0.1])

    def test_rejects_neg_inf_on_support(self):
        q = Metric([[0.0, -np.inf], [0.0, 0.0]], mode="one_sided")
        with pytest.raises(InfeasibleMetric):
            dual_objective([0.5, 0.5], Dmc.bsc(0.1), q, DualVars.zero(2, 1.0))


class TestDualAscent:
    def test_pure_noise(self):
        w = Dmc([[0.3, 0.7], [0.3, 0.7]])
        v, value = dual_ascent([0.5, 0.5], w, Metric([[1.0, -1.0], [0.0, 2.0]]))
        assert value == pytest.approx(0.0, abs=1e-12)
        assert v.s == 0.0

    def test_identity(self):
        v, value = dual_ascent([0.5, 0.5], Dmc(np.eye(2)), Metric.indicator(2))
        assert value >= LOG2 - 1e-4
        assert value <= LOG2 + 1e-12

    def test_identity_closed_form(self):
        # at a = 0: log 2 - log(1 + e^{-s}), increasing to log 2
        w, q = Dmc(np.eye(2)), Metric.indicator(2)
        for s in [0.0, 0.5, 3.0, 12.0]:
            got = dual_objective([0.5, 0.5], w, q, DualVars.zero(2, s))
            assert got == pytest.approx(LOG2 - math.log1p(math.exp(-s)), abs=1e-13)

    def test_weak_duality(self):
        for w, q in random_instances(5, 15, 2, 2) + random_instances(6, 5, 3, 3):
            px = np.full(w.input_size, 1 / w.input_size)
            _, value = dual_ascent(px, w, q)
            assert value <= inner_min(PrimalProblem(px, w, q)).value + 1e-9
            assert gmi(px, w, q) <= value + 1e-9

    def test_reaches_primal(self):
        # strong duality: the ascent closes on the LM inner minimum
        for w, q in random_instances(8, 8, 2, 2):
            px = np.array([0.45, 0.55])
            _, value = dual_ascent(px, w, q)
            assert value == pytest.approx(inner_min(PrimalProblem(px, w, q)).value, abs=1e-6)

    def test_improves_on_gmi_somewhere(self):
        gaps = []
        for w, q in random_instances(9, 20, 2, 3):
            px = np.array([0.5, 0.5])
            gaps.append(dual_ascent(px, w, q)[1] - gmi(px, w, q))
        assert max(gaps) > 1e-4
        assert min(gaps) >= -1e-9

    def test_returned_point_evaluates_to_value(self):
        w, q = random_instances(10, 1, 3, 2)[0]
        px = np.array([0.2, 0.5, 0.3])
        v, value = dual_ascent(px, w, q)
        assert dual_objective(px, w, q, v) == pytest.approx(value, abs=1e-14)
        assert v.a.min() == 0.0


class TestGmi:
    def test_never_negative(self):
        for w, q in random_instances(11, 10, 2, 2):
            assert gmi([0.5, 0.5], w, q) >= 0.0

    def test_two_codeword_sweep(self):
        n = 3
        w, q = Dmc.bsc(0.15), Metric([[0.8, -0.3], [0.1, 0.6]])
        wn, qn = product_channel(w, n), product_metric(q, n)
        px = np.zeros(2**n)
        px[0] = px[-1] = 0.5
        v, value = gmi_optimizer(px, wn, qn)
        grid = np.linspace(0.0, max(20.0, 4 * v.s), 100_001)
        sweep = max(dual_objective(px, wn, qn, DualVars.zero(2**n, s)) for s in grid)
        assert value == pytest.approx(sweep, abs=1e-6)
        assert value >= sweep - 1e-12

    def test_dual_rate_restricted(self):
        w, q = random_instances(12, 1, 2, 2)[0]
        search = OuterSearchConfig(resolution=16)
        full = dual_rate(w, q, search)
        restricted = dual_rate(w, q, search, restrict_a=True)
        assert restricted.value <= full.value + 1e-9


def reference_rhs(words, w, q, s, bound_b, in_event):
    """Direct enumeration over (m, y^n), written from the formula alone."""
    m, n = len(words), len(words[0])
    rate = math.log(m) / n
    prob_a, acc = 0.0, 0.0
    for i, word in enumerate(words):
        for ys in itertools.product(range(w.shape[1]), repeat=n):
            prob = 1.0 / m
            for x, y in zip(word, ys):
                prob *= w[x, y]
            if prob == 0:
                continue
            if in_event(i, ys):
                prob_a += prob
                continue
            score = [sum(q[x, y] for x, y in zip(other, ys)) / n for other in words]
            gap = min(score[i] - score[j] for j in range(m) if j != i)
            acc += prob * min(rate, s / n * gap)
    return -prob_a * s * 2 * bound_b / n + acc - math.log(2) / n


def margin_event_reference(words, q, delta):
    n = len(words[0])

    def event(i, ys):
        score = [sum(q[x, y] for x, y in zip(word, ys)) / n for word in words]
        return not all(score[i] - score[j] >= delta for j in range(len(words)) if j != i)

    return event


class TestLemma1:
    def test_event_everywhere(self):
        book = Codebook([[0, 1], [1, 0]])
        w, q = Dmc.bsc(0.2), Metric.indicator(2)
        got = lemma1_rhs(book, w, q, 3.0, lambda m, y: True)
        assert got == pytest.approx(-3.0 * 2 * 1.0 / 2 - LOG2 / 2, abs=1e-14)

    def test_s_zero(self):
        book = Codebook([[0, 0], [1, 1]])
        w, q = Dmc(np.eye(2)), Metric.indicator(2)
        # noiseless: the transmitted word always wins, so min{R, 0} = 0
        assert lemma1_rhs(book, w, q, 0.0, mismatch_error_event(book, q)) == pytest.approx(-LOG2 / 2)

    def test_enumeration_oracle(self):
        book = Codebook([[0, 1], [1, 1]])
        w = Dmc([[0.8, 0.2], [0.3, 0.7]])
        q = Metric([[0.5, -0.25], [0.0, 1.0]], bound_b=1.0)
        for s in [0.5, 2.0, 8.0]:
            got = lemma1_rhs(book, w, q, s, margin_error_event(book, q, 0.25))
            want = reference_rhs(book.words.tolist(), w.w, q.q, s, 1.0,
                                 margin_event_reference(book.words.tolist(), q.q, 0.25))
            assert got == pytest.approx(want, abs=1e-13)

    def test_rejects_duplicate_words(self):
        book = Codebook([[0, 1], [0, 1]])
        with pytest.raises(ValidationError):
            lemma1_rhs(book, Dmc.bsc(0.1), Metric.indicator(2), 1.0, lambda m, y: False)

    def test_rejects_metric_above_bound(self):
        book = Codebook([[0, 1], [1, 0]])
        q = Metric([[1.5, 0.0], [0.0, 1.0]], bound_b=2.0)
        q = Metric(q.q, bound_b=1.0, mode="two_sided")  # finite cells above B
        with pytest.raises(HypothesisViolated):
            lemma1_rhs(book, Dmc(np.eye(2)), q, 1.0, lambda m, y: False)

    def test_bound_holds_random(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 4))
            words = {tuple(rng.integers(0, 2, n)) for _ in range(3)}
            book = Codebook(sorted(words), input_size=2)
            w = Dmc.bsc(rng.uniform(0.02, 0.4))
            q = Metric(rng.uniform(-1, 1, (2, 2)), bound_b=1.0)
            lhs = dual_objective(np.full(book.m, 1 / book.m), _code_channel(book, w),
                                 _code_metric(book, q), DualVars.zero(book.m, 1.0))
            rhs = lemma1_rhs(book, w, q, 1.0, mismatch_error_event(book, q))
            assert lhs >= rhs - 1e-12


def _code_channel(book, w):
    wn = product_channel(w, book.n)
    idx = [int("".join(map(str, word)), 2) for word in book.words]
    return Dmc(wn.w[idx])


def _code_metric(book, q):
    qn = product_metric(q, book.n)
    idx = [int("".join(map(str, word)), 2) for word in book.words]
    return Metric(qn.q[idx], bound_b=qn.bound_b, letters=book.n)
