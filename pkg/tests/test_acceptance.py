"""Acceptance criteria 1 to 12, one PASS/FAIL line each.

Run with pytest (lines are printed even without -s) or directly:
    python tests/test_acceptance.py
"""

import functools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import random_instances, random_rational_metric  # noqa: E402
from mismatchkit import (  # noqa: E402
    Codebook,
    DecoderSpec,
    Dmc,
    Metric,
    OuterSearchConfig,
    PrimalProblem,
    blahut_arimoto,
    claim2_check,
    clt_margin_check,
    dual_ascent,
    eta_n,
    exact_error_probability,
    gmi,
    inner_min,
    lm_rate,
    margin_rate_curve,
    maxmin_upper_bound,
    mc_error_probability,
    phi_identity_check,
    product_rate,
    rational_eta_lower_bound,
)
from mismatchkit.cli import lemma1_rows  # noqa: E402
from mismatchkit.decoder_lab import required_trials  # noqa: E402

SEED = 20261014
SEARCH_3X3 = OuterSearchConfig(resolution=16)
MARGIN_DELTAS = [0.0, 1e-3, 0.01, 0.05, 0.1]


@functools.lru_cache(maxsize=None)
def instances():
    """The shared (channel, metric, input) instances: 50 of size 2x2, 20 of size 3x3."""
    rng = np.random.default_rng(SEED + 1)
    out = []
    for nx, count, seed in ((2, 50, SEED), (3, 20, SEED + 2)):
        for w, q in random_instances(seed, count, nx, nx):
            out.append((w, q, rng.dirichlet(np.ones(nx))))
    return out


def small():
    return [inst for inst in instances() if inst[0].input_size == 2]


@functools.lru_cache(maxsize=None)
def inner_results():
    res = []
    for w, q, px in instances():
        t0 = time.perf_counter()
        cert = inner_min(PrimalProblem(px, w, q))
        res.append((cert, time.perf_counter() - t0))
    return res


@functools.lru_cache(maxsize=None)
def lm_values():
    return [lm_rate(w, q, 0.0, None if w.input_size == 2 else SEARCH_3X3) for w, q, _ in instances()]


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    print(line, flush=True)
    return ok, line


def criterion_1():
    worst = {2: 0.0, 3: 0.0}
    slowest = 0.0
    for (w, _, _), (cert, secs) in zip(instances(), inner_results()):
        worst[w.input_size] = max(worst[w.input_size], cert.gap)
        slowest = max(slowest, secs)
    ok = worst[2] <= 1e-6 and worst[3] <= 1e-4 and slowest < 1.0
    return report(1, ok, f"duality gap max {worst[2]:.2e} (2x2, tol 1e-6), {worst[3]:.2e} "
                         f"(3x3, tol 1e-4), slowest {slowest:.3f} s (limit 1 s)")


def criterion_2():
    errors = []
    for p in (0.05, 0.1, 0.2):
        w = Dmc.bsc(p)
        errors.append(abs(lm_rate(w, Metric.matched(w)).value - blahut_arimoto(w)[0]))
    return report(2, max(errors) <= 1e-4,
                  f"matched LM vs capacity on BSC(0.05, 0.1, 0.2), max error {max(errors):.2e} (tol 1e-4)")


def criterion_3():
    worst_dual = worst_gmi = -math.inf
    for (w, q, px), (cert, _) in zip(instances(), inner_results()):
        _, dual = dual_ascent(px, w, q)
        worst_dual = max(worst_dual, dual - cert.value)
        worst_gmi = max(worst_gmi, gmi(px, w, q) - dual)
    ok = worst_dual <= 1e-9 and worst_gmi <= 1e-9
    return report(3, ok, f"max(dual - inner_min) = {worst_dual:.2e}, max(gmi - dual) = {worst_gmi:.2e} "
                         "(tol 1e-9)")


def criterion_4():
    worst = math.inf
    for (w, q, _), single in zip(small(), lm_values()):
        worst = min(worst, product_rate(w, q, 2).value - single.value)
    return report(4, worst >= -1e-4, f"min(C2 - C1) over 50 instances = {worst:.2e} (tol -1e-4)")


def criterion_5():
    rise = -math.inf
    jump = 0.0
    over, steepest = 0, 0.0
    for w, q, _ in small():
        curve = margin_rate_curve(w, q, MARGIN_DELTAS)
        values = [c.value for _, c in curve]
        rise = max(rise, max(b - a for a, b in zip(values, values[1:])))
        jump = max(jump, abs(values[1] - values[0]))
        if abs(values[1] - values[0]) > 1e-2:
            # the optimal tilt s bounds the slope of the rate in delta
            over, steepest = over + 1, max(steepest, curve[0][1].s)
    ok = rise <= 1e-6 and jump <= 1e-2
    detail = (f"largest increase along delta {rise:.2e} (tol 1e-6), "
              f"|C(1e-3) - C(0)| max {jump:.2e} (tol 1e-2)")
    if over:
        detail += f", {over} instance(s) over, optimal tilt up to s = {steepest:.3g}"
    return report(5, ok, detail)


def _distinct_words(rng, n, m):
    picks = rng.choice(2**n, size=m, replace=False)
    return [[(int(v) >> (n - 1 - i)) & 1 for i in range(n)] for v in picks]


def criterion_6():
    rng = np.random.default_rng(SEED + 6)
    violations = checked = 0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, min(4, 2**n) + 1))
        book = Codebook(_distinct_words(rng, n, m), input_size=2)
        w = Dmc.renormalized(rng.random((2, 2)) + 0.01)
        q = Metric(rng.uniform(-1, 1, (2, 2)), bound_b=1.0)
        for row in lemma1_rows(book, w, q, float(rng.uniform(0.05, 0.5))):
            checked += 1
            violations += not row["holds"]
    return report(6, violations == 0, f"{violations} violations in {checked} (instance, event, s) checks")


def _random_book(rng, nmax=5, mmax=4):
    n = int(rng.integers(1, nmax + 1))
    m = int(rng.integers(1, mmax + 1))
    return Codebook(rng.integers(0, 2, (m, n)), input_size=2)


def _random_pair(rng):
    ny = int(rng.integers(2, 4))
    w = Dmc.renormalized(rng.random((2, ny)) * (rng.random((2, ny)) > 0.2) + 1e-3)
    if rng.random() < 0.5:
        q = random_rational_metric(rng, 2, ny, int(rng.integers(1, 4)), low=-1, high=1)
    else:
        q = Metric(rng.uniform(-1, 1, (2, ny)))
    return w, q


def criterion_7():
    rng = np.random.default_rng(SEED + 7)
    worst = 0.0
    unequal = 0
    for _ in range(100):
        w, q = _random_pair(rng)
        res = phi_identity_check(_random_book(rng), w, q)
        worst = max(worst, abs(res.lhs - res.rhs))
        unequal += not res.equal
    return report(7, unequal == 0 and worst <= 1e-12,
                  f"{unequal} mismatches in 100 instances, max |lhs - rhs| = {worst:.1e} (tol 1e-12)")


def criterion_8():
    rng = np.random.default_rng(SEED + 8)
    violations = checks = 0
    for _ in range(50):
        w, q = _random_pair(rng)
        book = _random_book(rng, nmax=4)
        for tau in np.linspace(-1.0, 1.0, 5):
            for eps in (0.05, 0.1, 0.25, 0.5):
                checks += 1
                violations += not claim2_check(book, w, q, float(tau), eps).holds
    return report(8, violations == 0, f"{violations} violations in {checks} (instance, tau, eps) checks")


def criterion_9():
    rng = np.random.default_rng(SEED + 9)
    violations = checks = 0
    for i in range(20):
        d = 1 + i % 3
        q = random_rational_metric(rng, 2, int(rng.integers(2, 4)), d, low=-2, high=2)
        for n in (1, 2, 3):
            eta = eta_n(q, n, method="brute")
            checks += 1
            violations += eta is not None and eta < rational_eta_lower_bound(q, n)
    return report(9, violations == 0, f"{violations} violations in {checks} (metric, n) checks")


def criterion_10():
    low = high = -math.inf
    for (w, q, _), lm in zip(instances(), lm_values()):
        search = None if w.input_size == 2 else SEARCH_3X3
        upper = maxmin_upper_bound(w, q, search).value
        low = max(low, lm.value - upper)
        high = max(high, upper - blahut_arimoto(w)[0])
    ok = low <= 1e-6 and high <= 1e-6
    return report(10, ok, f"max(lm - maxmin) = {low:.2e}, max(maxmin - capacity) = {high:.2e} (tol 1e-6)")


def criterion_11():
    rng = np.random.default_rng(SEED + 11)
    start = time.perf_counter()
    worst = 0.0
    outside = 0
    specs = [DecoderSpec.mismatch(), DecoderSpec.margin(0.2), DecoderSpec.threshold(0.3)]
    for i in range(30):
        book = _random_book(rng, nmax=8)
        w, q = _random_pair(rng)
        spec = specs[i % 3]
        exact = exact_error_probability(book, w, q, spec).value
        mc = mc_error_probability(book, w, q, spec, 100_000, seed=i)
        dev = abs(mc.value - exact)
        if mc.stderr > 0:
            worst = max(worst, dev / mc.stderr)
            outside += dev > 4 * mc.stderr
        else:
            outside += dev > 0
    elapsed = time.perf_counter() - start
    ok = outside == 0 and elapsed < 120
    return report(11, ok, f"{outside} of 30 outside 4 stderr (max {worst:.2f} stderr), {elapsed:.1f} s "
                          "(limit 120 s)")


def criterion_12():
    rep = clt_margin_check([0.5, 0.5], Dmc.bsc(0.2), Metric.indicator(2), 1.0, [100, 400, 1600],
                           16, required_trials(0.005), seed=SEED)
    sized = all(pt.trials >= required_trials(0.005) for pt in rep.points)
    values = ", ".join(f"n={pt.n}: {pt.estimate:.5f}" for pt in rep.points)
    return report(12, rep.holds and sized, f"{values} (floor 0.005, {rep.points[0].trials} trials)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 13)])
def test_criterion(criterion, capsys):
    with capsys.disabled():
        print()
        ok, line = criterion()
    assert ok, line


if __name__ == "__main__":
    results = [c()[0] for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
