import json
import math

import numpy as np
import pytest
from scipy.stats import binom

from safemean import (
    EstimatorConfig,
    LogNormal,
    Pareto,
    PointMass,
    RadiusSchedule,
    Sample,
    ScaledBernoulli,
    UniformBounded,
    conservatism_probability,
    cramer_rate,
    disappointment_probability,
    draw_sample,
    exact_bernoulli_event_probability,
    laplace_transform,
    pareto_variance_ratio_limit,
    rate_fit,
    true_mean,
    variance_ratio_curve,
    wilson_interval,
)
from safemean.montecarlo import (
    TrialReport,
    reports_to_csv,
    reports_to_json,
    solve_population_dual,
)

BERN = ScaledBernoulli(0.5, 2.0)
# left-tail rate of the scaled Bernoulli at b = 0.5: KL(1/4 || 1/2)
BERN_RATE_HALF = 0.25 * math.log(0.5) + 0.75 * math.log(1.5)  # 0.13081203594113697


def test_draw_point_mass():
    s = draw_sample(PointMass(3.0), 5, seed=1)
    assert list(s.values) == [3.0] * 5


def test_draw_pareto_support():
    s = draw_sample(Pareto(2.0, 1.5), 500, seed=2)
    assert s.min() >= 1.5


def test_draw_pareto_lln():
    s = draw_sample(Pareto(2.0, 1.0), 1_000_000, seed=3)
    assert 1.9 <= float(np.mean(s.values)) <= 2.1


def test_draw_reproducible():
    a = draw_sample(LogNormal(0.0, 1.0), 50, seed=9, stream=4)
    b = draw_sample(LogNormal(0.0, 1.0), 50, seed=9, stream=4)
    c = draw_sample(LogNormal(0.0, 1.0), 50, seed=9, stream=5)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_wilson_interval_basics():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 1000) == (0.0, 3.0 / 1000)
    lo1, hi1 = wilson_interval(1000, 1000)
    assert hi1 == 1.0 and lo1 == pytest.approx(1.0 - 3.0 / 1000)
    with pytest.raises(ValueError):
        wilson_interval(5, 0)
    with pytest.raises(ValueError):
        wilson_interval(7, 5)


def test_wilson_coverage_on_synthetic_bernoulli():
    rng = np.random.default_rng(123)
    p = 0.07
    trials = 400
    covered = 0
    reps = 1000
    hit_counts = rng.binomial(trials, p, size=reps)
    for hits in hit_counts:
        lo, hi = wilson_interval(int(hits), trials)
        covered += int(lo <= p <= hi)
    assert covered >= 930


def test_disappointment_point_mass_zero():
    rep = disappointment_probability(PointMass(3.0), EstimatorConfig("kl", r=0.2), 10, 500, seed=4)
    assert rep.hits == 0 and rep.p_hat == 0.0
    # tie is not a disappointment
    rep_mean = disappointment_probability(PointMass(3.0), EstimatorConfig("mean", delta=0.0), 10, 500, seed=4)
    assert rep_mean.hits == 0


def test_disappointment_reproducible_across_threads():
    spec = Pareto(2.5, 1.0)
    cfg = EstimatorConfig("kl", schedule=RadiusSchedule.log_n())
    rep1 = disappointment_probability(spec, cfg, 60, 400, seed=5, threads=1)
    rep4 = disappointment_probability(spec, cfg, 60, 400, seed=5, threads=4)
    assert rep1 == rep4


def test_disappointment_bound_column_filled():
    spec = Pareto(2.5, 1.0)
    cfg = EstimatorConfig("kl", schedule=RadiusSchedule.log_n())
    rep = disappointment_probability(spec, cfg, 100, 2000, seed=6)
    assert rep.bound == pytest.approx(0.6503726925914973, rel=1e-12)
    assert rep.p_hat + (rep.ci_hi - rep.ci_lo) / 2 <= rep.bound
    cfg_tr = EstimatorConfig("trunc", a=2.0, A=5.0, lam=3.0)
    rep_tr = disappointment_probability(spec, cfg_tr, 100, 2000, seed=6)
    assert rep_tr.bound == pytest.approx(math.exp(-3.0), rel=1e-12)


def test_conservatism_point_mass_zero():
    # compensator sqrt(2 r) sigma-hat = 0 for a constant sample: never b-conservative
    rep = conservatism_probability(PointMass(2.0), EstimatorConfig("varreg", lam=1.0), 0.5, 10, 300, seed=7)
    assert rep.hits == 0
    with pytest.raises(ValueError):
        conservatism_probability(PointMass(2.0), EstimatorConfig("varreg", lam=1.0), 0.0, 10, 10, seed=7)


def test_conservatism_varreg_bound_column():
    spec = Pareto(2.5, 1.0)
    cfg = EstimatorConfig("varreg", schedule=RadiusSchedule.log_n())
    rep = conservatism_probability(spec, cfg, 0.5, 1000, 100, seed=8)
    n, lam = 1000, math.log(1000)
    expected = n * (0.5 * math.sqrt(n / (2 * lam / n))) ** -2.5
    assert rep.bound == pytest.approx(expected, rel=1e-12)


def test_kl_disappointment_monotone_in_radius():
    spec = Pareto(2.0, 1.0)
    n, trials, seed = 40, 1500, 11
    p_hats = [
        disappointment_probability(spec, EstimatorConfig("kl", r=r), n, trials, seed).p_hat
        for r in (0.005, 0.02, 0.08)
    ]
    assert all(p1 >= p2 for p1, p2 in zip(p_hats, p_hats[1:]))


def test_exact_bernoulli_enumeration_matches_binomial():
    # mean estimator with delta=0: the event mean > mu is K > n/2
    p = exact_bernoulli_event_probability(BERN, EstimatorConfig("mean"), 21, "disappointment")
    expected = float(1.0 - binom.cdf(10, 21, 0.5))
    assert p == pytest.approx(expected, rel=1e-12)
    # conservatism of the plain mean at b = 0.5: K/10.5... mean < 0.5 means K <= 5 at n=21
    pc = exact_bernoulli_event_probability(BERN, EstimatorConfig("mean"), 21, "conservatism", b=0.5)
    expected_c = float(binom.cdf(5, 21, 0.5))
    assert pc == pytest.approx(expected_c, rel=1e-12)


def test_exact_enumeration_agrees_with_monte_carlo():
    cfg = EstimatorConfig("kl", schedule=RadiusSchedule.log_n())
    exact = exact_bernoulli_event_probability(BERN, cfg, 50, "conservatism", b=0.5)
    rep = conservatism_probability(BERN, cfg, 0.5, 50, 4000, seed=12)
    assert rep.ci_lo <= exact <= rep.ci_hi


def test_laplace_transform_closed_forms():
    assert laplace_transform(PointMass(2.0), 1.3) == pytest.approx(math.exp(-2.6), rel=1e-12)
    assert laplace_transform(BERN, 0.7) == pytest.approx(0.5 + 0.5 * math.exp(-1.4), rel=1e-12)
    s = 0.9
    expected_unif = (1.0 - math.exp(-s)) / s
    assert laplace_transform(UniformBounded(0.0, 1.0), s) == pytest.approx(expected_unif, rel=1e-10)
    assert laplace_transform(Pareto(2.5, 1.0), 0.0) == 1.0
    # Pareto transform against a direct Riemann check
    direct = np.trapezoid(
        np.exp(-0.5 * np.linspace(1, 400, 2_000_000))
        * 2.5 * np.linspace(1, 400, 2_000_000) ** -3.5,
        np.linspace(1, 400, 2_000_000),
    )
    assert laplace_transform(Pareto(2.5, 1.0), 0.5) == pytest.approx(direct, rel=1e-5)


def test_cramer_rate_examples():
    assert cramer_rate(BERN, 0.0) == 0.0
    # saturating objective: rate at b = mu is -log P[z = 0]
    assert cramer_rate(BERN, 1.0) == pytest.approx(math.log(2.0), abs=1e-9)
    assert cramer_rate(BERN, 0.5) == pytest.approx(BERN_RATE_HALF, abs=1e-9)
    with pytest.raises(ValueError):
        cramer_rate(BERN, -0.1)


def test_cramer_rate_binomial_cross_check():
    # exact binomial enumeration of P[mean < mu - b] at n = 20
    n, b = 20, 0.5
    p_exact = float(binom.cdf(4, n, 0.5))  # mean < 0.5 means K <= 4
    rate = cramer_rate(BERN, b)
    assert abs(-math.log(p_exact) / n - rate) <= 0.15


def test_cramer_rate_impossible_event_is_infinite():
    # Pareto support starts at 1; mean below mu - b is impossible for b > mu - 1
    assert cramer_rate(Pareto(2.5, 1.0), 0.8) == math.inf


def test_rate_fit_synthetic_powers():
    ns = [10, 100, 1000, 10_000]
    fit = rate_fit([(n, n**-1.5) for n in ns], axis="log-log")
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    fit_lin = rate_fit([(n, math.exp(-0.1 * n)) for n in (10, 20, 30, 40)], axis="log-linear")
    assert fit_lin.slope == pytest.approx(-0.1, abs=1e-12)


def test_rate_fit_requires_three_positive_points():
    with pytest.raises(ValueError):
        rate_fit([(10, 0.1), (100, 0.0), (1000, 0.0)])
    with pytest.raises(ValueError):
        rate_fit([(10, 0.1), (100, 0.01)], axis="nope")


def test_variance_ratio_point_mass_zero():
    curve = variance_ratio_curve(PointMass(2.0), [1e-2, 1e-3])
    assert [ratio for _, ratio in curve] == [0.0, 0.0]


def test_variance_ratio_bounded_near_two():
    (_, ratio), = variance_ratio_curve(BERN, [1e-4])
    assert ratio <= 2.1
    assert ratio == pytest.approx(2.0, abs=0.05)


def test_variance_ratio_pareto_decreasing_toward_limit():
    curve = variance_ratio_curve(Pareto(1.5, 1.0), [1e-2, 1e-3, 1e-4])
    ratios = [ratio for _, ratio in curve]
    limit = pareto_variance_ratio_limit(1.5)
    gaps = [abs(rat - limit) for rat in ratios]
    assert gaps[0] > gaps[1] > gaps[2]
    assert ratios[-1] == pytest.approx(limit, rel=0.05)


def test_pareto_variance_ratio_limit_values():
    # exact small-radius limit 2 (psi(rho) + gamma)/(rho - 1); equals
    # 8 (1 - log 2) at rho = 1.5 and tends to the bounded-case constant 2
    assert pareto_variance_ratio_limit(1.5) == pytest.approx(8.0 * (1.0 - math.log(2.0)), rel=1e-12)
    assert pareto_variance_ratio_limit(1.999) == pytest.approx(2.0, abs=2e-3)
    with pytest.raises(ValueError):
        pareto_variance_ratio_limit(2.5)


def test_population_dual_radius_too_large():
    with pytest.raises(ValueError):
        solve_population_dual(Pareto(1.5, 1.0), 50.0, max_atilde=1e6)


def test_csv_and_json_serialization():
    rep = TrialReport("kl", 100, 1000, 3, 0.003, 0.001, 0.008, 0.65, 7)
    rep_none = TrialReport("mean", 10, 100, 0, 0.0, 0.0, 0.03, None, 7)
    text = reports_to_csv([rep, rep_none], header_lines=["safemean test", "seed: 7"])
    lines = text.strip().split("\n")
    assert lines[0] == "# safemean test"
    assert lines[2] == "estimator,n,trials,hits,p_hat,ci_lo,ci_hi,bound,seed"
    assert lines[3].startswith("kl,100,1000,3,")
    assert lines[4].endswith(",7") and ",," in lines[4]  # empty bound cell
    doc = json.loads(reports_to_json([rep], meta={"note": "x"}))
    assert doc["reports"][0]["estimator_id"] == "kl"
    assert doc["meta"]["note"] == "x"
