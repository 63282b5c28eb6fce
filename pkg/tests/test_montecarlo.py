import math

import numpy as np
import pytest

from caperc.colored_graph import ColorParams
from caperc.errors import DomainError, RegimeError, ResourceError
from caperc.montecarlo import (
    ExperimentConfig,
    TrialRecord,
    black_cluster_max,
    bootstrap_ci,
    config_from_mapping,
    covariance_ci,
    critical_tightness,
    giant_sandwich_check,
    independence_check,
    max_ca_scaling,
    nu_hat,
    parse_config_text,
    poisson_gof,
    run,
    single_layer_max_component,
)
from caperc.theory import Regime, a1, mu, rate_I

from finite_size import expected_max_marked

SUB = ColorParams((0.3, 0.3, 0.3))


# --- configuration -----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(SUB, 100, 0, 1)
    with pytest.raises(DomainError):
        ExperimentConfig(None, 100, 1, 1)
    with pytest.raises(DomainError):
        ExperimentConfig(SUB, 100, 1, 1, measurements={"bogus"})
    with pytest.raises(DomainError):
        ExperimentConfig(None, 100, 1, 1, measurements={"black_clusters"}, lambda_single=0.5)
    with pytest.raises(DomainError):
        ExperimentConfig(SUB, 100, 1, 1, max_cycle_len=25)


def test_resource_guard():
    cfg = ExperimentConfig(SUB, 10**6, 2000, 1)
    with pytest.raises(ResourceError):
        run(cfg)


def test_config_text():
    text = """
    # subcritical smoke run
    lambdas = 0.3, 0.3, 0.3
    n = 1000
    trials: 3
    seed = 9
    measurements = ca,census
    """
    values = parse_config_text(text)
    cfg = config_from_mapping(values)
    assert cfg.params == SUB and cfg.n == 1000 and cfg.trials == 3 and cfg.master_seed == 9
    assert cfg.measurements == {"ca", "census"}
    with pytest.raises(DomainError):
        parse_config_text("colours = 3")
    with pytest.raises(DomainError):
        parse_config_text("n = ten")


# --- run ---------------------------------------------------------------------------


def test_run_is_deterministic():
    cfg = ExperimentConfig(SUB, 2000, 4, 17, measurements={"ca", "census", "components"})
    a = run(cfg).records
    b = run(cfg).records
    c = run(cfg, workers=4).records
    assert [r.to_json() for r in a] == [r.to_json() for r in b] == [r.to_json() for r in c]
    assert [r.trial_index for r in c] == [0, 1, 2, 3]


def test_trial_depends_only_on_index():
    short = run(ExperimentConfig(SUB, 2000, 2, 17)).records
    long = run(ExperimentConfig(SUB, 2000, 5, 17)).records
    assert [r.to_json() for r in short] == [r.to_json() for r in long[:2]]


def test_partition_identity():
    res = run(ExperimentConfig(SUB, 10**5, 100, 3))
    for r in res.records:
        assert sum(l * c for l, c in r.N.items()) == 10**5
        assert r.max_ca_size == max(l for l, c in r.N.items() if c)


def test_record_json_roundtrip():
    cfg = ExperimentConfig(SUB, 3000, 2, 5, measurements={"ca", "census", "components"}, lambda_single=0.5)
    for r in run(cfg).records:
        assert TrialRecord.from_json(r.to_json()).to_json() == r.to_json()


def test_summary_standard_error():
    res = run(ExperimentConfig(ColorParams((1.5, 0.5)), 2000, 12, 2))
    s = res.summary.stats["max_ca"]
    vals = np.array([r.max_ca_size for r in res.records], float)
    assert s.mean == pytest.approx(vals.mean())
    assert s.se == pytest.approx(math.sqrt(vals.var(ddof=1) / len(vals)))
    assert sum(s.distribution.values()) == pytest.approx(1.0)
    lines = res.summary.csv().splitlines()
    assert lines[0] == "name,mean,se,p_value"


def test_z_statistic():
    res = run(ExperimentConfig(None, 5000, 3, 1, measurements={"components"}, lambda_single=0.5))
    for r in res.records:
        assert r.z_at(1) == r.n
        assert r.z_at(r.single_max) >= r.single_max
        assert r.z_at(r.single_max + 1) == 0
        sizes = sorted(r.Z)
        assert all(r.Z[a] > r.Z[b] for a, b in zip(sizes, sizes[1:]))


def test_conjectural_tag():
    p = ColorParams((0.8, 0.5, 0.45))
    res = run(ExperimentConfig(p, 2000, 3, 1))
    assert res.summary.notes.get("max_ca_scaling") == "conjectural"
    assert max_ca_scaling(res.records, "log n", Regime.INTERMEDIATE).tag == "conjectural"


# --- statistics ----------------------------------------------------------------------


def test_poisson_gof_calibrated():
    rng = np.random.default_rng(8)
    ok = sum(poisson_gof(rng.poisson(0.3, 10_000), 0.3).p_value >= 0.01 for _ in range(200))
    assert ok >= 0.95 * 200


def test_poisson_gof_degenerate():
    assert poisson_gof(np.zeros(10_000, dtype=int), 1.0).p_value < 1e-6


def test_poisson_gof_pooling():
    g = poisson_gof(np.random.default_rng(1).poisson(2.0, 1000), 2.0)
    assert min(g.expected) >= 5.0
    assert sum(g.observed) == 1000
    assert g.dof == len(g.observed) - 1


def test_poisson_gof_errors():
    with pytest.raises(DomainError):
        poisson_gof([0] * 499, 1.0)
    with pytest.raises(DomainError):
        poisson_gof([0] * 600, 0.0)


def test_covariance_duplicated():
    x = np.random.default_rng(2).poisson(1.0, 500)
    est = covariance_ci(x, x)
    assert est.mean == pytest.approx(np.var(x, ddof=1))
    assert est.mean > 0 and not est.contains(0.0)


def test_covariance_independent():
    rng = np.random.default_rng(3)
    assert covariance_ci(rng.poisson(1.0, 2000), rng.poisson(1.0, 2000)).contains(0.0)


def test_bootstrap_ci_brackets_mean():
    x = np.random.default_rng(4).normal(1.0, 1.0, 400)
    lo, hi = bootstrap_ci(x)
    assert lo < x.mean() < hi
    assert hi - lo == pytest.approx(2 * 1.96 / 20, rel=0.25)


def test_estimators_need_records():
    with pytest.raises(DomainError):
        max_ca_scaling([], "n")
    with pytest.raises(DomainError):
        nu_hat([], 1)
    with pytest.raises(DomainError):
        independence_check([], (2, 3))
    with pytest.raises(DomainError):
        independence_check([TrialRecord(0, 10, 0)], (2, 2))


# --- single layer and marked clusters ----------------------------------------------------


def test_single_layer_domain():
    with pytest.raises(DomainError):
        single_layer_max_component(1000, 1.0, 2, 0)
    with pytest.raises(DomainError):
        black_cluster_max(1000, 0.5, 1.0, 2, 0)
    with pytest.raises(DomainError):
        giant_sandwich_check(1000, 1.0, 0.1, 2, 0)


def test_tail_bound():
    lam = 0.5
    res = single_layer_max_component(10**5, lam, 20, 11)
    i_lam = rate_I(lam)
    top = max(r.single_max for r in res.records)
    for t in range(2, top + 2):
        est = res.tail(t)
        # P(|C(u)| >= t) = P(|C(u)| > t - 1) <= exp(-I (t - 1))
        assert est.mean <= math.exp(-i_lam * (t - 1)) + 4 * est.se


def test_cluster_mass_trend():
    # Z_s at s = 3 log n against the Borel expectation n P(|C| >= s); the
    # exponent log(E Z_s) / log n stays below 1 - I a with a = 3
    lam = 0.5
    i_lam = rate_I(lam)
    exponents = []
    for n, trials in ((10**4, 1000), (10**5, 400), (10**6, 100)):
        s = math.ceil(3 * math.log(n))
        res = single_layer_max_component(n, lam, trials, 12)
        z = np.array([r.z_at(s) for r in res.records], float)
        expect = n * borel_tail(lam, s)
        assert abs(z.mean() - expect) <= 4 * z.std(ddof=1) / math.sqrt(trials) + 1e-9
        exponents.append(math.log(expect) / math.log(n))
    assert all(e < 1 - i_lam * 3 for e in exponents)
    assert exponents[0] < exponents[1] < exponents[2]


def borel_tail(lam, s):
    k = np.arange(1, s)
    logp = -lam * k + (k - 1) * np.log(lam * k) - np.cumsum(np.log(k))
    return 1.0 - float(np.exp(logp).sum())


@pytest.mark.parametrize("n", [10**4, 10**5])
def test_single_layer_matches_finite_size_oracle(n):
    res = single_layer_max_component(n, 0.5, 60, 13)
    assert res.ratio.mean * math.log(n) == pytest.approx(expected_max_marked(n, 0.5), rel=0.1)


@pytest.mark.parametrize("n", [10**4, 10**5])
def test_black_cluster_matches_finite_size_oracle(n):
    est = black_cluster_max(n, 0.5, 0.5, 60, 14)
    assert est.mean * math.log(n) == pytest.approx(expected_max_marked(n, 0.5, 0.5), rel=0.1)


def test_black_cluster_limits():
    n = 10**5
    full = single_layer_max_component(n, 0.5, 20, 15).ratio.mean
    assert black_cluster_max(n, 0.5, 0.99, 20, 15).mean == pytest.approx(full, rel=0.1)
    small_n = 10**4
    ref = single_layer_max_component(small_n, 0.5, 20, 16).ratio.mean
    assert black_cluster_max(small_n, 0.5, 0.01, 20, 16).mean <= ref


def test_giant_too_tight_fails():
    rep = giant_sandwich_check(1000, 1.5, 1e-5, 20, 3)
    assert not rep.passed
    assert rep.mu == pytest.approx(mu(1.5))


# --- CA estimators -------------------------------------------------------------------------


def test_nu_subcritical():
    res = run(ExperimentConfig(SUB, 10**5, 20, 21))
    est = nu_hat(res.records, 1)
    assert 0.999 <= est.mean <= 1.0


def test_nu_supercritical_sum():
    p = ColorParams((1.5, 1.5))
    res = run(ExperimentConfig(p, 10**5, 10, 22))
    total = sum(nu_hat(res.records, l).mean for l in range(1, 51))
    assert total + a1(p) == pytest.approx(1.0, abs=0.02)


def test_nu_intermediate_positive():
    res = run(ExperimentConfig(ColorParams((1.5, 0.5)), 10**5, 20, 23))
    assert nu_hat(res.records, 2).ci[0] > 0


def test_intermediate_structure():
    res = run(ExperimentConfig(ColorParams((1.5, 0.5)), 10**5, 20, 24))
    blocks = sum(c for r in res.records for l, c in r.N.items() if l >= 3)
    bad = sum(r.structure_violations for r in res.records)
    assert blocks > 0 and bad <= 0.01 * blocks


def test_intermediate_matches_finite_size_oracle():
    # largest CA-block ~ most giant-of-G_1 vertices inside one component of G_2
    n = 10**5
    res = run(ExperimentConfig(ColorParams((1.5, 0.5)), n, 40, 25))
    got = max_ca_scaling(res.records, "log n").mean * math.log(n)
    assert got == pytest.approx(expected_max_marked(n, 0.5, mu(1.5)), rel=0.1)


def test_critical_tightness_contract():
    with pytest.raises(RegimeError):
        critical_tightness(SUB, [1000], 2, 0)
    rep = critical_tightness(ColorParams((1.0, 0.5)), [1000, 10_000], 30, 5)
    assert [r.n for r in rep.rows] == [1000, 10_000]
    assert all(r.q50 <= r.q90 <= r.q99 for r in rep.rows)
    assert max(max(r.maxima) for r in rep.rows) >= 2
    assert rep.csv().splitlines()[0] == "n,q50,q90,q99"
