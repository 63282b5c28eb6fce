"""Reproducible Monte Carlo trials and the estimators built on them.

Trial ``t`` of a run draws everything from ``derive_seed(master_seed, 1, t)``,
so records depend on the trial index only and never on scheduling or on the
number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .ca_components import ca_partition, component_labels, components_avoiding
from .colored_graph import SEED_POLICY, ColorParams, derive_seed, generate, rng_for, sample_er_edges, view
from .errors import DomainError, RegimeError, ResourceError
from .structure_census import DEFAULT_MAX_LEN, MAX_LEN_CAP, CensusResult, census
from .theory import Regime, classify_regime, mu

MEASUREMENTS = frozenset({"ca", "census", "components", "black_clusters"})
TRIAL_STREAM = 1
SINGLE_LAYER_STREAM = 1
MARK_STREAM = 2
DEFAULT_MAX_WORK = 10**9
BOOTSTRAP_RESAMPLES = 1000


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    params: ColorParams | None
    n: int
    trials: int
    master_seed: int
    max_cycle_len: int = DEFAULT_MAX_LEN
    measurements: frozenset[str] = frozenset({"ca"})
    q_black: float | None = None
    lambda_single: float | None = None
    max_work: int = DEFAULT_MAX_WORK

    def __post_init__(self):
        object.__setattr__(self, "measurements", frozenset(self.measurements))
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise DomainError("trials must be at least 1")
        if self.n < 2:
            raise DomainError("n must be at least 2")
        unknown = self.measurements - MEASUREMENTS
        if unknown:
            raise DomainError(f"unknown measurements {sorted(unknown)}")
        if not self.measurements:
            raise DomainError("no measurement requested")
        if {"ca", "census"} & self.measurements and self.params is None:
            raise DomainError("ca and census measurements need lambdas")
        if "components" in self.measurements and self.params is None and self.lambda_single is None:
            raise DomainError("components measurement needs lambdas or lambda_single")
        if "black_clusters" in self.measurements:
            if self.q_black is None or self.lambda_single is None:
                raise DomainError("black_clusters needs q_black and lambda_single")
        if self.q_black is not None and not 0 < self.q_black < 1:
            raise DomainError(f"q_black must lie in (0, 1), got {self.q_black}")
        if self.lambda_single is not None and not 0 < self.lambda_single <= self.n:
            raise DomainError(f"lambda_single must lie in (0, n], got {self.lambda_single}")
        if not 3 <= self.max_cycle_len <= MAX_LEN_CAP:
            raise DomainError(f"max_cycle_len must be in [3, {MAX_LEN_CAP}]")
        if self.params is not None:
            for lam in self.params.lambdas:
                if lam > self.n:
                    raise DomainError(f"lambda {lam} exceeds n")

    def check_resources(self):
        if self.n * self.trials > self.max_work:
            raise ResourceError(f"n * trials = {self.n * self.trials} exceeds the guard {self.max_work}")

    @property
    def regime(self) -> Regime | None:
        return classify_regime(self.params) if self.params is not None else None

    def to_json(self) -> dict:
        return {
            "lambdas": list(self.params.lambdas) if self.params else None,
            "lambdas_input": list(self.params.input_order) if self.params else None,
            "n": self.n,
            "trials": self.trials,
            "seed": self.master_seed,
            "seed_policy": SEED_POLICY,
            "max_cycle_len": self.max_cycle_len,
            "measurements": sorted(self.measurements),
            "q_black": self.q_black,
            "lambda_single": self.lambda_single,
            "regime": self.regime.value if self.params else None,
        }


_CONFIG_KEYS = {"lambdas", "n", "trials", "seed", "max_cycle_len", "measurements", "q_black", "lambda_single"}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` (or ``key: value``) text; ``#`` starts a comment."""
    out: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        key, _, value = line.partition(sep)
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise DomainError(f"unknown config key {key!r}")
        try:
            if key == "lambdas":
                out[key] = ColorParams.parse(value)
            elif key == "measurements":
                out[key] = frozenset(v.strip() for v in value.split(",") if v.strip())
            elif key in ("q_black", "lambda_single"):
                out[key] = float(value)
            else:
                out[key] = int(value)
        except ValueError as exc:
            raise DomainError(f"bad value for {key}: {value!r}") from exc
    return out


def config_from_mapping(values: dict) -> ExperimentConfig:
    return ExperimentConfig(
        params=values.get("lambdas"),
        n=values.get("n", 0),
        trials=values.get("trials", 1),
        master_seed=values.get("seed", 0),
        max_cycle_len=values.get("max_cycle_len", DEFAULT_MAX_LEN),
        measurements=values.get("measurements", frozenset({"ca"})),
        q_black=values.get("q_black"),
        lambda_single=values.get("lambda_single"),
    )


# ----------------------------------------------------------------------------
# trials


@dataclass
class TrialRecord:
    trial_index: int
    n: int
    seed: int
    max_ca_size: int | None = None
    N: dict[int, int] = field(default_factory=dict)
    census: CensusResult | None = None
    max_component_sizes: tuple[int, ...] | None = None
    Z: dict[int, int] | None = None
    single_max: int | None = None
    black_max: int | None = None
    structure_violations: int | None = None

    def to_json(self) -> dict:
        return {
            "trial": self.trial_index,
            "n": self.n,
            "seed": self.seed,
            "max_ca_size": self.max_ca_size,
            "N": {str(l): c for l, c in sorted(self.N.items())},
            "census": self.census.to_json() if self.census is not None else None,
            "max_component_sizes": list(self.max_component_sizes) if self.max_component_sizes is not None else None,
            "Z": {str(s): z for s, z in sorted(self.Z.items())} if self.Z is not None else None,
            "single_max": self.single_max,
            "black_max": self.black_max,
            "structure_violations": self.structure_violations,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrialRecord":
        return cls(
            trial_index=obj["trial"],
            n=obj["n"],
            seed=obj["seed"],
            max_ca_size=obj["max_ca_size"],
            N={int(l): c for l, c in obj["N"].items()},
            census=CensusResult.from_json(obj["census"]) if obj["census"] is not None else None,
            max_component_sizes=tuple(obj["max_component_sizes"]) if obj["max_component_sizes"] is not None else None,
            Z={int(s): z for s, z in obj["Z"].items()} if obj["Z"] is not None else None,
            single_max=obj["single_max"],
            black_max=obj["black_max"],
            structure_violations=obj["structure_violations"],
        )

    def z_at(self, s: int) -> int:
        """Number of vertices of the single-layer graph in components of size >= s."""
        if self.Z is None:
            raise DomainError("record has no single-layer component data")
        above = [size for size in self.Z if size >= s]
        return self.Z[min(above)] if above else 0


def intermediate_violations(g, report) -> int:
    """CA-blocks of size >= 3 not inside one component of G_k and one of G^k."""
    k = g.k
    sizes = report.partition.sizes()
    big = sizes[report.partition.label] >= 3
    if not big.any():
        return 0
    lab = report.partition.label[big]
    only_k = component_labels(g.n, view(g, only=[k - 1]).edges)[big]
    avoid_k = report.avoided_partitions[k - 1].label[big]
    bad = 0
    for labels in (only_k, avoid_k):
        order = np.lexsort((labels, lab))
        l_sorted, o_sorted = lab[order], labels[order]
        same_block = l_sorted[1:] == l_sorted[:-1]
        split = same_block & (o_sorted[1:] != o_sorted[:-1])
        bad_blocks = set(l_sorted[1:][split].tolist())
        bad += len(bad_blocks)
    return bad


def run_trial(config: ExperimentConfig, t: int) -> TrialRecord:
    seed = derive_seed(config.master_seed, TRIAL_STREAM, t)
    rec = TrialRecord(trial_index=t, n=config.n, seed=seed)
    meas = config.measurements
    if config.params is not None and meas & {"ca", "census", "components"}:
        g = generate(config.params, config.n, seed)
        report = None
        if "ca" in meas:
            report = ca_partition(g)
            rec.max_ca_size = report.max_size
            rec.N = dict(report.histogram)
            if config.regime is Regime.INTERMEDIATE_STRICT:
                rec.structure_violations = intermediate_violations(g, report)
        if "components" in meas:
            avoided = report.avoided_partitions if report else [components_avoiding(g, i) for i in range(g.k)]
            rec.max_component_sizes = tuple(int(p.sizes().max()) for p in avoided)
        if "census" in meas:
            rec.census = census(g, config.max_cycle_len)
    if config.lambda_single is not None and meas & {"components", "black_clusters"}:
        n = config.n
        keys = sample_er_edges(rng_for(seed, SINGLE_LAYER_STREAM), n, config.lambda_single / n)
        edges = np.stack([keys // n, keys % n], axis=1)
        labels = component_labels(n, edges)
        comp_sizes = np.bincount(labels, minlength=n)
        if "components" in meas:
            rec.single_max = int(comp_sizes.max())
            hist = np.bincount(comp_sizes[comp_sizes > 0])
            distinct = np.flatnonzero(hist)
            mass = (distinct * hist[distinct])[::-1].cumsum()[::-1]
            rec.Z = {int(s): int(z) for s, z in zip(distinct, mass)}
        if "black_clusters" in meas:
            marks = rng_for(seed, MARK_STREAM).random(n) < config.q_black
            rec.black_max = int(np.bincount(labels, weights=marks, minlength=n).max())
    return rec


def _run_chunk(args):
    config, indices = args
    return [run_trial(config, t) for t in indices]


@dataclass
class Estimate:
    mean: float
    se: float
    ci: tuple[float, float]
    count: int
    tag: str | None = None

    def contains(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]


@dataclass
class Stat:
    mean: float
    variance: float
    se: float
    count: int
    distribution: dict[int, float] | None = None


@dataclass
class GofResult:
    statistic: float
    p_value: float
    dof: int
    observed: list[int]
    expected: list[float]


@dataclass
class SummaryStats:
    stats: dict[str, Stat]
    gof: dict[str, GofResult]
    notes: dict[str, str] = field(default_factory=dict)

    def csv(self) -> str:
        lines = ["name,mean,se,p_value"]
        for name in sorted(self.stats):
            s = self.stats[name]
            p = self.gof[name].p_value if name in self.gof else ""
            lines.append(f"{name},{_fmt(s.mean)},{_fmt(s.se)},{_fmt(p) if p != '' else ''}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "stats": {
                k: {"mean": s.mean, "variance": s.variance, "se": s.se, "count": s.count,
                    "distribution": {str(v): f for v, f in s.distribution.items()} if s.distribution else None}
                for k, s in sorted(self.stats.items())
            },
            "gof": {k: {"statistic": g.statistic, "p_value": g.p_value, "dof": g.dof} for k, g in sorted(self.gof.items())},
            "notes": dict(self.notes),
        }


def _fmt(x) -> str:
    return f"{float(x):.12g}"


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[TrialRecord]
    summary: SummaryStats


def run(config: ExperimentConfig, workers: int = 1, allow_large: bool = False) -> RunResult:
    """Run every trial of ``config``; records come back ordered by trial index."""
    config.validate()
    if not allow_large:
        config.check_resources()
    indices = list(range(config.trials))
    if workers <= 1 or config.trials == 1:
        records = [run_trial(config, t) for t in indices]
    else:
        chunks = [indices[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(config, c) for c in chunks if c]))
        records = sorted((r for part in parts for r in part), key=lambda r: r.trial_index)
    return RunResult(config, records, summarize(config, records))


# ----------------------------------------------------------------------------
# summaries


def describe(values) -> Stat:
    arr = np.asarray(values, dtype=float)
    count = len(arr)
    mean = float(arr.mean()) if count else math.nan
    var = float(arr.var(ddof=1)) if count > 1 else 0.0
    dist = None
    if count and np.all(arr == np.round(arr)):
        uniq, cnt = np.unique(arr.astype(np.int64), return_counts=True)
        if len(uniq) <= 64:
            dist = {int(u): c / count for u, c in zip(uniq, cnt)}
    return Stat(mean, var, math.sqrt(var / count) if count else math.nan, count, dist)


def summarize(config: ExperimentConfig, records: list[TrialRecord]) -> SummaryStats:
    cols: dict[str, list[float]] = {}

    def add(name, value):
        cols.setdefault(name, []).append(value)

    ells = sorted({l for r in records for l in r.N})
    for r in records:
        if r.max_ca_size is not None:
            add("max_ca", r.max_ca_size)
            for l in ells:
                add(f"N_{l}", r.N.get(l, 0))
        if r.census is not None:
            add("C_2", r.census.c2)
            for m, c in r.census.cm.items():
                add(f"C_{m}", c)
            for l, c in r.census.y.items():
                add(f"Y_{l}", c)
            add("flags", len(r.census.flags))
        if r.max_component_sizes is not None:
            for i, s in enumerate(r.max_component_sizes):
                add(f"max_avoid_{i}", s)
        if r.single_max is not None:
            add("single_max", r.single_max)
        if r.black_max is not None:
            add("black_max", r.black_max)
        if r.structure_violations is not None:
            add("structure_violations", r.structure_violations)
    stats_ = {name: describe(vals) for name, vals in cols.items()}
    gof: dict[str, GofResult] = {}
    notes: dict[str, str] = {}
    reg = config.regime
    if reg is Regime.INTERMEDIATE:
        notes["max_ca_scaling"] = "conjectural"
    if reg is Regime.SUBCRITICAL and len(records) >= 500:
        from .theory import beta_top, gamma_m

        k = config.params.k
        if "max_ca" in cols:
            gof[f"N_{k}"] = poisson_gof([r.N.get(k, 0) for r in records], beta_top(config.params))
        if "C_2" in cols:
            gof["C_2"] = poisson_gof(cols["C_2"], gamma_m(config.params, 2))
            for m in range(3, config.max_cycle_len + 1):
                lam = gamma_m(config.params, m)
                if f"C_{m}" in cols and lam * len(records) >= 5:
                    gof[f"C_{m}"] = poisson_gof(cols[f"C_{m}"], lam)
    return SummaryStats(stats_, gof, notes)


# ----------------------------------------------------------------------------
# statistics


def bootstrap_ci(values, statistic=np.mean, resamples: int = BOOTSTRAP_RESAMPLES, level: float = 0.95, seed: int = 0):
    """Percentile bootstrap interval of ``statistic`` over the rows of ``values``."""
    arr = np.asarray(values, dtype=float)
    if len(arr) == 0:
        raise DomainError("bootstrap of an empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(arr), size=(resamples, len(arr)))
    reps = np.array([statistic(arr[i]) for i in idx])
    alpha = (1 - level) / 2
    return float(np.quantile(reps, alpha)), float(np.quantile(reps, 1 - alpha))


def estimate(values, *, level: float = 0.95, seed: int = 0, tag: str | None = None) -> Estimate:
    arr = np.asarray(values, dtype=float)
    if len(arr) == 0:
        raise DomainError("no records")
    d = describe(arr)
    return Estimate(d.mean, d.se, bootstrap_ci(arr, level=level, seed=seed), d.count, tag)


def poisson_gof(samples, mean: float, min_expected: float = 5.0) -> GofResult:
    """Chi-square test of integer samples against Poisson(mean).

    Adjacent values are pooled left to right until every bin expects at
    least ``min_expected`` observations; the last bin absorbs the upper tail.
    """
    x = np.asarray(samples, dtype=np.int64)
    if len(x) < 500:
        raise DomainError(f"poisson_gof needs at least 500 samples, got {len(x)}")
    if not mean > 0:
        raise DomainError("Poisson mean must be positive")
    total = len(x)
    top = max(int(x.max()), int(stats.poisson.ppf(1 - 1e-12, mean))) + 1
    obs_by_value = np.bincount(x, minlength=top + 1)
    probs = stats.poisson.pmf(np.arange(top + 1), mean)
    probs[-1] += stats.poisson.sf(top, mean)
    edges = []  # (lo, hi) value ranges, hi inclusive
    lo = 0
    acc = 0.0
    for v in range(top + 1):
        acc += probs[v] * total
        if acc >= min_expected:
            edges.append([lo, v])
            lo, acc = v + 1, 0.0
    if lo <= top:
        if edges:
            edges[-1][1] = top
        else:
            edges.append([0, top])
    observed = [int(obs_by_value[a : b + 1].sum()) for a, b in edges]
    expected = [float(probs[a : b + 1].sum() * total) for a, b in edges]
    if len(edges) < 2:
        return GofResult(0.0, 1.0, 0, observed, expected)
    # renormalize so both vectors have the same total
    scale = total / sum(expected)
    expected = [e * scale for e in expected]
    res = stats.chisquare(observed, expected)
    return GofResult(float(res.statistic), float(res.pvalue), len(edges) - 1, observed, expected)


def covariance_ci(x, y, *, level: float = 0.95, seed: int = 0) -> Estimate:
    xy = np.column_stack([np.asarray(x, float), np.asarray(y, float)])
    if len(xy) < 2:
        raise DomainError("covariance needs at least two samples")

    def cov(rows):
        return float(np.cov(rows[:, 0], rows[:, 1])[0, 1])

    point = cov(xy)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(xy), size=(BOOTSTRAP_RESAMPLES, len(xy)))
    reps = np.array([cov(xy[i]) for i in idx])
    alpha = (1 - level) / 2
    ci = (float(np.quantile(reps, alpha)), float(np.quantile(reps, 1 - alpha)))
    return Estimate(point, float(reps.std(ddof=1)), ci, len(xy))


# ----------------------------------------------------------------------------
# estimators


def _nonempty(records):
    if not records:
        raise DomainError("no records")


def max_ca_scaling(records: list[TrialRecord], normalization: str = "n", regime: Regime | None = None) -> Estimate:
    """Mean of the largest CA-component over ``n`` or over ``log n``."""
    _nonempty(records)
    if normalization == "n":
        vals = [r.max_ca_size / r.n for r in records]
    elif normalization in ("log n", "log"):
        vals = [r.max_ca_size / math.log(r.n) for r in records]
    else:
        raise DomainError(f"unknown normalization {normalization!r}")
    return estimate(vals, tag="conjectural" if regime is Regime.INTERMEDIATE else None)


def independence_check(records: list[TrialRecord], pair: tuple[int, int], level: float = 0.95) -> Estimate:
    l1, l2 = pair
    if l1 == l2:
        raise DomainError("independence check needs two different sizes")
    _nonempty(records)
    return covariance_ci([r.N.get(l1, 0) for r in records], [r.N.get(l2, 0) for r in records], level=level)


def nu_hat(records: list[TrialRecord], ell: int) -> Estimate:
    """Fraction of vertices in CA-components of size ``ell``."""
    _nonempty(records)
    return estimate([ell * r.N.get(ell, 0) / r.n for r in records])


@dataclass
class SingleLayerResult:
    lam: float
    ratio: Estimate
    records: list[TrialRecord]

    def tail(self, t: int) -> Estimate:
        """Empirical P(|C(u)| >= t) from Z_t / n across trials."""
        return estimate([r.z_at(t) / r.n for r in self.records])


def single_layer_max_component(n: int, lam: float, trials: int, seed: int, workers: int = 1) -> SingleLayerResult:
    """Largest component of G(n, lam/n) over log n, for subcritical lam."""
    if not 0 < lam < 1:
        raise DomainError(f"single-layer scaling needs 0 < lambda < 1, got {lam}")
    cfg = ExperimentConfig(None, n, trials, seed, measurements=frozenset({"components"}), lambda_single=lam)
    res = run(cfg, workers)
    ratio = estimate([r.single_max / math.log(n) for r in res.records])
    return SingleLayerResult(lam, ratio, res.records)


def black_cluster_max(n: int, lam: float, q: float, trials: int, seed: int, workers: int = 1) -> Estimate:
    """Most marked vertices in one component of G(n, lam/n), over log n."""
    if not 0 < lam < 1:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")
    if not 0 < q < 1:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    cfg = ExperimentConfig(
        None, n, trials, seed, measurements=frozenset({"black_clusters", "components"}), q_black=q, lambda_single=lam
    )
    res = run(cfg, workers)
    est = estimate([r.black_max / math.log(n) for r in res.records])
    est.tag = None
    return est


@dataclass
class SandwichReport:
    lam: float
    mu: float
    eps: float
    fractions: list[float]
    within: float
    passed: bool


def giant_sandwich_check(n: int, lam: float, eps: float, trials: int, seed: int, workers: int = 1,
                         threshold: float = 0.95) -> SandwichReport:
    """Share of trials whose giant fraction lies within ``eps`` of mu(lam)."""
    if not lam > 1:
        raise DomainError(f"giant check needs lambda > 1, got {lam}")
    if not eps > 0:
        raise DomainError("eps must be positive")
    cfg = ExperimentConfig(None, n, trials, seed, measurements=frozenset({"components"}), lambda_single=lam)
    res = run(cfg, workers)
    m = mu(lam)
    fr = [r.single_max / n for r in res.records]
    within = float(np.mean([abs(f - m) <= eps for f in fr]))
    return SandwichReport(lam, m, eps, fr, within, within >= threshold)


@dataclass
class TightnessRow:
    n: int
    q50: int
    q90: int
    q99: int
    maxima: list[int]


@dataclass
class TightnessReport:
    rows: list[TightnessRow]
    growth: bool

    def csv(self) -> str:
        lines = ["n,q50,q90,q99"]
        lines += [f"{r.n},{r.q50},{r.q90},{r.q99}" for r in self.rows]
        return "\n".join(lines) + "\n"


def quantiles(values, qs=(0.5, 0.9, 0.99)) -> list[int]:
    return [int(np.quantile(np.asarray(values), q, method="inverted_cdf")) for q in qs]


def critical_tightness(params: ColorParams, ns, trials: int, seed: int, workers: int = 1) -> TightnessReport:
    """Quantiles of the largest CA-component per n at lambda_k^* = 1 > lambda_{k-1}^*."""
    reg = classify_regime(params)
    if reg is not Regime.CRITICAL_BOTTOM:
        raise RegimeError(f"critical tightness needs the critical-bottom regime, got {reg.value}")
    rows = []
    for j, n in enumerate(ns):
        cfg = ExperimentConfig(params, int(n), trials, derive_seed(seed, 3, j))
        res = run(cfg, workers)
        maxima = [r.max_ca_size for r in res.records]
        q50, q90, q99 = quantiles(maxima)
        rows.append(TightnessRow(int(n), q50, q90, q99, maxima))
    growth = any(b.q90 >= 2 * a.q90 for a, b in zip(rows, rows[1:]))
    return TightnessReport(rows, growth)


def with_n(config: ExperimentConfig, n: int, seed: int | None = None) -> ExperimentConfig:
    return replace(config, n=n, master_seed=config.master_seed if seed is None else seed)
