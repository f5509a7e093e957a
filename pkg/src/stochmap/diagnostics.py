"""Effective sample size, normalized timings, and run comparisons.

The primary ESS estimator fits an autoregressive model to the series
(Yule-Walker via Levinson-Durbin, order chosen by AIC) and reads the
spectral density at frequency zero off the fitted model; ESS is
N * variance / spectral density.  A batch-means estimator is provided as
an independent cross-check.  Comparison reports give autocorrelation-
adjusted z-scores for means and total-variation distances for
integer-valued statistics.
"""

import json
from collections import OrderedDict

import numpy as np

_MIN_LENGTH = 100


def _check_series(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if x.size < _MIN_LENGTH:
        raise ValueError("series too short: %d < %d" % (x.size, _MIN_LENGTH))
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    return x


def ess(series):
    """Effective sample size via an AR fit to the series.

    Autocovariances feed a Levinson-Durbin recursion; the AR order is
    chosen by AIC up to 10*log10(N).  The spectral density at zero is the
    small-sample-corrected innovation variance divided by (1 - sum of AR
    coefficients)^2, and ESS = N * var / spec0.  A constant series
    returns N by convention.  The estimate is not capped: values can
    exceed N by estimation noise.
    """
    x = _check_series(series)
    n = x.size
    if np.all(x == x[0]):  # demeaning a constant leaves rounding residue
        return float(n)
    x = x - x.mean()
    c0 = float(x @ x) / n
    order_max = int(min(n - 1, np.floor(10.0 * np.log10(n))))
    c = np.empty(order_max + 1)
    c[0] = c0
    for k in range(1, order_max + 1):
        c[k] = float(x[:-k] @ x[k:]) / n

    # Levinson-Durbin, tracking the AIC-best order
    phi = np.zeros(order_max + 1)
    prev = np.zeros(order_max + 1)
    v = c0
    best_aic = n * np.log(v)
    best_order = 0
    best_v = v
    best_phi_sum = 0.0
    for p in range(1, order_max + 1):
        acc = c[p]
        for j in range(1, p):
            acc -= phi[j] * c[p - j]
        k = acc / v
        prev[1:p] = phi[1:p]
        phi[p] = k
        for j in range(1, p):
            phi[j] = prev[j] - k * prev[p - j]
        v *= 1.0 - k * k
        if v <= 0.0:
            break
        aic = n * np.log(v) + 2.0 * p
        if aic < best_aic:
            best_aic = aic
            best_order = p
            best_v = v
            best_phi_sum = float(phi[1:p + 1].sum())

    var_pred = best_v * n / (n - (best_order + 1))
    spec0 = var_pred / (1.0 - best_phi_sum) ** 2
    variance = c0 * n / (n - 1)
    return float(n * variance / spec0)


def ess_batch_means(series):
    """Cross-check ESS estimator from sqrt(N)-sized batch means."""
    x = _check_series(series)
    n = x.size
    if np.all(x == x[0]):
        return float(n)
    variance = x.var(ddof=1)
    b = int(np.floor(np.sqrt(n)))
    nb = n // b
    means = x[:nb * b].reshape(nb, b).mean(axis=1)
    var_b = means.var(ddof=1)
    if var_b == 0.0:
        return float(n)
    return float(n * variance / (b * var_b))


def monitored_statistics(samples, y):
    """Named scalar series to monitor: dwell, counts, log-density.

    One series for the dwell time in each state observed in the tip data
    y, one for each ordered pair of distinct observed states (transition
    counts), and the history log-density.  samples may be a
    SummarySequence or any sequence of HistorySummary over a state set
    that includes the observed states.
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    observed = [int(v) for v in np.unique(np.asarray(y))]
    if hasattr(samples, "dwell"):
        states = list(samples.states)
        dwell = samples.dwell
        counts = samples.counts
        logp = np.asarray(samples.log_density, dtype=np.float64)
    else:
        states = [int(v) for v in samples[0].states]
        dwell = np.stack([h.dwell for h in samples])
        counts = np.stack([h.counts for h in samples])
        logp = np.array([h.log_density for h in samples], dtype=np.float64)
    try:
        slot = {v: states.index(v) for v in observed}
    except ValueError:
        raise ValueError("samples do not cover all observed states")
    out = OrderedDict()
    for v in observed:
        out["dwell_%d" % v] = np.ascontiguousarray(dwell[:, slot[v]])
    for a in observed:
        for b in observed:
            if a != b:
                out["count_%d_%d" % (a, b)] = np.ascontiguousarray(
                    counts[:, slot[a], slot[b]]).astype(np.float64)
    out["log_density"] = logp
    return out


def normalized_time(raw_seconds, min_ess, target):
    """CPU seconds rescaled to the cost of target effective samples."""
    if min_ess <= 0:
        raise ValueError("min_ess must be positive")
    return float(raw_seconds) * float(target) / float(min_ess)


class EssReport:
    """Per-statistic ESS plus ESS-normalized timing for one run.

    Each ESS value is capped at the series length n; min_ess is the
    minimum over the reported statistics; normalized_seconds rescales the
    raw time to the given target draw count.
    """

    def __init__(self, ess_values, n, raw_seconds, target):
        if not ess_values:
            raise ValueError("no statistics")
        self.ess_values = OrderedDict(
            (k, float(min(v, n))) for k, v in ess_values.items())
        for k, v in self.ess_values.items():
            if not v > 0:
                raise ValueError("nonpositive ESS for %s" % k)
        self.n = int(n)
        self.min_ess = min(self.ess_values.values())
        self.raw_seconds = float(raw_seconds)
        self.target = int(target)
        self.normalized_seconds = normalized_time(
            raw_seconds, self.min_ess, target)

    def to_json(self):
        return json.dumps({
            "n": self.n,
            "ess": self.ess_values,
            "min_ess": self.min_ess,
            "raw_seconds": self.raw_seconds,
            "target": self.target,
            "normalized_seconds": self.normalized_seconds,
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        report = cls(d["ess"], d["n"], d["raw_seconds"], d["target"])
        return report

    def __repr__(self):
        return "EssReport(min_ess=%.1f, normalized=%.3gs)" % (
            self.min_ess, self.normalized_seconds)


def ess_report(samples, y, raw_seconds, target=10_000):
    """EssReport over the monitored statistics of one sampler run."""
    stats = monitored_statistics(samples, y)
    n = len(next(iter(stats.values())))
    values = OrderedDict((k, ess(v)) for k, v in stats.items())
    return EssReport(values, n, raw_seconds, target)


class ComparisonRow:
    """Mean/SE/z for one statistic across two runs; TV for counts."""

    def __init__(self, name, mean_a, mean_b, se_a, se_b, z, tv):
        self.name = name
        self.mean_a = mean_a
        self.mean_b = mean_b
        self.se_a = se_a
        self.se_b = se_b
        self.z = z
        self.tv = tv

    def __repr__(self):
        tv = "None" if self.tv is None else "%.4f" % self.tv
        return "ComparisonRow(%s, z=%.2f, tv=%s)" % (self.name, self.z, tv)


def compare_distributions(stats_a, stats_b):
    """Per-statistic comparison of two runs' monitored series.

    The z-score compares means with autocorrelation-adjusted standard
    errors (standard deviation over the square root of the ESS, so
    correlated MCMC output is not overweighted).  Integer-valued series
    additionally get the total-variation distance between the two
    empirical distributions.  Returns an OrderedDict of ComparisonRow.
    """
    if not stats_a or not stats_b:
        raise ValueError("empty sample sets")
    names = [k for k in stats_a if k in stats_b]
    if not names:
        raise ValueError("no shared statistics")
    out = OrderedDict()
    for name in names:
        a = np.asarray(stats_a[name], dtype=np.float64)
        b = np.asarray(stats_b[name], dtype=np.float64)
        mean_a, mean_b = float(a.mean()), float(b.mean())
        se_a = _ess_se(a)
        se_b = _ess_se(b)
        denom = np.hypot(se_a, se_b)
        if denom == 0.0:
            z = 0.0 if mean_a == mean_b else np.inf
        else:
            z = (mean_a - mean_b) / denom
        tv = None
        if np.all(a == np.round(a)) and np.all(b == np.round(b)):
            tv = _total_variation(a.astype(np.int64), b.astype(np.int64))
        out[name] = ComparisonRow(name, mean_a, mean_b, se_a, se_b,
                                  float(z), tv)
    return out


def _ess_se(x):
    sd = x.std(ddof=1)
    if sd == 0.0:
        return 0.0
    return float(sd / np.sqrt(ess(x)))


def _total_variation(a, b):
    lo = min(a.min(), b.min())
    pa = np.bincount(a - lo) / a.size
    pb = np.bincount(b - lo) / b.size
    width = max(pa.size, pb.size)
    pa = np.pad(pa, (0, width - pa.size))
    pb = np.pad(pb, (0, width - pb.size))
    return float(0.5 * np.abs(pa - pb).sum())


def write_comparison_csv(report, path):
    """Comparison report as CSV: one row per statistic."""
    with open(path, "w") as fh:
        fh.write("statistic,mean_a,mean_b,se_a,se_b,z,tv\n")
        for row in report.values():
            tv = "" if row.tv is None else repr(row.tv)
            fh.write("%s,%r,%r,%r,%r,%r,%s\n" % (
                row.name, row.mean_a, row.mean_b, row.se_a, row.se_b,
                row.z, tv))
