"""
Real-vs-generated evaluation metrics.

- sparsity histograms (20 bins over [0, 1]) and their Wasserstein distance,
  optionally the sparsity measured on a quantized value grid
- normalized 1-D Wasserstein distance on per-sample summary statistics
- MMD with a Gaussian kernel (unbiased, median-heuristic bandwidth)
- Spearman / Pearson correlation of per-dimension mean vectors
- LISI: k-nearest-neighbour inverse Simpson index rescaled to [0, 1]
- sparsity-bit logit histograms (50 bins over [-1, 1])
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy import stats
from scipy.spatial.distance import cdist, pdist
from sklearn.neighbors import NearestNeighbors

from .codec import fit_scale, quantized_sparsity, sparsity_per_row
from .errors import ArgumentError, CorrelationError, ShapeError
from .numerics import Matrix, as_matrix

logger = logging.getLogger(__name__)

SPARSITY_BINS = 20
LOGIT_BINS = 50
ALL_METRICS = ("w1", "mmd", "correlations", "lisi", "sparsity")


@dataclass
class Histogram:
    edges: list[float]
    counts: list[int]

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def centers(self) -> npt.NDArray[np.float64]:
        e = np.asarray(self.edges)
        return (e[:-1] + e[1:]) / 2.0

    def rows(self) -> list[tuple[float, float, int]]:
        return [(self.edges[i], self.edges[i + 1], self.counts[i]) for i in range(len(self.counts))]


@dataclass
class SparsityHistogram(Histogram):
    mean: float = 0.0


@dataclass
class LogitHistogram(Histogram):
    first_bin_mass: float = 0.0
    last_bin_mass: float = 0.0

    @property
    def outer_mass(self) -> float:
        return self.first_bin_mass + self.last_bin_mass


def _bin_indices(values: npt.NDArray[np.float64], lo: float, hi: float, bins: int) -> npt.NDArray[np.int64]:
    """Equal-width bins over [lo, hi]; the last bin is closed on the right."""
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _histogram(values: npt.NDArray[np.float64], lo: float, hi: float, bins: int) -> tuple[list[float], list[int]]:
    counts = np.bincount(_bin_indices(values, lo, hi, bins), minlength=bins)
    edges = np.linspace(lo, hi, bins + 1)
    return edges.tolist(), counts.astype(int).tolist()


def sparsity_histogram(batch: Matrix, bins: int = SPARSITY_BINS) -> SparsityHistogram:
    s = sparsity_per_row(batch)
    edges, counts = _histogram(s, 0.0, 1.0, bins)
    return SparsityHistogram(edges, counts, float(s.mean()) if s.size else 0.0)


def sb_logit_histogram(logits: Matrix, bins: int = LOGIT_BINS) -> LogitHistogram:
    """
    Histogram of sparsity-bit logits clamped to [-1, 1].

    Both outer-bin masses are reported; which one tracks the data sparsity
    depends on the sign convention of the plot being compared against.
    """
    z = np.clip(np.asarray(logits, dtype=np.float64).ravel(), -1.0, 1.0)
    edges, counts = _histogram(z, -1.0, 1.0, bins)
    total = max(z.size, 1)
    return LogitHistogram(edges, counts, counts[0] / total, counts[-1] / total)


def sparsity_w1(real: SparsityHistogram, gen: SparsityHistogram) -> float:
    """W1 between two sparsity histograms treated as distributions on bin centres."""
    if real.total == 0 or gen.total == 0:
        raise ArgumentError("sparsity histograms must be non-empty")
    return float(stats.wasserstein_distance(real.centers(), gen.centers(), real.counts, gen.counts))


def wasserstein1(a, b, normalize: bool = False) -> float:
    """
    Exact 1-D W1 between two empirical samples.

    With `normalize`, the distance is divided by the standard deviation of
    `a`, the reference sample.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ArgumentError("wasserstein1 needs two non-empty samples")
    distance = float(stats.wasserstein_distance(a, b))
    if normalize:
        spread = float(np.std(a))
        if spread == 0.0:
            raise ArgumentError("cannot normalize by a reference sample with zero spread")
        distance /= spread
    return distance


def pt_statistic(batch: Matrix) -> npt.NDArray[np.float64]:
    """Per-row total intensity."""
    return np.asarray(batch, dtype=np.float64).sum(axis=1)


def pixel_mean(batch: Matrix) -> npt.NDArray[np.float64]:
    """Average value of every dimension across rows."""
    return np.asarray(batch, dtype=np.float64).mean(axis=0)


def median_bandwidth(x: Matrix, y: Matrix) -> float:
    """Median pairwise Euclidean distance of the pooled sample (1.0 if degenerate)."""
    distances = pdist(np.concatenate([x, y], axis=0))
    median = float(np.median(distances)) if distances.size else 0.0
    return median if median > 0.0 else 1.0


def mmd_rbf(x: Matrix, y: Matrix, bandwidth: float | None = None, unbiased: bool = True, floor: bool = True) -> float:
    """
    Squared MMD with k(a, b) = exp(-|a - b|^2 / (2 sigma^2)).

    The unbiased estimator drops the diagonal of the within-sample kernel
    matrices and can go slightly negative; `floor` clips it at 0.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"mmd: dimension mismatch {x.shape[1]} vs {y.shape[1]}")
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise ArgumentError("mmd needs at least two rows per sample")
    sigma = median_bandwidth(x, y) if bandwidth is None else float(bandwidth)
    if sigma <= 0.0:
        raise ArgumentError(f"bandwidth must be > 0 (got {sigma})")
    gamma = 1.0 / (2.0 * sigma * sigma)
    k_xx = np.exp(-gamma * cdist(x, x, "sqeuclidean"))
    k_yy = np.exp(-gamma * cdist(y, y, "sqeuclidean"))
    k_xy = np.exp(-gamma * cdist(x, y, "sqeuclidean"))
    if unbiased:
        value = (
            (k_xx.sum() - np.trace(k_xx)) / (m * (m - 1))
            + (k_yy.sum() - np.trace(k_yy)) / (n * (n - 1))
            - 2.0 * k_xy.mean()
        )
    else:
        value = k_xx.mean() + k_yy.mean() - 2.0 * k_xy.mean()
    value = float(value)
    return max(value, 0.0) if floor else value


def mean_expression_correlations(real: Matrix, gen: Matrix) -> tuple[float, float]:
    """
    (Spearman, Pearson) correlation between the per-dimension mean vectors.

    Raises:
        CorrelationError: if either mean vector is constant
    """
    real = as_matrix(real, "real")
    gen = as_matrix(gen, "gen")
    if real.shape[1] != gen.shape[1]:
        raise ShapeError(f"correlations: dimension mismatch {real.shape[1]} vs {gen.shape[1]}")
    if real.shape[1] < 2:
        raise ArgumentError("correlations need at least two dimensions")
    mu_real = real.mean(axis=0)
    mu_gen = gen.mean(axis=0)
    if np.ptp(mu_real) == 0.0 or np.ptp(mu_gen) == 0.0:
        raise CorrelationError("correlation is undefined for a constant mean vector")
    pcc = float(np.clip(stats.pearsonr(mu_real, mu_gen)[0], -1.0, 1.0))
    ranks_real = stats.rankdata(mu_real)
    ranks_gen = stats.rankdata(mu_gen)
    scc = float(np.clip(stats.pearsonr(ranks_real, ranks_gen)[0], -1.0, 1.0))
    return scc, pcc


@dataclass
class LisiResult:
    value: float
    lower: float
    upper: float
    k: int


def lisi_scores(real: Matrix, gen: Matrix, k: int = 30) -> npt.NDArray[np.float64]:
    """Per-point inverse Simpson index of the real/generated label mix, in [1, 2]."""
    real = as_matrix(real, "real")
    gen = as_matrix(gen, "gen")
    if real.shape[1] != gen.shape[1]:
        raise ShapeError(f"lisi: dimension mismatch {real.shape[1]} vs {gen.shape[1]}")
    pooled = np.concatenate([real, gen], axis=0)
    n = pooled.shape[0]
    if k < 1 or k >= n:
        raise ArgumentError(f"lisi needs 1 <= k < pooled size (got k={k}, n={n})")
    labels = np.concatenate([np.zeros(real.shape[0]), np.ones(gen.shape[0])])

    neighbors = NearestNeighbors(n_neighbors=k + 1, algorithm="brute").fit(pooled)
    indices = neighbors.kneighbors(pooled, return_distance=False)
    scores = np.empty(n)
    for i in range(n):
        row = indices[i]
        row = row[row != i][:k] if np.any(row == i) else row[:k]
        p1 = labels[row].mean()
        scores[i] = 1.0 / (p1 * p1 + (1.0 - p1) * (1.0 - p1))
    return scores


def lisi(real: Matrix, gen: Matrix, k: int = 30) -> float:
    """Mean inverse Simpson index rescaled from [1, 2] to [0, 1]."""
    return float(lisi_scores(real, gen, k).mean() - 1.0)


def lisi_interval(real: Matrix, gen: Matrix, k: int = 30) -> LisiResult:
    """Rescaled LISI with a 95% normal confidence interval over points."""
    scores = lisi_scores(real, gen, k) - 1.0
    mean = float(scores.mean())
    half = 1.96 * float(scores.std()) / math.sqrt(scores.size)
    return LisiResult(mean, max(mean - half, 0.0), min(mean + half, 1.0), k)


@dataclass
class MetricsReport:
    """
    Real-vs-generated comparison. Metrics that were not requested are None;
    requested groups that are undefined for the data are None as well, with
    the reason in `unavailable`.

    `lisi` uses the min-max rescaled convention (inverse Simpson - 1) with
    exact k-nearest neighbours; `w1_stat` is the W1 distance between
    per-row total intensities divided by the real sample's standard deviation.
    """

    n_real: int
    n_gen: int
    d: int
    w1_stat: float | None = None
    mmd: float | None = None
    mmd_bandwidth: float | None = None
    scc: float | None = None
    pcc: float | None = None
    lisi: float | None = None
    lisi_lower: float | None = None
    lisi_upper: float | None = None
    lisi_k: int | None = None
    sparsity_mean_real: float | None = None
    sparsity_mean_gen: float | None = None
    sparsity_w1: float | None = None
    sparsity_hist_real: SparsityHistogram | None = None
    sparsity_hist_gen: SparsityHistogram | None = None
    quantize_levels: int | None = None
    quantized_sparsity_mean_real: float | None = None
    quantized_sparsity_mean_gen: float | None = None
    unavailable: dict = field(default_factory=dict)
    conventions: dict = field(default_factory=lambda: {
        "lisi": "mean inverse Simpson index over exact kNN minus 1, in [0, 1]",
        "w1_stat": "W1 of per-row sums divided by the real sample standard deviation",
        "mmd": "unbiased squared MMD, Gaussian kernel, floored at 0",
    })

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> MetricsReport:
        data = dict(data)
        for key in ("sparsity_hist_real", "sparsity_hist_gen"):
            if data.get(key) is not None:
                data[key] = SparsityHistogram(**data[key])
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        return cls.from_dict(json.loads(text))

    def flat(self) -> dict[str, float | int | None]:
        return {
            key: value
            for key, value in self.to_dict().items()
            if not isinstance(value, (dict, list))
        }

    def to_csv(self, path: str | Path) -> None:
        """One metric,value row per scalar field."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["metric", "value"])
            for key, value in self.flat().items():
                writer.writerow([key, "" if value is None else repr(value)])


def write_histogram_csv(path: str | Path, hist: Histogram) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in hist.rows():
            writer.writerow([repr(left), repr(right), count])


def _sparsity_group(real: Matrix, gen: Matrix, quantize_levels: int | None) -> dict:
    hist_real, hist_gen = sparsity_histogram(real), sparsity_histogram(gen)
    values = {
        "sparsity_hist_real": hist_real,
        "sparsity_hist_gen": hist_gen,
        "sparsity_mean_real": hist_real.mean,
        "sparsity_mean_gen": hist_gen.mean,
        "sparsity_w1": sparsity_w1(hist_real, hist_gen),
    }
    if quantize_levels is not None:
        # both samples share the grid fitted to the real data
        scale = fit_scale(real)
        values["quantize_levels"] = quantize_levels
        values["quantized_sparsity_mean_real"] = float(quantized_sparsity(real, scale, quantize_levels).mean())
        values["quantized_sparsity_mean_gen"] = float(quantized_sparsity(gen, scale, quantize_levels).mean())
    return values


def _lisi_group(real: Matrix, gen: Matrix, k: int) -> dict:
    result = lisi_interval(real, gen, min(k, real.shape[0] + gen.shape[0] - 1))
    return {"lisi": result.value, "lisi_lower": result.lower, "lisi_upper": result.upper, "lisi_k": result.k}


def _mmd_group(real: Matrix, gen: Matrix, bandwidth: float | None) -> dict:
    sigma = median_bandwidth(real, gen) if bandwidth is None else float(bandwidth)
    return {"mmd": mmd_rbf(real, gen, sigma), "mmd_bandwidth": sigma}


def _correlation_group(real: Matrix, gen: Matrix) -> dict:
    scc, pcc = mean_expression_correlations(real, gen)
    return {"scc": scc, "pcc": pcc}


def evaluate(
    real: Matrix,
    gen: Matrix,
    metrics: tuple[str, ...] | list[str] = ALL_METRICS,
    k: int = 30,
    bandwidth: float | None = None,
    quantize_levels: int | None = None,
) -> MetricsReport:
    """
    Build a MetricsReport for the requested metric groups.

    A group that is undefined for the given samples (a reference with zero
    spread for w1, a constant mean vector for the correlations) stays null,
    its reason is recorded under `unavailable` and a warning is logged; the
    other groups are still computed. `quantize_levels` adds the sparsity of
    both samples measured on a grid of that many levels to the sparsity group.

    Raises:
        ShapeError: if the samples differ in dimension
        ArgumentError: on an unknown metric name or quantize_levels < 2
    """
    real = as_matrix(real, "real")
    gen = as_matrix(gen, "gen")
    if real.shape[1] != gen.shape[1]:
        raise ShapeError(f"real data has d={real.shape[1]}, generated data has d={gen.shape[1]}")
    unknown = set(metrics) - set(ALL_METRICS)
    if unknown:
        raise ArgumentError(f"unknown metrics {sorted(unknown)} (expected a subset of {list(ALL_METRICS)})")
    if quantize_levels is not None and quantize_levels < 2:
        raise ArgumentError(f"quantize_levels must be >= 2 (got {quantize_levels})")

    groups = {
        "sparsity": lambda: _sparsity_group(real, gen, quantize_levels),
        "w1": lambda: {"w1_stat": wasserstein1(pt_statistic(real), pt_statistic(gen), normalize=True)},
        "mmd": lambda: _mmd_group(real, gen, bandwidth),
        "correlations": lambda: _correlation_group(real, gen),
        "lisi": lambda: _lisi_group(real, gen, k),
    }
    report = MetricsReport(real.shape[0], gen.shape[0], real.shape[1])
    for name in ALL_METRICS:
        if name not in metrics:
            continue
        try:
            values = groups[name]()
        except ArgumentError as exc:
            report.unavailable[name] = str(exc)
            logger.warning("%s unavailable: %s", name, exc)
            continue
        for key, value in values.items():
            setattr(report, key, value)
    logger.debug("evaluated %s on %d real / %d generated rows", list(metrics), real.shape[0], gen.shape[0])
    return report
