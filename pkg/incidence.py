"""
Incidence counting
Ordered-pair counts of sequence points whose torus distance falls in an
annulus [a, b], psi-weighted counts of pairs whose dot product falls in a slab,
exact-distance counts, discrete energies, and support / difference-set sizes.

Annulus counts come in two flavours that must always agree exactly:
a blocked brute-force scan and a cell-grid counter that classifies whole cell
offsets as inside, outside or straddling the annulus.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from core import (
    DegenerateDataError,
    DimensionMismatchError,
    Metric,
    ParameterError,
    PointSequence,
    RegionKind,
    RegionSpec,
    annulus_volume,
    distances,
    make_rng,
    reduce_mod1,
    torus_distances,
)
from fourier import bump_psi

logger = logging.getLogger(__name__)

PAIR_CHUNK = 1 << 20
MAX_GRID_CELLS = 4096
MAX_CELLS_PER_AXIS = 64
# offsets whose distance range clears an endpoint by less than this are checked pair by pair
CELL_MARGIN = 1e-9
DEFAULT_QUANTUM = 1e-9
DEFAULT_ETA = 1e-9
DEFAULT_MC_SAMPLES = 10_000_000
MIN_MC_SAMPLES = 10_000
PSI_SUPPORT = (0.1, 0.9)


def _run_tasks(fn: Callable, tasks: Sequence, threads: int) -> list:
    """Map fn over tasks, preserving order"""
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _row_blocks(rows: int, cols: int) -> List[Tuple[int, int]]:
    step = max(1, PAIR_CHUNK // max(cols, 1))
    return [(lo, min(lo + step, rows)) for lo in range(0, rows, step)]


def _annulus_region(a: float, b: float, metric: Metric = Metric.TORUS) -> RegionSpec:
    return RegionSpec(RegionKind.ANNULUS, a, b, metric)


# ---------------------------------------------------------------------------
# Annulus pair counts
# ---------------------------------------------------------------------------

def count_annulus_pairs(seq: PointSequence, a: float, b: float, N: int,
                        metric: Metric = Metric.TORUS, threads: int = 1) -> int:
    """#{(n, m) : a <= ||v_n - v_m|| <= b} over the first N points, by direct scan"""
    region = _annulus_region(a, b, metric)
    X = seq.prefix(N)

    def scan(block):
        lo, hi = block
        D = distances(X[lo:hi, None, :], X[None, :, :], region.metric)
        return int(np.count_nonzero((D >= a) & (D <= b)))

    return sum(_run_tasks(scan, _row_blocks(N, N), threads))


def _cells_per_axis(d: int, a: float, b: float) -> int:
    """Cells per axis with side about the shell width, capped at MAX_GRID_CELLS cells"""
    side = max(b - a, 1.0 / MAX_CELLS_PER_AXIS)
    G = max(1, min(MAX_CELLS_PER_AXIS, int(1.0 / side)))
    while G > 1 and G ** d > MAX_GRID_CELLS:
        G -= 1
    return G


def _offset_ranges(G: int, d: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All cell offsets with the min / max torus distance between their cells"""
    offsets = np.stack(np.unravel_index(np.arange(G ** d), (G,) * d), axis=1)
    m = np.minimum(offsets, G - offsets)
    h = 1.0 / G
    lo = np.maximum(m - 1, 0) * h
    hi = np.minimum((m + 1) * h, 0.5)
    return offsets, np.sqrt(np.sum(lo * lo, axis=1)), np.sqrt(np.sum(hi * hi, axis=1))


def _expand_pairs(task) -> Tuple[np.ndarray, np.ndarray]:
    """Point index pairs for a batch of (source cell, target cell) pairs"""
    src_start, src_count, dst_start, dst_count = task
    sizes = src_count * dst_count
    owner = np.repeat(np.arange(sizes.size), sizes)
    within = np.arange(int(sizes.sum())) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    i = src_start[owner] + within // dst_count[owner]
    j = dst_start[owner] + within % dst_count[owner]
    return i, j


def count_annulus_pairs_grid(seq: PointSequence, a: float, b: float, N: int,
                             threads: int = 1, cells_per_axis: Optional[int] = None) -> int:
    """Same count as count_annulus_pairs on the torus, via a uniform cell grid

    Offsets whose whole distance range sits inside [a, b] are counted from
    cell occupancies alone; straddling offsets fall back to exact distances
    computed with the same kernel as the direct scan.
    """
    _annulus_region(a, b, Metric.TORUS)
    X = seq.prefix(N)
    d = seq.dim
    G = int(cells_per_axis) if cells_per_axis else _cells_per_axis(d, a, b)
    if G < 1:
        raise ParameterError(f"cells_per_axis must be positive, got {G}")
    shape = (G,) * d

    cell = np.minimum((X * G).astype(np.int64), G - 1)
    cell_id = np.ravel_multi_index(tuple(cell.T), shape)
    order = np.argsort(cell_id, kind='stable')
    P = X[order]
    counts = np.bincount(cell_id, minlength=G ** d).astype(np.int64)
    starts = np.cumsum(counts) - counts

    offsets, dmin, dmax = _offset_ranges(G, d)
    relevant = (dmin <= b + CELL_MARGIN) & (dmax >= a - CELL_MARGIN)
    inside = (dmin >= a + CELL_MARGIN) & (dmax <= b - CELL_MARGIN)
    straddle = relevant & ~inside

    total = 0
    if np.any(inside):
        F = np.fft.fftn(counts.reshape(shape).astype(float))
        corr = np.rint(np.fft.ifftn(np.conj(F) * F).real).astype(np.int64).ravel()
        total += int(corr[inside].sum())

    cell_coords = np.stack(np.unravel_index(np.arange(G ** d), shape), axis=1)
    occupied = np.flatnonzero(counts)
    tasks = []
    for o in offsets[straddle]:
        target = np.ravel_multi_index(tuple(((cell_coords[occupied] + o) % G).T), shape)
        keep = counts[target] > 0
        src, dst = occupied[keep], target[keep]
        sizes = counts[src] * counts[dst]
        # split so no task expands much more than PAIR_CHUNK pairs
        bounds = np.searchsorted(np.cumsum(sizes), np.arange(PAIR_CHUNK, sizes.sum(), PAIR_CHUNK))
        for part in np.split(np.arange(src.size), np.unique(bounds)):
            if part.size:
                tasks.append((starts[src[part]], counts[src[part]],
                              starts[dst[part]], counts[dst[part]]))

    def measure(task):
        i, j = _expand_pairs(task)
        D = torus_distances(P[i], P[j])
        return int(np.count_nonzero((D >= a) & (D <= b)))

    total += sum(_run_tasks(measure, tasks, threads))
    logger.debug(f"Grid count: G={G}, {int(inside.sum())} inside offsets, "
                 f"{int(straddle.sum())} straddling, {len(tasks)} pair tasks")
    return total


def exact_distance_count(seq: PointSequence, t: float, N: int, eta: float = DEFAULT_ETA,
                         metric: Metric = Metric.TORUS, threads: int = 1) -> int:
    """#{(n, m) : | ||v_n - v_m|| - t | <= eta}"""
    if eta < 0:
        raise ParameterError(f"eta must be non-negative, got {eta}")
    if t - eta < 0.01:
        raise ParameterError(f"t - eta must be at least 1/100, got {t - eta}")
    if Metric(metric) is Metric.TORUS:
        return count_annulus_pairs_grid(seq, t - eta, t + eta, N, threads)
    return count_annulus_pairs(seq, t - eta, t + eta, N, metric, threads)


# ---------------------------------------------------------------------------
# Slab counts
# ---------------------------------------------------------------------------

def _check_slab(a: float, b: float) -> None:
    if not (0.01 <= a <= b):
        raise ParameterError(f"slab needs 1/100 <= a <= b, got a={a}, b={b}")


def count_slab_pairs(seq_v: PointSequence, seq_w: PointSequence, a: float, b: float,
                     N: int, threads: int = 1) -> float:
    """sum over (n, m) with a <= v_n . w_m <= b of psi(v_n) psi(w_m)"""
    _check_slab(a, b)
    if seq_v.dim != seq_w.dim:
        raise DimensionMismatchError(f"slab sequences are {seq_v.dim}-d and {seq_w.dim}-d")
    V, W = seq_v.prefix(N), seq_w.prefix(N)
    wv, ww = bump_psi(V), bump_psi(W)
    V, wv = V[wv > 0], wv[wv > 0]
    W, ww = W[ww > 0], ww[ww > 0]
    if V.shape[0] == 0 or W.shape[0] == 0:
        return 0.0

    def scan(block):
        lo, hi = block
        dot = None
        for i in range(V.shape[1]):
            term = V[lo:hi, i, None] * W[None, :, i]
            dot = term if dot is None else dot + term
        inside = (dot >= a) & (dot <= b)
        return wv[lo:hi] * np.sum(np.where(inside, ww[None, :], 0.0), axis=1)

    parts = _run_tasks(scan, _row_blocks(V.shape[0], W.shape[0]), threads)
    # exactly rounded, so independent of block layout
    return math.fsum(np.concatenate(parts).tolist())


def _psi_box_volume(d: int) -> float:
    lo, hi = PSI_SUPPORT
    return (hi - lo) ** d


@lru_cache(maxsize=64)
def slab_main_term(a: float, b: float, d: int, samples: int = DEFAULT_MC_SAMPLES,
                   seed: int = 0) -> Tuple[float, float]:
    """Monte Carlo estimate of the integral of psi(x) psi(y) 1{a <= x.y <= b} over T^d x T^d

    Returns (value, standard error). Samples are drawn in the support box of psi.
    """
    if samples < MIN_MC_SAMPLES:
        raise ParameterError(f"need at least {MIN_MC_SAMPLES} samples, got {samples}")
    if not (0.0 <= a <= b):
        raise ParameterError(f"slab needs 0 <= a <= b, got a={a}, b={b}")
    lo, hi = PSI_SUPPORT
    if a == b or a >= d * hi * hi or b <= d * lo * lo:
        return 0.0, 0.0

    rng = make_rng(seed)
    sums, squares = [], []
    chunk = 1 << 18
    for start in range(0, samples, chunk):
        n = min(chunk, samples - start)
        x = lo + (hi - lo) * rng.random((n, d))
        y = lo + (hi - lo) * rng.random((n, d))
        dot = np.einsum('ij,ij->i', x, y)
        f = np.where((dot >= a) & (dot <= b), bump_psi(x) * bump_psi(y), 0.0)
        sums.append(float(np.sum(f)))
        squares.append(float(np.sum(f * f)))

    vol = _psi_box_volume(d) ** 2
    mean = math.fsum(sums) / samples
    var = max(math.fsum(squares) / samples - mean * mean, 0.0) * samples / (samples - 1)
    return vol * mean, vol * math.sqrt(var / samples)


def slab_main_term_quadrature(a: float, b: float, resolution: int = 200) -> float:
    """Deterministic d = 2 cross-check of slab_main_term

    Midpoint rule over (x1, x2, y1); the y2 integral is read off a cumulative
    table of the 1-d weight.
    """
    if not (0.0 <= a <= b):
        raise ParameterError(f"slab needs 0 <= a <= b, got a={a}, b={b}")
    if resolution < 8:
        raise ParameterError(f"resolution must be at least 8, got {resolution}")
    lo, hi = PSI_SUPPORT
    table_t = np.linspace(lo, hi, 20001)
    weight = bump_psi(table_t[:, None])
    table = cumulative_trapezoid(weight, table_t, initial=0.0)

    h = (hi - lo) / resolution
    nodes = lo + h * (np.arange(resolution) + 0.5)
    w = bump_psi(nodes[:, None])
    x2, y1 = np.meshgrid(nodes, nodes, indexing='ij')
    w2 = np.outer(w, w)
    partial = []
    for x1, wx1 in zip(nodes, w):
        base = x1 * y1
        upper = np.interp((b - base) / x2, table_t, table)
        lower = np.interp((a - base) / x2, table_t, table)
        partial.append(wx1 * float(np.sum(w2 * (upper - lower))))
    return math.fsum(partial) * h ** 3


# ---------------------------------------------------------------------------
# Energies, supports and difference sets
# ---------------------------------------------------------------------------

def discrete_energy(seq: PointSequence, s: float, N: int, metric: Metric = Metric.TORUS,
                    threads: int = 1) -> float:
    """N^-2 sum over n != m of ||v_n - v_m||^-s; coincident pairs are skipped"""
    d = seq.dim
    if not (0.0 < s < d):
        raise ParameterError(f"energy exponent must lie in (0, {d}), got {s}")
    X = seq.prefix(N)
    metric = Metric(metric)

    def scan(block):
        lo, hi = block
        D = distances(X[lo:hi, None, :], X[None, :, :], metric)
        positive = D > 0
        vals = np.zeros(D.shape)
        vals[positive] = D[positive] ** (-s)
        zero = int(np.count_nonzero(~positive)) - (hi - lo)
        return np.sum(vals, axis=1), zero, int(np.count_nonzero(positive))

    results = _run_tasks(scan, _row_blocks(N, N), threads)
    coincident = sum(r[1] for r in results)
    if sum(r[2] for r in results) == 0:
        raise DegenerateDataError("every pair of points coincides; energy undefined")
    if coincident:
        logger.warning(f"Skipped {coincident} coincident ordered pairs in energy sum")
    return math.fsum(np.concatenate([r[0] for r in results]).tolist()) / float(N) ** 2


def _quantize(X: np.ndarray, quantum: float) -> Tuple[np.ndarray, int]:
    if not (0.0 < quantum < 1.0):
        raise ParameterError(f"quantum must lie in (0, 1), got {quantum}")
    modulus = int(round(1.0 / quantum))
    return np.rint(X / quantum).astype(np.int64) % modulus, modulus


def _distinct_classes(codes: np.ndarray) -> int:
    """Distinct rows of quantized codes already reduced mod the grid"""
    if codes.shape[0] == 0:
        return 0
    return int(np.unique(codes, axis=0).shape[0])


def support_count(seq: PointSequence, N: int, quantum: float = DEFAULT_QUANTUM) -> int:
    """Number of distinct points among the first N, up to the quantum

    Points are rounded to the nearest multiple of the quantum mod 1, so two
    points count once exactly when they round to the same grid class.
    """
    codes, _ = _quantize(seq.prefix(N), quantum)
    return _distinct_classes(codes)


def difference_set_count(seq: PointSequence, N: int, quantum: float = DEFAULT_QUANTUM) -> int:
    """Number of distinct v_n - v_m (mod 1) over the first N points"""
    X = seq.prefix(N)
    pieces = []
    for lo, hi in _row_blocks(N, N):
        D = reduce_mod1(X[lo:hi, None, :] - X[None, :, :]).reshape(-1, X.shape[1])
        codes, _ = _quantize(D, quantum)
        pieces.append(np.unique(codes, axis=0))
    return _distinct_classes(np.concatenate(pieces))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IncidenceReport:
    region: RegionSpec
    N: int
    count: float
    main_term: float
    main_term_stderr: float = 0.0

    @property
    def remainder(self) -> float:
        return self.count - self.main_term

    def as_record(self) -> dict:
        return {
            'region': self.region.as_record(),
            'N': self.N,
            'count': self.count,
            'main_term': self.main_term,
            'main_term_stderr': self.main_term_stderr,
            'remainder': self.remainder,
            'abs_remainder': abs(self.remainder),
        }


def report_record(report: IncidenceReport) -> dict:
    return report.as_record()


REPORT_COLUMNS = ['N', 'count', 'main_term', 'remainder', 'abs_remainder']


def report_row(report: IncidenceReport) -> list:
    return [report.N, report.count, report.main_term, report.remainder, abs(report.remainder)]


def count_annulus(seq: PointSequence, region: RegionSpec, N: int, method: str = 'grid',
                  threads: int = 1) -> IncidenceReport:
    """Annulus count with main term N^2 |A|"""
    if region.kind is not RegionKind.ANNULUS:
        raise ParameterError(f"expected an annulus region, got {region.kind.value}")
    if region.metric is not Metric.TORUS:
        raise ParameterError("annulus reports are defined on the torus")
    if method == 'grid':
        count = count_annulus_pairs_grid(seq, region.a, region.b, N, threads)
    elif method == 'brute':
        count = count_annulus_pairs(seq, region.a, region.b, N, threads=threads)
    else:
        raise ParameterError(f"unknown counting method {method!r}")
    main = float(N) ** 2 * annulus_volume(region.a, region.b, seq.dim)
    return IncidenceReport(region, N, float(count), main)


def count_slab(seq_v: PointSequence, seq_w: PointSequence, region: RegionSpec, N: int,
               samples: int = DEFAULT_MC_SAMPLES, seed: int = 0, threads: int = 1) -> IncidenceReport:
    """Weighted slab count with Monte Carlo main term N^2 I(a, b)"""
    if region.kind is not RegionKind.SLAB:
        raise ParameterError(f"expected a slab region, got {region.kind.value}")
    count = count_slab_pairs(seq_v, seq_w, region.a, region.b, N, threads)
    value, stderr = slab_main_term(region.a, region.b, seq_v.dim, samples, seed)
    scale = float(N) ** 2
    return IncidenceReport(region, N, count, scale * value, scale * stderr)
