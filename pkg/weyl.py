"""
Weyl exponential sums
S_N(k) = sum_{n<=N} exp(2 pi i k.v_n) over frequency boxes, the gamma-exponent
fit of the normalized box maximum, the Dirichlet search for frequencies where
the sum nearly saturates, and the Hoeffding tail bound for random sequences.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core import (
    ConfigurationError,
    DegenerateDataError,
    FrequencySpec,
    ParameterError,
    PointSequence,
    check_prefix,
    fit_loglog,
    neumaier_accumulate,
    reduce_mod1,
    uniform_block,
)

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.1
# points per partial sum; fixed so results never depend on threading
POINT_CHUNK = 4096
FREQ_CHUNK = 64
DEFAULT_SEARCH_BUDGET = 50_000_000
# real parts closer than this count as equal, so the smaller q wins
TIE_TOLERANCE = 1e-12


def default_kmax(d: int) -> int:
    """Box sizes keeping (2K+1)^d - 1 under ~2e5 terms"""
    return {1: 200, 2: 20, 3: 8, 4: 5}.get(d, 3)


def frequency_box(d: int, kmax: Optional[int] = None) -> FrequencySpec:
    return FrequencySpec(d, kmax if kmax is not None else default_kmax(d))


@dataclass(frozen=True)
class WeylProfile:
    freq: FrequencySpec
    checkpoints: Tuple[int, ...]
    sums: np.ndarray  # complex, shape (len(freq), len(checkpoints))
    epsilon: float = DEFAULT_EPSILON

    def normalized(self) -> np.ndarray:
        """|S_N(k)| / N for every entry"""
        return np.abs(self.sums) / np.asarray(self.checkpoints, dtype=float)[None, :]

    def box_maximum(self) -> np.ndarray:
        """M(N) = max_k |k|^-eps |S_N(k)| / N per checkpoint"""
        weights = self.freq.norms ** (-self.epsilon)
        return np.max(weights[:, None] * self.normalized(), axis=0)


@dataclass(frozen=True)
class GammaFit:
    gamma_hat: float
    intercept: float
    stderr: float
    r_squared: float
    epsilon: float
    kmax: int
    checkpoints: Tuple[int, ...]

    def as_record(self) -> dict:
        return {
            'gamma_hat': self.gamma_hat,
            'stderr': self.stderr,
            'r_squared': self.r_squared,
            'epsilon': self.epsilon,
            'kmax': self.kmax,
            'checkpoints': list(self.checkpoints),
        }


@dataclass(frozen=True)
class AdversarialResult:
    q: int
    magnitude: float
    real_part: float
    distance: float
    searched: int
    budget_limited: bool
    guaranteed: bool

    def as_record(self) -> dict:
        return {
            'q': self.q,
            'magnitude': self.magnitude,
            'real_part': self.real_part,
            'distance': self.distance,
            'searched': self.searched,
            'budget_limited': self.budget_limited,
            'guaranteed': self.guaranteed,
        }


# ---------------------------------------------------------------------------
# Summation kernels
# ---------------------------------------------------------------------------

def _phases(X: np.ndarray, K: np.ndarray) -> np.ndarray:
    """k.x mod 1 for every (k, x) pair, shape (len(K), len(X))"""
    t = None
    for i in range(X.shape[1]):
        term = K[:, i, None].astype(float) * X[None, :, i]
        t = term if t is None else t + term
    return reduce_mod1(t)


def _range_sum(X: np.ndarray, K: np.ndarray, start: int, stop: int) -> np.ndarray:
    """sum_{start<=n<stop} exp(2 pi i k.x_n) for each k, in fixed chunk order"""
    parts = []
    for lo in range(start, stop, POINT_CHUNK):
        hi = min(lo + POINT_CHUNK, stop)
        angle = 2.0 * np.pi * _phases(X[lo:hi], K)
        parts.append(np.sum(np.cos(angle), axis=1) + 1j * np.sum(np.sin(angle), axis=1))
    if len(parts) == 1:
        return parts[0]
    return neumaier_accumulate(parts)[-1]


def _profile_block(X: np.ndarray, K: np.ndarray, bounds: Sequence[int]) -> np.ndarray:
    blocks = [_range_sum(X, K, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    return neumaier_accumulate(blocks).T


def _as_frequency(k, d: int) -> np.ndarray:
    K = np.asarray(k, dtype=np.int64).reshape(1, -1)
    if K.shape[1] != d:
        raise ParameterError(f"frequency has {K.shape[1]} components, sequence is {d}-dimensional")
    return K


def exp_sum_range(seq: PointSequence, k, start: int, stop: int) -> complex:
    """sum over 0-based indices start..stop-1"""
    if not (0 <= start < stop):
        raise ParameterError(f"empty or negative range [{start}, {stop})")
    check_prefix(seq, stop)
    return complex(_range_sum(seq.coords, _as_frequency(k, seq.dim), start, stop)[0])


def exp_sum(seq: PointSequence, k, N: int) -> complex:
    """S_N(k); k = 0 gives N"""
    return exp_sum_range(seq, k, 0, N)


def weyl_profile(seq: PointSequence, freq: FrequencySpec, checkpoints: Sequence[int],
                 epsilon: float = DEFAULT_EPSILON, threads: int = 1) -> WeylProfile:
    """S_N(k) for every k in the box and every checkpoint N

    Each checkpoint extends the previous one by summing only the new indices.
    Frequency chunks are independent and may run on several threads.
    """
    if len(freq) == 0:
        raise ConfigurationError('kmax', "empty frequency box")
    if freq.dim != seq.dim:
        raise ParameterError(f"frequency box is {freq.dim}-d, sequence is {seq.dim}-d")
    checkpoints = tuple(int(n) for n in checkpoints)
    if not checkpoints:
        raise ConfigurationError('checkpoints', "at least one checkpoint is required")
    if any(b <= a for a, b in zip(checkpoints[:-1], checkpoints[1:])):
        raise ConfigurationError('checkpoints', f"must be strictly increasing, got {checkpoints}")
    check_prefix(seq, checkpoints[-1])
    check_prefix(seq, checkpoints[0])

    bounds = (0,) + checkpoints
    K = freq.vectors
    chunks = [K[i:i + FREQ_CHUNK] for i in range(0, len(K), FREQ_CHUNK)]
    X = seq.coords

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tables = list(pool.map(lambda c: _profile_block(X, c, bounds), chunks))
    else:
        tables = [_profile_block(X, c, bounds) for c in chunks]

    sums = np.concatenate(tables, axis=0)
    sums.setflags(write=False)
    logger.debug(f"Weyl profile: {len(K)} frequencies x {len(checkpoints)} checkpoints")
    return WeylProfile(freq, checkpoints, sums, float(epsilon))


def estimate_gamma(profile: WeylProfile) -> GammaFit:
    """Fit log M(N) = log C - gamma log N over the checkpoints"""
    if len(profile.checkpoints) < 3:
        raise DegenerateDataError(f"need at least 3 checkpoints, got {len(profile.checkpoints)}")
    M = profile.box_maximum()
    if np.any(M <= 0):
        raise DegenerateDataError("box maximum vanished at a checkpoint; log undefined")
    fit = fit_loglog(profile.checkpoints, M)
    return GammaFit(
        gamma_hat=-fit.slope,
        intercept=fit.intercept,
        stderr=fit.stderr,
        r_squared=fit.r_squared,
        epsilon=profile.epsilon,
        kmax=profile.freq.kmax,
        checkpoints=profile.checkpoints,
    )


def gamma_fit_record(fit: GammaFit) -> dict:
    return fit.as_record()


def profile_rows(profile: WeylProfile) -> Tuple[List[str], List[list]]:
    """CSV header and rows: k_1..k_d, N, re, im, magnitude_over_N"""
    d = profile.freq.dim
    header = [f"k_{i + 1}" for i in range(d)] + ['N', 're', 'im', 'magnitude_over_N']
    rows = []
    norm = profile.normalized()
    for fi, k in enumerate(profile.freq.vectors):
        for ci, N in enumerate(profile.checkpoints):
            s = profile.sums[fi, ci]
            rows.append([int(x) for x in k] + [N, float(s.real), float(s.imag), float(norm[fi, ci])])
    return header, rows


# ---------------------------------------------------------------------------
# Adversarial frequencies and the random model
# ---------------------------------------------------------------------------

def adversarial_frequency(points, eps: float, qmax: int,
                          budget: int = DEFAULT_SEARCH_BUDGET, chunk: int = 1 << 16) -> AdversarialResult:
    """Smallest q in [1, qmax] bringing S(q)/N = mean exp(2 pi i q v_n) closest to 1

    q is ranked by Re S(q)/N, so phases that align away from 1 do not count.
    When qmax >= ceil(eps^-N) simultaneous approximation guarantees
    |S(q)/N - 1| <= 2 pi eps. Searches past `budget` values are cut short and
    flagged.
    """
    v = np.asarray(points, dtype=float).ravel()
    N = v.size
    if N == 0:
        raise ParameterError("no points to search")
    if np.any((v < 0) | (v > 1)):
        raise ParameterError("points must lie in [0, 1]")
    if not (0.0 < eps < 1.0):
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    if qmax < 1:
        raise ParameterError(f"qmax must be at least 1, got {qmax}")

    limit = min(int(qmax), int(budget))
    budget_limited = limit < qmax
    if budget_limited:
        logger.warning(f"Adversarial search cut at q={limit} of {qmax} (budget)")

    best_q, best_re, best_im = 1, -math.inf, 0.0
    for lo in range(1, limit + 1, chunk):
        q = np.arange(lo, min(lo + chunk, limit + 1), dtype=float)
        angle = 2.0 * np.pi * reduce_mod1(q[:, None] * v[None, :])
        re = np.sum(np.cos(angle), axis=1) / N
        top = float(re.max())
        if top > best_re + TIE_TOLERANCE:
            i = int(np.argmax(re >= top - TIE_TOLERANCE))
            best_q, best_re = int(q[i]), float(re[i])
            best_im = float(np.sum(np.sin(angle[i]))) / N

    dirichlet_q = math.ceil(eps ** (-N)) if N * math.log(1.0 / eps) < 700 else math.inf
    guaranteed = (not budget_limited) and limit >= dirichlet_q
    return AdversarialResult(best_q, math.hypot(best_re, best_im), best_re,
                             math.hypot(best_re - 1.0, best_im), limit, budget_limited, guaranteed)


def hoeffding_bound(k, N: int, gamma: float, eps: float, clamp: bool = True) -> float:
    """4 exp(-|k|^{2 eps} N^{1 - 2 gamma} / 2), the tail bound for i.i.d. points"""
    k = np.asarray(k, dtype=float)
    norm = float(np.sqrt(np.sum(k * k)))
    if norm == 0:
        raise ParameterError("hoeffding_bound needs a non-zero frequency")
    if N < 1:
        raise ParameterError(f"N must be at least 1, got {N}")
    value = 4.0 * math.exp(-0.5 * norm ** (2.0 * eps) * N ** (1.0 - 2.0 * gamma))
    return min(max(value, 0.0), 1.0) if clamp else value


def violation_frequency(seeds: Sequence[int], d: int, N: int, k, gamma: float, eps: float) -> float:
    """Fraction of seeded i.i.d. samples with |S_N(k)|/N >= |k|^eps N^-gamma"""
    if len(seeds) == 0:
        raise ConfigurationError('seeds', "at least one seed is required")
    K = np.asarray(k, dtype=np.int64).reshape(1, d)
    norm = float(np.sqrt(np.sum(K.astype(float) ** 2)))
    threshold = norm ** eps * N ** (-gamma)
    hits = 0
    for seed in seeds:
        X = uniform_block(seed, N, d)
        s = _range_sum(X, K, 0, N)[0]
        if abs(s) / N >= threshold:
            hits += 1
    return hits / len(seeds)
