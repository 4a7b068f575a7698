"""
Core domain types and torus geometry
Points on the d-torus, sequences with provenance, frequency boxes, regions,
plus the shared numeric kernels every other module uses:
- canonical reduction mod 1 and torus / Euclidean distance kernels
- ball and annulus volumes
- the seeded randomness contract (numpy PCG64)
- compensated summation
- log-log regression (scipy.stats.linregress)
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

# Identifier recorded in provenance for every seeded stream
RNG_ALGORITHM = 'numpy.PCG64'
SEED_LIMIT = 2 ** 64


class EquicountError(Exception):
    """Base class for every error raised by the toolkit"""


class ConfigurationError(EquicountError, ValueError):
    """Invalid generator, frequency or experiment configuration"""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


class ParameterError(EquicountError, ValueError):
    """A numeric precondition was violated"""


class DimensionMismatchError(EquicountError, ValueError):
    """Two points or sequences live in different dimensions"""


class SequenceRangeError(EquicountError, IndexError):
    """Requested prefix is longer than the sequence"""


class DegenerateDataError(EquicountError, ArithmeticError):
    """Data cannot support the requested statistic (log of zero, too few points...)"""


class Metric(str, Enum):
    TORUS = 'torus'
    EUCLIDEAN = 'euclidean'


class RegionKind(str, Enum):
    ANNULUS = 'annulus'
    SLAB = 'slab'


def reduce_mod1(x):
    """Canonical representative in [0, 1) of x mod 1 (scalar or array)"""
    x = np.asarray(x, dtype=float)
    r = x - np.floor(x)
    # x slightly below an integer can round up to exactly 1.0
    return np.where(r >= 1.0, 0.0, r)


@dataclass(frozen=True)
class Point:
    """A point of the d-torus, stored by its representative in [0,1)^d"""
    coords: Tuple[float, ...]

    def __post_init__(self):
        if len(self.coords) == 0:
            raise ParameterError("a point needs at least one coordinate")
        reduced = tuple(float(c) for c in reduce_mod1(np.asarray(self.coords, dtype=float)))
        object.__setattr__(self, 'coords', reduced)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class Provenance:
    """Where a sequence came from: enough to regenerate it bit-for-bit"""
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    algorithm: str = RNG_ALGORITHM

    def as_record(self) -> dict:
        return {
            'family': self.family,
            'params': dict(self.params),
            'seed': int(self.seed),
            'algorithm': self.algorithm,
        }


class PointSequence:
    """Ordered points in [0,1)^d with generator provenance

    Coordinates are held in a read-only (N, d) float array; prefixes are views.
    """

    def __init__(self, coords: np.ndarray, provenance: Provenance):
        arr = np.array(coords, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise ParameterError(f"coordinates must have shape (N, d), got {arr.shape}")
        arr = reduce_mod1(arr)
        arr.setflags(write=False)
        self._coords = arr
        self.provenance = provenance

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    @property
    def dim(self) -> int:
        return self._coords.shape[1]

    def __len__(self) -> int:
        return self._coords.shape[0]

    def __getitem__(self, index: int) -> Point:
        return Point(tuple(self._coords[index]))

    @property
    def points(self) -> Tuple[Point, ...]:
        return tuple(Point(tuple(row)) for row in self._coords)

    def prefix(self, N: int) -> np.ndarray:
        """First N points as an (N, d) view"""
        check_prefix(self, N)
        return self._coords[:N]

    def reversed(self) -> 'PointSequence':
        return PointSequence(self._coords[::-1], self.provenance)

    def __repr__(self) -> str:
        return (f"PointSequence(n={len(self)}, dim={self.dim}, "
                f"family={self.provenance.family!r}, seed={self.provenance.seed})")


def check_prefix(seq: PointSequence, N: int) -> None:
    if N < 1:
        raise ParameterError(f"N must be at least 1, got {N}")
    if N > len(seq):
        raise SequenceRangeError(f"N={N} exceeds sequence length {len(seq)}")


@dataclass(frozen=True)
class FrequencySpec:
    """All k in Z^d with 0 < |k|_inf <= kmax"""
    dim: int
    kmax: int
    vectors: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError('dim', f"must be positive, got {self.dim}")
        if self.kmax < 1:
            raise ConfigurationError('kmax', f"frequency box is empty for kmax={self.kmax}")
        if self.vectors is None:
            axes = [np.arange(-self.kmax, self.kmax + 1)] * self.dim
            grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, self.dim)
            grid = grid[np.any(grid != 0, axis=1)]
            grid.setflags(write=False)
            object.__setattr__(self, 'vectors', grid)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def norms(self) -> np.ndarray:
        """Euclidean |k| of each vector"""
        return np.sqrt(np.sum(self.vectors.astype(float) ** 2, axis=1))


@dataclass(frozen=True)
class RegionSpec:
    """Annulus a <= ||x - y|| <= b, or weighted slab a <= x.y <= b"""
    kind: RegionKind
    a: float
    b: float
    metric: Metric = Metric.TORUS
    weight: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', RegionKind(self.kind))
        object.__setattr__(self, 'metric', Metric(self.metric))
        if not (0.0 < self.a <= self.b):
            raise ParameterError(f"region needs 0 < a <= b, got a={self.a}, b={self.b}")
        if self.kind is RegionKind.ANNULUS:
            if self.metric is Metric.TORUS and not self.b < 0.5:
                raise ParameterError(f"torus annulus needs b < 1/2, got b={self.b}")
            if self.weight is not None:
                raise ParameterError("annulus regions take no weight")
        elif self.weight is None:
            object.__setattr__(self, 'weight', 'bump')

    @classmethod
    def parse(cls, text: str) -> 'RegionSpec':
        """Parse `annulus:<a>:<b>` or `slab:<a>:<b>`"""
        parts = text.strip().split(':')
        if len(parts) != 3:
            raise ConfigurationError('region', f"expected kind:a:b, got {text!r}")
        try:
            kind = RegionKind(parts[0].lower())
            a, b = float(parts[1]), float(parts[2])
        except ValueError as e:
            raise ConfigurationError('region', f"cannot parse {text!r}: {e}") from e
        return cls(kind, a, b)

    def check_theorem_range(self) -> None:
        """Lower endpoint range under which the incidence theorems are stated"""
        if self.a < 0.01:
            raise ParameterError(f"theorem range requires a >= 1/100, got a={self.a}")

    def as_record(self) -> dict:
        return {'kind': self.kind.value, 'a': self.a, 'b': self.b}


# ---------------------------------------------------------------------------
# Distance kernels
# ---------------------------------------------------------------------------

def torus_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Broadcast torus distance between arrays of shape (..., d)

    Coordinates are accumulated one axis at a time so that a given pair always
    produces the same double, whatever shape it is evaluated in.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[-1] != Y.shape[-1]:
        raise DimensionMismatchError(f"dimension {X.shape[-1]} vs {Y.shape[-1]}")
    sq = None
    for i in range(X.shape[-1]):
        c = np.abs(X[..., i] - Y[..., i])
        c = c - np.floor(c)
        c = np.minimum(c, 1.0 - c)
        sq = c * c if sq is None else sq + c * c
    return np.sqrt(sq)


def euclidean_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Same accumulation order as torus_distances, without wraparound"""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[-1] != Y.shape[-1]:
        raise DimensionMismatchError(f"dimension {X.shape[-1]} vs {Y.shape[-1]}")
    sq = None
    for i in range(X.shape[-1]):
        c = X[..., i] - Y[..., i]
        sq = c * c if sq is None else sq + c * c
    return np.sqrt(sq)


def distances(X: np.ndarray, Y: np.ndarray, metric: Metric = Metric.TORUS) -> np.ndarray:
    if Metric(metric) is Metric.TORUS:
        return torus_distances(X, Y)
    return euclidean_distances(X, Y)


def torus_distance(x: Point, y: Point) -> float:
    """min over m in Z^d of |x - y - m|"""
    if x.dim != y.dim:
        raise DimensionMismatchError(f"cannot compare a {x.dim}-d point with a {y.dim}-d point")
    return float(torus_distances(x.as_array(), y.as_array()))


# ---------------------------------------------------------------------------
# Volumes
# ---------------------------------------------------------------------------

def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def ball_volume(r: float, d: int) -> float:
    if r == 0.0:
        return 0.0
    return unit_ball_volume(d) * r ** d


def annulus_volume(a: float, b: float, d: int) -> float:
    """Measure of {x in T^d : a <= ||x|| <= b}; torus balls are Euclidean for b < 1/2"""
    if d < 1:
        raise ParameterError(f"dimension must be positive, got {d}")
    if not (0.0 <= a <= b):
        raise ParameterError(f"annulus needs 0 <= a <= b, got a={a}, b={b}")
    if b >= 0.5:
        raise ParameterError(f"b={b} >= 1/2: the torus ball is no longer Euclidean")
    return ball_volume(b, d) - ball_volume(a, d)


# ---------------------------------------------------------------------------
# Randomness contract
# ---------------------------------------------------------------------------

def check_seed(seed: int) -> int:
    seed = int(seed)
    if not (0 <= seed < SEED_LIMIT):
        raise ConfigurationError('seed', f"must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(check_seed(seed)))


def derive_seed(seed: int, stream: int) -> int:
    """Child seed for an independent stream (e.g. the second slab sequence)"""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(int(stream),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def uniform_block(seed: int, N: int, d: int) -> np.ndarray:
    """First N points of the seeded uniform stream as an (N, d) array"""
    return make_rng(seed).random((N, d))


def seeded_uniform_stream(seed: int, d: int, block: int = 4096) -> Iterator[Point]:
    """Endless reproducible stream of uniform points; matches uniform_block row for row"""
    if d < 1:
        raise ParameterError(f"dimension must be positive, got {d}")
    rng = make_rng(seed)
    while True:
        for row in rng.random((block, d)):
            yield Point(tuple(row))


# ---------------------------------------------------------------------------
# Summation
# ---------------------------------------------------------------------------

def neumaier_accumulate(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Neumaier-compensated running sum of equally shaped real or complex arrays

    Blocks are combined strictly in the order given; returns the running totals
    (one per block) so checkpoints can be read off directly.
    """
    if len(blocks) == 0:
        raise ParameterError("nothing to sum")
    first = np.asarray(blocks[0])
    if np.iscomplexobj(first):
        re = neumaier_accumulate([np.real(b) for b in blocks])
        im = neumaier_accumulate([np.imag(b) for b in blocks])
        return re + 1j * im
    total = np.zeros_like(first, dtype=float)
    comp = np.zeros_like(total)
    out = []
    for block in blocks:
        block = np.asarray(block, dtype=float)
        t = total + block
        big = np.abs(total) >= np.abs(block)
        comp = comp + np.where(big, (total - t) + block, (block - t) + total)
        total = t
        out.append(total + comp)
    return np.stack(out)


def compensated_sum(values) -> complex:
    """Neumaier sum of a 1-d real or complex array, in index order"""
    arr = np.asarray(values)
    if arr.size == 0:
        return 0.0
    total = neumaier_accumulate(list(arr.ravel()))[-1]
    return complex(total) if np.iscomplexobj(arr) else float(total)


# ---------------------------------------------------------------------------
# Log-log regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float


def fit_loglog(xs, ys) -> LogLogFit:
    """Least-squares line through (log x, log y)"""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise DegenerateDataError(f"need at least two matching samples, got {x.size} and {y.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateDataError("log-log fit needs strictly positive data")
    lx, ly = np.log(x), np.log(y)
    if np.all(lx == lx[0]):
        raise DegenerateDataError("all abscissae coincide")
    if np.all(ly == ly[0]):
        # a flat line is fitted exactly
        return LogLogFit(0.0, float(ly[0]), 0.0, 1.0)
    res = stats.linregress(lx, ly)
    r2 = min(max(float(res.rvalue) ** 2, 0.0), 1.0)
    return LogLogFit(float(res.slope), float(res.intercept), float(res.stderr), r2)
