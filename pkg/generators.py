"""
Point-sequence generators
Builds the experimental subjects, selected by family name:
  - 'iid': seeded i.i.d. uniform points (the reference family)
  - 'kronecker': {n alpha} progressions
  - 'halton': radical-inverse sequences in pairwise coprime bases
  - 'lattice': the side^d grid, repeated with period side^d
  - 'lenz': equally spaced points on two orthogonal circles in dimension 4
  - 'clustered': points packed into a few tiny balls (negative control)

Sequences also round-trip through a line-oriented text format.
"""

import json
import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

import numpy as np

from core import (
    ConfigurationError,
    ParameterError,
    PointSequence,
    Provenance,
    RNG_ALGORITHM,
    check_seed,
    derive_seed,
    make_rng,
    reduce_mod1,
    uniform_block,
)

logger = logging.getLogger(__name__)

GOLDEN_CONJUGATE = (math.sqrt(5.0) - 1.0) / 2.0
LENZ_DEFAULT_SCALE = 0.25


class Family(str, Enum):
    IID = 'iid'
    KRONECKER = 'kronecker'
    HALTON = 'halton'
    LATTICE = 'lattice'
    LENZ = 'lenz'
    CLUSTERED = 'clustered'


def first_primes(count: int) -> list:
    primes = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


def default_alpha(d: int) -> list:
    """Golden-ratio conjugate in d=1, otherwise (sqrt 2, sqrt 3, sqrt 5, ...) mod 1"""
    if d == 1:
        return [GOLDEN_CONJUGATE]
    return [math.sqrt(p) % 1.0 for p in first_primes(d)]


@dataclass(frozen=True)
class GeneratorConfig:
    family: Family
    dim: int
    seed: int = 0
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            object.__setattr__(self, 'family', Family(self.family))
        except ValueError:
            raise ConfigurationError('family', f"unknown family {self.family!r}")
        if int(self.dim) < 1:
            raise ConfigurationError('dim', f"must be positive, got {self.dim}")
        object.__setattr__(self, 'dim', int(self.dim))
        object.__setattr__(self, 'seed', check_seed(self.seed))
        object.__setattr__(self, 'params', dict(self.params or {}))

    def with_seed(self, seed: int) -> 'GeneratorConfig':
        return GeneratorConfig(self.family, self.dim, seed, self.params)

    def resolved_params(self, N: Optional[int] = None) -> dict:
        """Family parameters with defaults filled in, validated"""
        p = dict(self.params)
        d = self.dim
        fam = self.family

        if fam is Family.KRONECKER:
            alpha = [float(a) for a in p.get('alpha', default_alpha(d))]
            if len(alpha) != d:
                raise ConfigurationError('alpha', f"needs {d} entries, got {len(alpha)}")
            p['alpha'] = alpha

        elif fam is Family.HALTON:
            bases = [int(b) for b in p.get('bases', first_primes(d))]
            if len(bases) != d:
                raise ConfigurationError('bases', f"needs {d} entries, got {len(bases)}")
            if any(b < 2 for b in bases):
                raise ConfigurationError('bases', f"every base must be >= 2, got {bases}")
            for i in range(d):
                for j in range(i + 1, d):
                    if math.gcd(bases[i], bases[j]) != 1:
                        raise ConfigurationError(
                            'bases', f"{bases[i]} and {bases[j]} are not coprime")
            p['bases'] = bases

        elif fam is Family.LATTICE:
            side = int(p.get('side', 0) or 0)
            if side < 1:
                if N is None:
                    raise ConfigurationError('side', "lattice side must be given")
                side = max(1, round(N ** (1.0 / d)))
            p['side'] = side

        elif fam is Family.LENZ:
            if d != 4:
                raise ConfigurationError('dim', f"the Lenz configuration lives in dimension 4, got {d}")
            m = p.get('points_per_circle')
            if m is None:
                if N is None:
                    raise ConfigurationError('points_per_circle', "must be given")
                m = (N + 1) // 2
            m = int(m)
            if m < 1:
                raise ConfigurationError('points_per_circle', f"must be positive, got {m}")
            scale = float(p.get('scale', LENZ_DEFAULT_SCALE))
            if not (0.0 < scale <= 0.25):
                raise ConfigurationError('scale', f"must lie in (0, 1/4], got {scale}")
            if N is not None and N > 2 * m:
                raise ConfigurationError(
                    'points_per_circle', f"{m} per circle gives {2 * m} points, {N} requested")
            p['points_per_circle'] = m
            p['scale'] = scale

        elif fam is Family.CLUSTERED:
            clusters = int(p.get('clusters', 4))
            radius = float(p.get('radius', 1e-3))
            if clusters < 1:
                raise ConfigurationError('clusters', f"must be positive, got {clusters}")
            if not (0.0 < radius < 0.5):
                raise ConfigurationError('radius', f"must lie in (0, 1/2), got {radius}")
            p['clusters'] = clusters
            p['radius'] = radius

        return p


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

def _kronecker(N: int, alpha: list) -> np.ndarray:
    n = np.arange(1, N + 1, dtype=float)
    return reduce_mod1(np.outer(n, np.asarray(alpha, dtype=float)))


def radical_inverse(index: np.ndarray, base: int) -> np.ndarray:
    """van der Corput radical inverse of non-negative integers"""
    n = np.array(index, dtype=np.int64, copy=True)
    result = np.zeros(n.shape, dtype=float)
    f = 1.0 / base
    while np.any(n > 0):
        n, digit = np.divmod(n, base)
        result += f * digit
        f /= base
    return result


def _halton(N: int, bases: list) -> np.ndarray:
    index = np.arange(1, N + 1, dtype=np.int64)
    return np.stack([radical_inverse(index, b) for b in bases], axis=1)


def _lattice(N: int, side: int, d: int) -> np.ndarray:
    idx = np.arange(N, dtype=np.int64) % (side ** d)
    cols = []
    for i in range(d):
        digit = (idx // side ** (d - 1 - i)) % side
        cols.append(digit / side)
    return np.stack(cols, axis=1)


def _lenz(N: int, m: int, scale: float) -> np.ndarray:
    pts = np.full((N, 4), 0.5)
    j = np.arange(N)
    first = j < m
    theta = 2.0 * np.pi * (j % m) / m
    pts[first, 0] = 0.5 + scale * np.cos(theta[first])
    pts[first, 1] = 0.5 + scale * np.sin(theta[first])
    pts[~first, 2] = 0.5 + scale * np.cos(theta[~first])
    pts[~first, 3] = 0.5 + scale * np.sin(theta[~first])
    return pts


def _clustered(N: int, d: int, seed: int, clusters: int, radius: float) -> np.ndarray:
    # separate streams keep every prefix identical to a shorter run
    centers = make_rng(seed).random((clusters, d))
    directions = make_rng(derive_seed(seed, 1)).standard_normal((N, d))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    r = radius * make_rng(derive_seed(seed, 2)).random((N, 1)) ** (1.0 / d)
    return reduce_mod1(centers[np.arange(N) % clusters] + r * directions / norms)


def generate(config: GeneratorConfig, N: int) -> PointSequence:
    """Exactly N points of the configured family; deterministic given config"""
    if N < 1:
        raise ParameterError(f"N must be at least 1, got {N}")
    params = config.resolved_params(N)
    d = config.dim
    fam = config.family

    if fam is Family.IID:
        coords = uniform_block(config.seed, N, d)
    elif fam is Family.KRONECKER:
        coords = _kronecker(N, params['alpha'])
    elif fam is Family.HALTON:
        coords = _halton(N, params['bases'])
    elif fam is Family.LATTICE:
        coords = _lattice(N, params['side'], d)
    elif fam is Family.LENZ:
        coords = _lenz(N, params['points_per_circle'], params['scale'])
    else:
        coords = _clustered(N, d, config.seed, params['clusters'], params['radius'])

    provenance = Provenance(fam.value, params, config.seed, RNG_ALGORITHM)
    logger.debug(f"Generated {N} {fam.value} points in dimension {d}")
    return PointSequence(coords, provenance)


def lenz_cross_distance(scale: float) -> float:
    """Common distance between the two Lenz circles of radius `scale`"""
    if scale <= 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    return math.sqrt(2.0) * scale


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def format_sequence(seq: PointSequence) -> str:
    """Header line, params line, then one point per line at 17 significant digits"""
    prov = seq.provenance
    lines = [
        f"# dim={seq.dim} family={prov.family} seed={prov.seed} n={len(seq)}",
        f"# params={json.dumps(prov.params, sort_keys=True)}",
    ]
    for row in seq.coords:
        lines.append(' '.join(f"{x:.17g}" for x in row))
    return '\n'.join(lines) + '\n'


def parse_sequence(text: str) -> PointSequence:
    lines = text.splitlines()
    if not lines or not lines[0].startswith('#'):
        raise ConfigurationError('header', "missing '# dim=... family=... seed=... n=...' line")
    header = {}
    for token in lines[0][1:].split():
        key, _, value = token.partition('=')
        header[key] = value
    try:
        dim = int(header['dim'])
        n = int(header['n'])
        family = header['family']
        seed = int(header['seed'])
    except (KeyError, ValueError) as e:
        raise ConfigurationError('header', f"malformed header {lines[0]!r}: {e}") from e

    if dim < 1:
        raise ConfigurationError('header', f"dim must be at least 1, got {dim}")

    params = {}
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith('# params='):
            try:
                params = json.loads(line[len('# params='):])
            except json.JSONDecodeError as e:
                raise ConfigurationError('params', f"line {lineno}: {e}") from e
            continue
        if line.startswith('#'):
            continue
        tokens = line.split()
        if len(tokens) != dim:
            raise ConfigurationError('points', f"line {lineno}: expected {dim} coordinates, got {len(tokens)}")
        try:
            rows.append([float(x) for x in tokens])
        except ValueError as e:
            raise ConfigurationError('points', f"line {lineno}: {e}") from e

    coords = np.asarray(rows, dtype=float) if rows else np.zeros((0, dim))
    if coords.shape[0] != n:
        raise ConfigurationError('n', f"header says {n} points, found {coords.shape[0]}")
    if n == 0:
        raise ConfigurationError('n', "sequence file holds no points")
    return PointSequence(coords, Provenance(family, params, seed, RNG_ALGORITHM))
