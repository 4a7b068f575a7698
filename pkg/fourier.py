"""
Fourier analysis on the torus
- the smooth mollifier rho_delta in spatial and Fourier-series form
- Fourier transforms of annuli, spheres and balls (Bessel J0/J1 in d=2)
- decay-rate fits for those transforms
- remainder-bound formulas for the annulus and slab incidence theorems
- the bump weight psi used by slab counts
- the smoothed spectral annulus count
"""

import math
import logging
import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from core import (
    FrequencySpec,
    ParameterError,
    Point,
    PointSequence,
    annulus_volume,
    ball_volume,
    fit_loglog,
    reduce_mod1,
)
from weyl import weyl_profile

logger = logging.getLogger(__name__)

BESSEL_SWITCH = 14.0
BUMP_NODES = 2048
SUPPORTED_MOLLIFIER_DIMS = (1, 2, 3)
# psi = product of exp(1 - 1/(1 - t^2)), t = (x_i - 1/2) / PSI_HALF_WIDTH
PSI_HALF_WIDTH = 0.4
# frequency (in cycles) past which the 1-d bump transform is below ~1e-13
BUMP_BANDWIDTH = 130.0


class MollifierMode(str, Enum):
    SPATIAL = 'spatial'
    FOURIER = 'fourier'


# ---------------------------------------------------------------------------
# The one-dimensional bump
# ---------------------------------------------------------------------------

def _bump(t) -> np.ndarray:
    """exp(-1/(1 - t^2)) on (-1, 1), zero elsewhere"""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


@lru_cache(maxsize=1)
def _bump_quadrature() -> Tuple[np.ndarray, np.ndarray]:
    # trapezoid weights; the bump is flat to all orders at +-1
    t = np.linspace(-1.0, 1.0, BUMP_NODES + 1)
    h = 2.0 / BUMP_NODES
    return t, _bump(t) * h


def bump_transform(freqs) -> np.ndarray:
    """Cosine transform of the bump: integral of exp(-1/(1-t^2)) cos(2 pi f t) dt"""
    f = np.abs(np.asarray(freqs, dtype=float))
    t, w = _bump_quadrature()
    flat = f.ravel()
    out = np.empty(flat.shape)
    step = 256
    for lo in range(0, flat.size, step):
        chunk = flat[lo:lo + step]
        angle = 2.0 * np.pi * reduce_mod1(chunk[:, None] * t[None, :])
        out[lo:lo + step] = np.cos(angle) @ w
    return out.reshape(f.shape)


@lru_cache(maxsize=1)
def bump_mass() -> float:
    """Integral of the 1-d bump over (-1, 1)"""
    return float(bump_transform(0.0))


# ---------------------------------------------------------------------------
# Mollifier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mollifier:
    """rho_delta(x) = delta^-d rho(x / delta), periodized onto the torus

    rho is a tensor product of 1-d bumps rescaled by sqrt(d), so its support
    is the cube of half-diagonal 1 and its transform factorizes over
    coordinates. rho is not radial: points at equal |x| along an axis and
    along a diagonal get different values.
    """
    delta: float
    dim: int

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.dim not in SUPPORTED_MOLLIFIER_DIMS:
            raise ParameterError(f"mollifier supports d in {SUPPORTED_MOLLIFIER_DIMS}, got {self.dim}")

    @property
    def scale(self) -> float:
        return math.sqrt(self.dim)

    @property
    def floor(self) -> float:
        """Lower bound of rho on the ball of radius 1/2"""
        s = self.scale
        peak = float(_bump(0.0))
        return (s / bump_mass()) ** self.dim * float(_bump(s / 2.0)) * peak ** (self.dim - 1)

    def profile(self, Y) -> np.ndarray:
        """Unscaled rho at points of R^d, shape (..., d)"""
        Y = np.asarray(Y, dtype=float)
        s = self.scale
        c = s / bump_mass()
        out = np.ones(Y.shape[:-1])
        for i in range(self.dim):
            out = out * (c * _bump(s * Y[..., i]))
        return out

    def spatial(self, X) -> np.ndarray:
        X = reduce_mod1(np.asarray(X, dtype=float))
        total = np.zeros(X.shape[:-1])
        for shift in itertools.product((-1.0, 0.0, 1.0), repeat=self.dim):
            total = total + self.profile((X - np.asarray(shift)) / self.delta)
        return total / self.delta ** self.dim

    def fourier_transform(self, K) -> np.ndarray:
        """rho_hat(delta k) for frequency vectors k of shape (..., d)"""
        K = np.asarray(K, dtype=float)
        args = np.abs(K) * (self.delta / self.scale)
        uniq, inverse = np.unique(args, return_inverse=True)
        table = bump_transform(uniq) / bump_mass()
        factors = table[inverse].reshape(args.shape)
        return np.prod(factors, axis=-1)

    def default_truncation(self) -> int:
        return int(math.ceil(BUMP_BANDWIDTH * self.scale / self.delta))

    def fourier_series(self, X, truncation: int) -> np.ndarray:
        """Box-truncated sum over |k|_inf <= truncation of rho_hat(delta k) e(k.x)

        The box sum factorizes into one cosine series per coordinate.
        """
        if truncation < 1:
            raise ParameterError(f"truncation must be at least 1, got {truncation}")
        X = reduce_mod1(np.asarray(X, dtype=float))
        k = np.arange(1, truncation + 1, dtype=float)
        coef = bump_transform(k * (self.delta / self.scale)) / bump_mass()
        c0 = 1.0
        out = np.ones(X.shape[:-1])
        flat = X.reshape(-1, self.dim)
        for i in range(self.dim):
            x = flat[:, i]
            factor = np.full(x.shape, c0)
            step = 512
            for lo in range(0, k.size, step):
                angle = 2.0 * np.pi * reduce_mod1(x[:, None] * k[None, lo:lo + step])
                factor = factor + 2.0 * (np.cos(angle) @ coef[lo:lo + step])
            out = out * factor.reshape(X.shape[:-1])
        return out


def mollifier_value(mollifier: Mollifier, x, mode: MollifierMode = MollifierMode.SPATIAL,
                    truncation: Optional[int] = None):
    """rho_delta at a Point (float) or at an array of points (ndarray)"""
    single = isinstance(x, Point)
    X = x.as_array() if single else np.asarray(x, dtype=float)
    if X.shape[-1] != mollifier.dim:
        raise ParameterError(f"point is {X.shape[-1]}-d, mollifier is {mollifier.dim}-d")
    if MollifierMode(mode) is MollifierMode.SPATIAL:
        value = mollifier.spatial(X)
    else:
        T = truncation if truncation is not None else mollifier.default_truncation()
        value = mollifier.fourier_series(X, T)
    return float(value) if single else value


# ---------------------------------------------------------------------------
# Bessel functions
# ---------------------------------------------------------------------------

def _bessel_series(n: int, x: np.ndarray) -> np.ndarray:
    half = x / 2.0
    term = half ** n / math.factorial(n)
    total = term.copy()
    h2 = half * half
    for k in range(1, 60):
        term = term * (-h2) / (k * (k + n))
        total = total + term
    return total


def _bessel_asymptotic(n: int, x: np.ndarray) -> np.ndarray:
    """Hankel expansion, stopped per element at its smallest term"""
    mu = 4.0 * n * n
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    term = np.ones_like(x)
    prev = np.full(x.shape, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, 48):
        term = term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        mag = np.abs(term)
        active &= mag < prev
        prev = np.where(active, mag, prev)
        contrib = np.where(active, term, 0.0)
        if k % 2:
            Q = Q + (-1) ** ((k - 1) // 2) * contrib
        else:
            P = P + (-1) ** (k // 2) * contrib
    chi = x - (n / 2.0 + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))


def _bessel(n: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.empty(ax.shape)
    small = ax < BESSEL_SWITCH
    out[small] = _bessel_series(n, ax[small])
    out[~small] = _bessel_asymptotic(n, ax[~small])
    if n % 2:
        out = np.where(x < 0, -out, out)
    return out


def bessel_j0(x):
    """J0 by power series below BESSEL_SWITCH and Hankel asymptotics above"""
    out = _bessel(0, x)
    return float(out) if np.ndim(out) == 0 else out


def bessel_j1(x):
    out = _bessel(1, x)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Transforms of radial sets
# ---------------------------------------------------------------------------

def _radius_of(k) -> np.ndarray:
    K = np.asarray(k, dtype=float)
    if K.ndim == 0:
        raise ParameterError("frequency must be a vector")
    return np.sqrt(np.sum(K * K, axis=-1))


def _check_dim(d: int, allowed=(2, 3)) -> None:
    if d not in allowed:
        raise ParameterError(f"closed forms are available for d in {allowed}, got {d}")


def _ball_radial(r: float, d: int, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    out = np.full(rho.shape, ball_volume(r, d))
    nz = rho > 0
    p = rho[nz]
    u = 2.0 * np.pi * r * p
    if d == 1:
        out[nz] = np.sin(u) / (np.pi * p)
    elif d == 2:
        out[nz] = r * _bessel(1, u) / p
    else:
        tiny = u < 1e-2
        val = np.empty(u.shape)
        us = u[tiny]
        val[tiny] = (4.0 * np.pi * r ** 3 / 3.0) * (1.0 - us * us / 10.0 + us ** 4 / 280.0)
        ul, pl = u[~tiny], p[~tiny]
        val[~tiny] = (np.sin(ul) - ul * np.cos(ul)) / (2.0 * np.pi ** 2 * pl ** 3)
        out[nz] = val
    return out


def _annulus_radial(a: float, b: float, d: int, rho: np.ndarray) -> np.ndarray:
    out = _ball_radial(b, d, rho) - _ball_radial(a, d, rho)
    return np.where(np.asarray(rho) == 0, annulus_volume(a, b, d), out)


def _sphere_radial(r: float, d: int, rho: np.ndarray) -> np.ndarray:
    u = 2.0 * np.pi * r * np.asarray(rho, dtype=float)
    if d == 2:
        return _bessel(0, u)
    return np.sinc(u / np.pi)


def _scalar_or_array(values: np.ndarray):
    return float(values) if np.ndim(values) == 0 else values


def ball_fourier(r: float, d: int, k):
    """Transform of the indicator of the ball of radius r, d in {1, 2, 3}"""
    _check_dim(d, (1, 2, 3))
    if not (0.0 < r < 0.5):
        raise ParameterError(f"radius must lie in (0, 1/2), got {r}")
    return _scalar_or_array(_ball_radial(r, d, _radius_of(k)))


def annulus_fourier(a: float, b: float, d: int, k):
    """Transform of 1{a <= ||x|| <= b}; k = 0 gives the annulus volume"""
    _check_dim(d)
    if not (0.01 <= a < b < 0.5):
        raise ParameterError(f"annulus transform needs 1/100 <= a < b < 1/2, got a={a}, b={b}")
    return _scalar_or_array(_annulus_radial(a, b, d, _radius_of(k)))


def sphere_measure_fourier(r: float, d: int, k):
    """Transform of normalized surface measure on the sphere of radius r"""
    _check_dim(d)
    if not (0.01 <= r <= 0.5):
        raise ParameterError(f"sphere radius must lie in [1/100, 1/2], got {r}")
    return _scalar_or_array(_sphere_radial(r, d, _radius_of(k)))


# ---------------------------------------------------------------------------
# Decay fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    kind: str
    dim: int
    slope: float
    intercept: float
    r_squared: float
    kmin: float
    kmax: float
    predicted_slope: float
    samples: Tuple[Tuple[float, float], ...]

    def as_record(self) -> dict:
        return {
            'kind': self.kind,
            'dim': self.dim,
            'slope': self.slope,
            'intercept': self.intercept,
            'r_squared': self.r_squared,
            'range': [self.kmin, self.kmax],
            'predicted_slope': self.predicted_slope,
        }

    def rows(self) -> Tuple[List[str], List[list]]:
        return ['k', 'value', 'abs_value'], [[k, v, abs(v)] for k, v in self.samples]


def decay_fit(kind: str, d: int, a: Optional[float] = None, b: Optional[float] = None,
              r: Optional[float] = None, kmin: float = 4.0, kmax: float = 128.0,
              samples_per_shell: int = 2048) -> DecayFit:
    """Slope of log RMS|f| over dyadic shells [kmin 2^j, kmin 2^{j+1}) against log |k|

    Averaging whole shells smooths out both the fast oscillation and the
    beating between the inner and outer spheres of an annulus.
    """
    _check_dim(d)
    if kind == 'annulus':
        if a is None or b is None:
            raise ParameterError("annulus decay needs a and b")
        annulus_fourier(a, b, d, np.zeros(d))
        fn = lambda rho: _annulus_radial(a, b, d, rho)
        predicted = -(d + 1) / 2.0
    elif kind == 'ball':
        if r is None:
            raise ParameterError("ball decay needs r")
        ball_fourier(r, d, np.zeros(d))
        fn = lambda rho: _ball_radial(r, d, rho)
        predicted = -(d + 1) / 2.0
    elif kind == 'sphere':
        if r is None:
            raise ParameterError("sphere decay needs r")
        sphere_measure_fourier(r, d, np.zeros(d))
        fn = lambda rho: _sphere_radial(r, d, rho)
        predicted = -(d - 1) / 2.0
    else:
        raise ParameterError(f"unknown transform kind {kind!r}")
    if not (0 < kmin < kmax):
        raise ParameterError(f"need 0 < kmin < kmax, got {kmin}, {kmax}")

    centers, rms, samples = [], [], []
    lo = float(kmin)
    while lo < kmax:
        hi = min(2.0 * lo, float(kmax))
        rho = lo + (hi - lo) * (np.arange(samples_per_shell) + 0.5) / samples_per_shell
        vals = fn(rho)
        centers.append(math.sqrt(lo * hi))
        rms.append(float(np.sqrt(np.mean(vals * vals))))
        samples.extend(zip(rho.tolist(), vals.tolist()))
        lo = hi

    fit = fit_loglog(centers, rms)
    logger.debug(f"{kind} decay in d={d}: slope {fit.slope:.4f} (predicted {predicted})")
    return DecayFit(kind, d, fit.slope, fit.intercept, fit.r_squared,
                    float(kmin), float(kmax), predicted, tuple(samples))


# ---------------------------------------------------------------------------
# Remainder bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RemainderBound:
    delta_star: float
    bound: float
    count_exponent: float

    def as_record(self) -> dict:
        return {'delta_star': self.delta_star, 'bound': self.bound,
                'count_exponent': self.count_exponent}


@dataclass(frozen=True)
class SupportBound:
    delta_star: float
    predicted_support: float
    exponent: float
    diffset_exponent: float


def _check_bound_args(gamma: float, N: float, eps: float) -> None:
    if not (0.0 <= gamma <= 0.5):
        raise ParameterError(f"gamma must lie in [0, 1/2], got {gamma}")
    if N < 2:
        raise ParameterError(f"N must be at least 2, got {N}")
    if eps < 0:
        raise ParameterError(f"eps must be non-negative, got {eps}")


def theorem1_bound_terms(delta: float, gamma: float, d: int, N: float, eps: float) -> Tuple[float, float]:
    """The two competing terms: smoothing error delta, spectral error N^-2g delta^-((d-1)/2 + 2eps)"""
    _check_bound_args(gamma, N, eps)
    if delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    return delta, N ** (-2.0 * gamma) * delta ** (-(d - 1) / 2.0 - 2.0 * eps)


def theorem1_remainder_bound(gamma: float, d: int, N: float, eps: float) -> RemainderBound:
    """Balanced annulus remainder: |R|/N^2 <~ N^{-4g/(d+1) + eps}"""
    _check_bound_args(gamma, N, eps)
    if d < 2:
        raise ParameterError(f"annulus bound needs d >= 2, got {d}")
    rate = 4.0 * gamma / (d + 1)
    return RemainderBound(N ** (-rate), N ** (-rate + eps), 2.0 - rate + eps)


def theorem2_bound_terms(delta: float, gamma: float, N: float, eps: float) -> Tuple[float, float]:
    _check_bound_args(gamma, N, eps)
    if delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    return delta, delta ** (-eps) * N ** (-gamma)


def theorem2_remainder_bound(gamma: float, N: float, eps: float) -> RemainderBound:
    """Balanced slab remainder: |R|/N^2 <~ N^{-g + eps}"""
    _check_bound_args(gamma, N, eps)
    return RemainderBound(N ** (-gamma), N ** (-gamma + eps), 2.0 - gamma + eps)


def support_bound(gamma: float, d: int, N: float, eps: float) -> SupportBound:
    """Support lower bound ~ 1 / (delta^d + delta^-eps N^-2g) at delta = N^{-2g/d}"""
    _check_bound_args(gamma, N, eps)
    if d < 1:
        raise ParameterError(f"dimension must be positive, got {d}")
    delta = N ** (-2.0 * gamma / d)
    predicted = 1.0 / (delta ** d + delta ** (-eps) * N ** (-2.0 * gamma))
    return SupportBound(delta, predicted, 2.0 * gamma - eps, 4.0 * gamma - 2.0 * eps)


# ---------------------------------------------------------------------------
# Bump weight and spectral counts
# ---------------------------------------------------------------------------

def bump_psi(x):
    """Smooth weight supported in [0.1, 0.9]^d, equal to 1 at the centre"""
    single = isinstance(x, Point)
    X = x.as_array() if single else np.asarray(x, dtype=float)
    T = (X - 0.5) / PSI_HALF_WIDTH
    out = np.ones(X.shape[:-1])
    for i in range(X.shape[-1]):
        out = out * (math.e * _bump(T[..., i]))
    return float(out) if single or np.ndim(out) == 0 else out


def spectral_annulus_count(seq: PointSequence, a: float, b: float, N: int, delta: float,
                           kmax: int, threads: int = 1) -> float:
    """Smoothed count sum_{n,m} (1_A * rho_delta)(v_n - v_m) from the Weyl sums

    N^2 (|A| + sum_{0 < |k|_inf <= kmax} 1_A^(k) rho^(delta k) |S_N(k)/N|^2).
    Lies between the sharp counts for [a+delta, b-delta] and [a-delta, b+delta].
    """
    d = seq.dim
    _check_dim(d)
    if not (0.0 < delta < a) or b + delta >= 0.5:
        raise ParameterError(f"need 0 < delta < a and b + delta < 1/2, got delta={delta}")
    freq = FrequencySpec(d, kmax)
    profile = weyl_profile(seq, freq, [N], epsilon=0.0, threads=threads)
    K = freq.vectors
    power = profile.normalized()[:, 0] ** 2
    terms = _annulus_radial(a, b, d, _radius_of(K)) * Mollifier(delta, d).fourier_transform(K) * power
    return float(N) ** 2 * (annulus_volume(a, b, d) + math.fsum(terms.tolist()))
