"""
Experiment harness
Runs incidence counts across checkpoints and seeds, fits log-log scaling
slopes, compares them with the predicted exponents and writes CSV / JSON
results. Experiments are described by an ExperimentConfig, loaded from a JSON
file and/or command-line overrides.
"""

import csv
import io
import json
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from core import (
    ConfigurationError,
    DegenerateDataError,
    Metric,
    ParameterError,
    RegionKind,
    RegionSpec,
    derive_seed,
    fit_loglog,
)
from fourier import support_bound, theorem1_remainder_bound, theorem2_remainder_bound
from generators import Family, GeneratorConfig, generate, lenz_cross_distance
from incidence import (
    DEFAULT_ETA,
    DEFAULT_MC_SAMPLES,
    IncidenceReport,
    count_annulus,
    count_slab,
    difference_set_count,
    exact_distance_count,
    support_count,
)
from weyl import DEFAULT_EPSILON, estimate_gamma, frequency_box, weyl_profile

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.15
SWEEP_COLUMNS = ['seed', 'N', 'count', 'main_term', 'remainder', 'abs_remainder']


class Verdict(str, Enum):
    WITHIN_BOUND = 'WithinBound'
    EXCEEDS_BOUND = 'Exceeds'


class Statistic(str, Enum):
    MEDIAN = 'median'
    RMS = 'rms'


def verdict(slope: float, predicted: float, tolerance: float, direction: str = 'upper') -> Verdict:
    """Upper bounds hold when slope <= predicted + tol; lower bounds when slope >= predicted - tol"""
    if direction not in ('upper', 'lower'):
        raise ParameterError(f"direction must be upper or lower, got {direction!r}")
    ok = slope >= predicted - tolerance if direction == 'lower' else slope <= predicted + tolerance
    return Verdict.WITHIN_BOUND if ok else Verdict.EXCEEDS_BOUND


def aggregate(values: Sequence[float], statistic: Statistic) -> float:
    arr = np.abs(np.asarray(values, dtype=float))
    if Statistic(statistic) is Statistic.RMS:
        return float(np.sqrt(np.mean(arr * arr)))
    return float(np.median(arr))


# ---------------------------------------------------------------------------
# Output formatting
# ---------------------------------------------------------------------------

def format_number(value) -> str:
    """17 significant digits for floats, plain digits for integers"""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def dumps17(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written at 17 significant digits"""
    pad = ' ' * (indent * (_level + 1))
    end = ' ' * (indent * _level)
    if isinstance(obj, Enum):
        obj = obj.value
    if isinstance(obj, np.generic):
        obj = obj.item()
    if obj is None:
        return 'null'
    if isinstance(obj, bool):
        return 'true' if obj else 'false'
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_number(obj) if math.isfinite(obj) else 'null'
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return '{}'
        items = [f"{pad}{json.dumps(str(k))}: {dumps17(v, indent, _level + 1)}" for k, v in obj.items()]
        return '{\n' + ',\n'.join(items) + '\n' + end + '}'
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return '[]'
        return '[' + ', '.join(dumps17(v, indent, _level + 1) for v in seq) + ']'
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(target: Union[str, Path, TextIO], header: Sequence[str], rows: Sequence[Sequence]) -> None:
    def emit(stream):
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])

    if isinstance(target, (str, Path)):
        with open(target, 'w', newline='') as f:
            emit(f)
    else:
        emit(target)


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()


def write_json(target: Union[str, Path], record) -> None:
    with open(target, 'w') as f:
        f.write(dumps17(record) + '\n')


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorConfig
    checkpoints: Tuple[int, ...]
    seeds: Tuple[int, ...]
    region: Optional[RegionSpec] = None
    gamma: Optional[float] = None
    epsilon: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE
    statistic: Statistic = Statistic.MEDIAN
    mc_samples: int = DEFAULT_MC_SAMPLES
    mc_seed: int = 0
    threads: int = 1
    out: Optional[str] = None
    fit_out: Optional[str] = None

    def __post_init__(self):
        cps = tuple(int(n) for n in self.checkpoints)
        if not cps or any(n < 1 for n in cps):
            raise ConfigurationError('checkpoints', f"need positive checkpoints, got {cps}")
        if any(b <= a for a, b in zip(cps[:-1], cps[1:])):
            raise ConfigurationError('checkpoints', f"must be strictly increasing, got {cps}")
        object.__setattr__(self, 'checkpoints', cps)
        seeds = tuple(sorted(int(s) for s in self.seeds))
        if not seeds:
            raise ConfigurationError('seeds', "at least one seed is required")
        object.__setattr__(self, 'seeds', seeds)
        try:
            object.__setattr__(self, 'statistic', Statistic(self.statistic))
        except ValueError:
            raise ConfigurationError('statistic', f"expected median or rms, got {self.statistic!r}")
        if self.gamma is not None and not (0.0 <= self.gamma <= 0.5):
            raise ConfigurationError('gamma', f"must lie in [0, 1/2], got {self.gamma}")
        if self.tolerance < 0:
            raise ConfigurationError('tolerance', f"must be non-negative, got {self.tolerance}")
        if self.threads < 1:
            raise ConfigurationError('threads', f"must be positive, got {self.threads}")


def parse_seeds(value, base: int = 0) -> Tuple[int, ...]:
    """An integer is a count of consecutive seeds from `base`; a list is taken as is"""
    if isinstance(value, str):
        value = value.strip()
        if ',' in value:
            value = [int(v) for v in value.split(',') if v.strip()]
        else:
            value = int(value)
    if isinstance(value, int):
        if value < 1:
            raise ConfigurationError('seeds', f"seed count must be positive, got {value}")
        return tuple(range(base, base + value))
    return tuple(int(v) for v in value)


def _region_from(value) -> Optional[RegionSpec]:
    if value is None or isinstance(value, RegionSpec):
        return value
    if isinstance(value, str):
        return RegionSpec.parse(value)
    try:
        return RegionSpec(value['kind'], float(value['a']), float(value['b']),
                          value.get('metric', Metric.TORUS))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError('region', f"cannot build region from {value!r}: {e}") from e


def load_experiment_config(path: Optional[Union[str, Path]] = None,
                           defaults: Optional[dict] = None, **overrides) -> ExperimentConfig:
    """Experiment from a JSON file

    Precedence: keyword overrides that are not None, then the file, then `defaults`.
    """
    doc: Dict = dict(defaults or {})
    if path is not None:
        try:
            with open(path) as f:
                doc.update(json.load(f))
        except json.JSONDecodeError as e:
            raise ConfigurationError('config', f"{path} is not valid JSON: {e}") from e

    gen_doc = dict(doc.get('generator', {}))
    for key in ('family', 'dim', 'params'):
        if overrides.get(key) is not None:
            gen_doc[key] = overrides[key]
    merged = {k: v for k, v in doc.items() if k != 'generator'}
    merged.update({k: v for k, v in overrides.items()
                   if v is not None and k not in ('family', 'dim', 'params')})

    if 'family' not in gen_doc or 'dim' not in gen_doc:
        raise ConfigurationError('generator', "family and dim are required")
    if 'checkpoints' not in merged:
        raise ConfigurationError('checkpoints', "no checkpoints given")

    seed_base = int(merged.pop('seed', 0))
    generator = GeneratorConfig(gen_doc['family'], int(gen_doc['dim']), seed_base,
                                gen_doc.get('params', {}))
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(merged) - known
    if unknown:
        raise ConfigurationError('config', f"unknown keys {sorted(unknown)}")
    merged['seeds'] = parse_seeds(merged.get('seeds', 1), seed_base)
    merged['region'] = _region_from(merged.get('region'))
    if 'mc_samples' in merged:
        merged['mc_samples'] = int(merged['mc_samples'])
    return ExperimentConfig(generator=generator, **merged)


# ---------------------------------------------------------------------------
# Gamma resolution
# ---------------------------------------------------------------------------

def resolve_gamma(config: ExperimentConfig) -> float:
    """Assumed gamma, or the fitted exponent of the first seed clamped to [0, 1/2]"""
    if config.gamma is not None:
        return config.gamma
    cps = config.checkpoints
    if len(cps) < 3:
        top = cps[-1]
        cps = tuple(sorted({max(1, top // 4), max(2, top // 2), top}))
    if len(cps) < 3:
        raise DegenerateDataError("cannot estimate gamma from fewer than 3 checkpoints")
    seq = generate(config.generator.with_seed(config.seeds[0]), cps[-1])
    profile = weyl_profile(seq, frequency_box(seq.dim), cps, DEFAULT_EPSILON, config.threads)
    fit = estimate_gamma(profile)
    gamma = min(max(fit.gamma_hat, 0.0), 0.5)
    logger.info(f"Estimated gamma={fit.gamma_hat:.4f} (r^2={fit.r_squared:.3f}), using {gamma:.4f}")
    return gamma


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    predicted_slope: float
    tolerance: float
    verdict: Verdict
    gamma: float
    statistic: Statistic
    checkpoints: Tuple[int, ...]
    values: Tuple[float, ...]
    dropped: Tuple[int, ...] = ()
    direction: str = 'upper'
    rows: Tuple[tuple, ...] = field(default=(), repr=False)
    columns: Tuple[str, ...] = tuple(SWEEP_COLUMNS)

    def as_record(self) -> dict:
        return {
            'slope': self.slope,
            'intercept': self.intercept,
            'r_squared': self.r_squared,
            'predicted_slope': self.predicted_slope,
            'tolerance': self.tolerance,
            'verdict': self.verdict.value,
            'gamma': self.gamma,
            'statistic': self.statistic.value,
            'checkpoints': list(self.checkpoints),
            'values': list(self.values),
            'dropped': list(self.dropped),
            'bound': self.direction,
        }


def _fan_out(fn, seeds: Sequence[int], threads: int) -> list:
    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, seeds))
    return [fn(s) for s in seeds]


def _fit_values(checkpoints, values, predicted, tolerance, gamma, statistic, direction,
                rows, columns) -> ScalingFit:
    kept = [(n, v) for n, v in zip(checkpoints, values) if v > 0]
    dropped = tuple(n for n, v in zip(checkpoints, values) if not v > 0)
    if dropped:
        logger.warning(f"Dropping checkpoints with zero statistic: {list(dropped)}")
    if len(kept) < 3:
        raise DegenerateDataError(f"only {len(kept)} checkpoints left after dropping zeros; need 3")
    ns, vs = zip(*kept)
    fit = fit_loglog(ns, vs)
    return ScalingFit(
        slope=fit.slope,
        intercept=fit.intercept,
        r_squared=fit.r_squared,
        predicted_slope=predicted,
        tolerance=tolerance,
        verdict=verdict(fit.slope, predicted, tolerance, direction),
        gamma=gamma,
        statistic=Statistic(statistic),
        checkpoints=tuple(ns),
        values=tuple(vs),
        dropped=dropped,
        direction=direction,
        rows=tuple(rows),
        columns=tuple(columns),
    )


def scaling_sweep(config: ExperimentConfig, method: str = 'grid') -> ScalingFit:
    """|R(N)| across checkpoints and seeds, fitted against N on log-log axes"""
    region = config.region
    if region is None:
        raise ConfigurationError('region', "a scaling sweep needs a region")
    d = config.generator.dim
    top = config.checkpoints[-1]
    gamma = resolve_gamma(config)

    if region.kind is RegionKind.ANNULUS:
        predicted = theorem1_remainder_bound(gamma, d, top, config.epsilon).count_exponent

        def job(seed: int) -> List[IncidenceReport]:
            seq = generate(config.generator.with_seed(seed), top)
            return [count_annulus(seq, region, N, method) for N in config.checkpoints]
    else:
        predicted = theorem2_remainder_bound(gamma, top, config.epsilon).count_exponent

        def job(seed: int) -> List[IncidenceReport]:
            seq_v = generate(config.generator.with_seed(seed), top)
            seq_w = generate(config.generator.with_seed(derive_seed(seed, 1)), top)
            return [count_slab(seq_v, seq_w, region, N, config.mc_samples, config.mc_seed)
                    for N in config.checkpoints]

    logger.info(f"Sweep {region.kind.value} [{region.a}, {region.b}] over {len(config.seeds)} seeds, "
                f"checkpoints {list(config.checkpoints)}")
    per_seed = _fan_out(job, config.seeds, config.threads)

    rows = []
    for seed, reports in zip(config.seeds, per_seed):
        for r in reports:
            rows.append((seed, r.N, r.count, r.main_term, r.remainder, abs(r.remainder)))
    values = [aggregate([reports[i].remainder for reports in per_seed], config.statistic)
              for i in range(len(config.checkpoints))]
    fit = _fit_values(config.checkpoints, values, predicted, config.tolerance, gamma,
                      config.statistic, 'upper', rows, SWEEP_COLUMNS)
    logger.info(f"Fitted slope {fit.slope:.4f} vs predicted {predicted:.4f}: {fit.verdict.value}")
    return fit


def support_sweep(config: ExperimentConfig, mode: str = 'support') -> ScalingFit:
    """Support or difference-set sizes against N, checked as a lower bound"""
    if mode not in ('support', 'diffset'):
        raise ParameterError(f"mode must be 'support' or 'diffset', got {mode!r}")
    d = config.generator.dim
    top = config.checkpoints[-1]
    gamma = resolve_gamma(config)
    bound = support_bound(gamma, d, max(top, 2), config.epsilon)
    predicted = bound.exponent if mode == 'support' else bound.diffset_exponent
    counter = support_count if mode == 'support' else difference_set_count

    def job(seed: int) -> List[int]:
        seq = generate(config.generator.with_seed(seed), top)
        return [counter(seq, N) for N in config.checkpoints]

    per_seed = _fan_out(job, config.seeds, config.threads)
    rows = tuple((seed, N, size) for seed, sizes in zip(config.seeds, per_seed)
                 for N, size in zip(config.checkpoints, sizes))
    values = [aggregate([sizes[i] for sizes in per_seed], Statistic.MEDIAN)
              for i in range(len(config.checkpoints))]
    return _fit_values(config.checkpoints, values, predicted, config.tolerance, gamma,
                       Statistic.MEDIAN, 'lower', rows, ('seed', 'N', mode))


def export_sweep(result: ScalingFit, out: Optional[str] = None, fit_out: Optional[str] = None) -> str:
    """Write rows / fit files when paths are given; returns the fit JSON text"""
    if out:
        write_csv(out, result.columns, result.rows)
        logger.info(f"Wrote {len(result.rows)} rows to {out}")
    if fit_out:
        write_json(fit_out, result.as_record())
    return dumps17(result.as_record())


# ---------------------------------------------------------------------------
# Lenz configuration
# ---------------------------------------------------------------------------

def lenz_demo(points_per_circle: int = 5, scale: float = 0.25, eta: float = DEFAULT_ETA) -> dict:
    """Two orthogonal circles: every cross pair sits at the same distance"""
    n = 2 * points_per_circle
    config = GeneratorConfig(Family.LENZ, 4, 0, {'points_per_circle': points_per_circle, 'scale': scale})
    seq = generate(config, n)
    t = lenz_cross_distance(scale)
    count = exact_distance_count(seq, t, n, eta)
    euclidean = exact_distance_count(seq, t, n, eta, Metric.EUCLIDEAN)
    expected = n * n // 2 + (2 * n if points_per_circle % 4 == 0 else 0)
    return {
        'points_per_circle': points_per_circle,
        'n': n,
        'scale': scale,
        'distance': t,
        'eta': eta,
        'count': count,
        'euclidean_count': euclidean,
        'expected': expected,
        'fraction_of_pairs': count / float(n * n),
    }
