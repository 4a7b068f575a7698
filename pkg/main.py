#!/usr/bin/env python3
"""
equicount - command-line entry point
Generates point sequences, computes Weyl sums and gamma fits, counts annulus
and slab incidences, runs scaling sweeps and checks Fourier decay.

Environment (read from .env when present):
  EQUICOUNT_LOG_LEVEL   logging level (default INFO)
  EQUICOUNT_THREADS     worker threads for counting and sums (default 1)
  EQUICOUNT_OUTPUT_DIR  directory relative output paths are written to (default .)
  EQUICOUNT_MC_SAMPLES  Monte Carlo samples for slab main terms (default 10^7)

Exit codes: 0 success, 2 configuration or argument error, 3 computation error.
"""

import os
import sys
import json
import argparse
import logging
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from core import (
    ConfigurationError,
    EquicountError,
    Metric,
    ParameterError,
    RegionKind,
    RegionSpec,
    derive_seed,
    make_rng,
)
from fourier import decay_fit
from generators import GeneratorConfig, format_sequence, generate, parse_sequence
from harness import (
    csv_text,
    dumps17,
    export_sweep,
    lenz_demo,
    load_experiment_config,
    scaling_sweep,
    support_sweep,
    write_csv,
)
from incidence import (
    DEFAULT_MC_SAMPLES,
    REPORT_COLUMNS,
    count_annulus,
    count_slab,
    discrete_energy,
    report_row,
)
from weyl import (
    DEFAULT_EPSILON,
    adversarial_frequency,
    estimate_gamma,
    frequency_box,
    profile_rows,
    weyl_profile,
)

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3


class CLIArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so run_cli can map errors to exit codes"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigurationError('arguments', message)


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == '':
        return default
    try:
        return int(float(raw))
    except ValueError:
        raise ConfigurationError(name, f"expected an integer, got {raw!r}")


def _output_path(path: Optional[str]) -> Optional[str]:
    if not path or path == '-':
        return None
    p = Path(path)
    if not p.is_absolute():
        p = Path(os.getenv('EQUICOUNT_OUTPUT_DIR', '.')) / p
    return str(p)


def _parse_params(pairs: Optional[List[str]]) -> dict:
    params = {}
    for pair in pairs or []:
        key, sep, value = pair.partition('=')
        if not sep:
            raise ConfigurationError('param', f"expected KEY=VALUE, got {pair!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def _parse_ints(text: str, field_name: str) -> List[int]:
    try:
        return [int(float(v)) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ConfigurationError(field_name, f"expected comma-separated integers, got {text!r}")


def _emit(text: str, out: Optional[str]) -> None:
    path = _output_path(out)
    if path:
        Path(path).write_text(text)
        logger.info(f"Wrote {path}")
    else:
        sys.stdout.write(text)


def _emit_record(record, args) -> None:
    _emit(dumps17(record) + '\n', getattr(args, 'out', None))


def _sequence(args, n: int, seed_offset: Optional[int] = None, source: str = 'input'):
    path = getattr(args, source, None)
    if path:
        seq = parse_sequence(Path(path).read_text())
        if len(seq) < n:
            raise ConfigurationError(source, f"{path} holds {len(seq)} points, {n} needed")
        return seq
    if not args.family or not args.dim:
        raise ConfigurationError('family', "give --in or both --family and --dim")
    seed = args.seed if seed_offset is None else derive_seed(args.seed, seed_offset)
    return generate(GeneratorConfig(args.family, args.dim, seed, _parse_params(args.param)), n)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    seq = _sequence(args, args.n)
    _emit(format_sequence(seq), args.out)
    return EXIT_OK


def cmd_weyl(args) -> int:
    checkpoints = _parse_ints(args.checkpoints, 'checkpoints')
    seq = _sequence(args, max(checkpoints))
    profile = weyl_profile(seq, frequency_box(seq.dim, args.kmax), checkpoints, args.eps, args.threads)
    header, rows = profile_rows(profile)
    if args.format == 'json':
        _emit_record([dict(zip(header, row)) for row in rows], args)
    else:
        _emit(csv_text(header, rows), args.out)
    return EXIT_OK


def cmd_gamma(args) -> int:
    checkpoints = _parse_ints(args.checkpoints, 'checkpoints')
    seq = _sequence(args, max(checkpoints))
    profile = weyl_profile(seq, frequency_box(seq.dim, args.kmax), checkpoints, args.eps, args.threads)
    fit = estimate_gamma(profile)
    logger.info(f"gamma_hat={fit.gamma_hat:.4f} stderr={fit.stderr:.4f} r^2={fit.r_squared:.4f}")
    _emit_record(fit.as_record(), args)
    return EXIT_OK


def cmd_incidence(args) -> int:
    region = RegionSpec.parse(args.region)
    if region.kind is not RegionKind.ANNULUS:
        raise ConfigurationError('region', "incidence counts annuli; use the slab command for slabs")
    seq = _sequence(args, args.n)
    report = count_annulus(seq, region, args.n, args.method, args.threads)
    if args.format == 'csv':
        _emit(csv_text(REPORT_COLUMNS, [report_row(report)]), args.out)
    else:
        _emit_record(report.as_record(), args)
    return EXIT_OK


def cmd_slab(args) -> int:
    region = RegionSpec.parse(args.region)
    if region.kind is not RegionKind.SLAB:
        raise ConfigurationError('region', "slab counts need a slab:<a>:<b> region")
    seq_v = _sequence(args, args.n)
    seq_w = _sequence(args, args.n, seed_offset=1, source='input_w')
    samples = args.samples or _env_int('EQUICOUNT_MC_SAMPLES', DEFAULT_MC_SAMPLES)
    report = count_slab(seq_v, seq_w, region, args.n, samples, args.mc_seed, args.threads)
    if args.format == 'csv':
        _emit(csv_text(REPORT_COLUMNS, [report_row(report)]), args.out)
    else:
        _emit_record(report.as_record(), args)
    return EXIT_OK


def _experiment(args):
    return load_experiment_config(
        args.config,
        defaults={'mc_samples': _env_int('EQUICOUNT_MC_SAMPLES', DEFAULT_MC_SAMPLES)},
        family=args.family,
        dim=args.dim,
        params=_parse_params(args.param) or None,
        region=getattr(args, 'region', None),
        checkpoints=_parse_ints(args.checkpoints, 'checkpoints') if args.checkpoints else None,
        seeds=args.seeds,
        seed=args.seed if args.seed else None,
        gamma=args.gamma,
        epsilon=args.eps,
        tolerance=args.tolerance,
        statistic=getattr(args, 'statistic', None),
        mc_samples=getattr(args, 'samples', None),
        threads=args.threads,
        out=args.out,
        fit_out=args.fit_out,
    )


def cmd_scaling(args) -> int:
    config = _experiment(args)
    result = scaling_sweep(config, args.method)
    text = export_sweep(result, _output_path(config.out), _output_path(config.fit_out))
    sys.stdout.write(text + '\n')
    return EXIT_OK


def cmd_support(args) -> int:
    config = _experiment(args)
    result = support_sweep(config, args.command)
    text = export_sweep(result, _output_path(config.out), _output_path(config.fit_out))
    sys.stdout.write(text + '\n')
    return EXIT_OK


def cmd_energy(args) -> int:
    seq = _sequence(args, args.n)
    value = discrete_energy(seq, args.s, args.n, Metric(args.metric), args.threads)
    _emit_record({'N': args.n, 's': args.s, 'metric': args.metric, 'energy': value}, args)
    return EXIT_OK


def cmd_fourier_check(args) -> int:
    fit = decay_fit(args.kind, args.dim, a=args.a, b=args.b, r=args.r,
                    kmin=args.kmin, kmax=args.kmax)
    if args.samples_out:
        header, rows = fit.rows()
        write_csv(_output_path(args.samples_out), header, rows)
    _emit_record(fit.as_record(), args)
    return EXIT_OK


def cmd_adversarial(args) -> int:
    if args.input:
        seq = parse_sequence(Path(args.input).read_text())
        if seq.dim != 1:
            raise ConfigurationError('input', f"adversarial search is one-dimensional, got d={seq.dim}")
        points = seq.coords[:, 0]
    else:
        points = make_rng(args.seed).random(args.n)
    result = adversarial_frequency(points, args.eps, args.qmax, args.budget)
    _emit_record(result.as_record(), args)
    return EXIT_OK


def cmd_lenz_demo(args) -> int:
    _emit_record(lenz_demo(args.per_circle, args.scale, args.eta), args)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_source(p, with_n: bool = True) -> None:
    p.add_argument('--in', dest='input', help='sequence file written by gen')
    p.add_argument('--family', help='iid, kronecker, halton, lattice, lenz or clustered')
    p.add_argument('--dim', type=int)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--param', action='append', metavar='KEY=VALUE',
                   help='family parameter; VALUE is parsed as JSON when possible')
    if with_n:
        p.add_argument('--n', type=int, required=True)


def _add_sweep(p, with_region: bool) -> None:
    p.add_argument('--config', help='JSON experiment file; flags override it')
    p.add_argument('--family')
    p.add_argument('--dim', type=int)
    p.add_argument('--param', action='append', metavar='KEY=VALUE')
    p.add_argument('--seed', type=int, default=0, help='first seed when --seeds is a count')
    p.add_argument('--seeds', help='seed count, or comma-separated seeds')
    p.add_argument('--checkpoints', help='comma-separated N values')
    p.add_argument('--gamma', type=float, help='assumed gamma; estimated when omitted')
    p.add_argument('--eps', type=float)
    p.add_argument('--tolerance', type=float)
    p.add_argument('--out', help='CSV file for per-(seed, N) rows')
    p.add_argument('--fit-out', dest='fit_out', help='JSON file for the fit')
    if with_region:
        p.add_argument('--region', help='annulus:<a>:<b> or slab:<a>:<b>')
        p.add_argument('--statistic', choices=['median', 'rms'])
        p.add_argument('--samples', type=int, help='Monte Carlo samples for slab main terms')
        p.add_argument('--method', choices=['grid', 'brute'], default='grid')


def build_parser(default_threads: int = 1) -> argparse.ArgumentParser:
    parser = CLIArgumentParser(prog='equicount', description=__doc__.strip().split('\n')[0])
    parser.add_argument('--threads', type=int, default=default_threads)
    parser.add_argument('--log-level', dest='log_level', default=None)
    sub = parser.add_subparsers(dest='command', parser_class=CLIArgumentParser)
    sub.required = True

    p = sub.add_parser('gen', help='generate a point sequence')
    _add_source(p)
    p.add_argument('--out')
    p.set_defaults(handler=cmd_gen)

    for name, handler in (('weyl', cmd_weyl), ('gamma', cmd_gamma)):
        p = sub.add_parser(name, help='Weyl sum profile' if name == 'weyl' else 'fit the gamma exponent')
        _add_source(p, with_n=False)
        p.add_argument('--kmax', type=int)
        p.add_argument('--eps', type=float, default=DEFAULT_EPSILON)
        p.add_argument('--checkpoints', required=True)
        p.add_argument('--format', choices=['csv', 'json'], default='csv' if name == 'weyl' else 'json')
        p.add_argument('--out')
        p.set_defaults(handler=handler)

    p = sub.add_parser('incidence', help='annulus incidence count')
    _add_source(p)
    p.add_argument('--region', required=True)
    p.add_argument('--method', choices=['grid', 'brute'], default='grid')
    p.add_argument('--format', choices=['csv', 'json'], default='json')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_incidence)

    p = sub.add_parser('slab', help='weighted slab incidence count')
    _add_source(p)
    p.add_argument('--in-w', dest='input_w', help='second sequence file')
    p.add_argument('--region', required=True)
    p.add_argument('--samples', type=int)
    p.add_argument('--mc-seed', dest='mc_seed', type=int, default=0)
    p.add_argument('--format', choices=['csv', 'json'], default='json')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_slab)

    p = sub.add_parser('scaling', help='remainder scaling sweep')
    _add_sweep(p, with_region=True)
    p.set_defaults(handler=cmd_scaling)

    for name in ('support', 'diffset'):
        p = sub.add_parser(name, help=f"{name} size sweep")
        _add_sweep(p, with_region=False)
        p.set_defaults(handler=cmd_support)

    p = sub.add_parser('energy', help='discrete s-energy')
    _add_source(p)
    p.add_argument('--s', type=float, required=True)
    p.add_argument('--metric', choices=['torus', 'euclidean'], default='torus')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_energy)

    p = sub.add_parser('fourier-check', help='decay fit of a radial transform')
    p.add_argument('--kind', choices=['annulus', 'sphere', 'ball'], required=True)
    p.add_argument('--dim', type=int, required=True)
    p.add_argument('--a', type=float)
    p.add_argument('--b', type=float)
    p.add_argument('--r', type=float)
    p.add_argument('--kmin', type=float, default=4.0)
    p.add_argument('--kmax', type=float, default=128.0)
    p.add_argument('--samples-out', dest='samples_out', help='CSV of |k|, value, abs_value')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_fourier_check)

    p = sub.add_parser('adversarial', help='Dirichlet frequency search in d=1')
    p.add_argument('--in', dest='input')
    p.add_argument('--n', type=int, default=4)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--eps', type=float, required=True)
    p.add_argument('--qmax', type=int, required=True)
    p.add_argument('--budget', type=int, default=50_000_000)
    p.add_argument('--out')
    p.set_defaults(handler=cmd_adversarial)

    p = sub.add_parser('lenz-demo', help='exact-distance count on the Lenz configuration')
    p.add_argument('--per-circle', dest='per_circle', type=int, default=5)
    p.add_argument('--scale', type=float, default=0.25)
    p.add_argument('--eta', type=float, default=1e-9)
    p.add_argument('--out')
    p.set_defaults(handler=cmd_lenz_demo)

    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run the command and return its exit code"""
    try:
        parser = build_parser(_env_int('EQUICOUNT_THREADS', 1))
        args = parser.parse_args(argv)
        if args.log_level:
            logging.getLogger().setLevel(args.log_level.upper())
        if args.threads < 1:
            raise ConfigurationError('threads', f"must be positive, got {args.threads}")
        return args.handler(args)
    except (ConfigurationError, ParameterError) as e:
        logger.error(f"Invalid configuration: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        return EXIT_CONFIG
    except SystemExit as e:
        # --help exits 0 through argparse
        return int(e.code or 0)
    except (EquicountError, ArithmeticError, OSError, ValueError) as e:
        logger.error(f"Computation failed: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        return EXIT_COMPUTE


def main():
    logging.basicConfig(
        level=os.getenv('EQUICOUNT_LOG_LEVEL', 'INFO').upper(),
        format=LOG_FORMAT,
        stream=sys.stderr,
    )
    try:
        sys.exit(run_cli())
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(130)
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        sys.exit(1)


if __name__ == '__main__':
    main()
