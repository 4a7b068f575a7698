import json
import math

import pytest

from generators import parse_sequence
from main import EXIT_COMPUTE, EXIT_CONFIG, EXIT_OK, run_cli


def test_gen_writes_sequence_to_stdout(capsys):
    assert run_cli(['gen', '--family', 'halton', '--dim', '2', '--n', '3']) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0] == '# dim=2 family=halton seed=0 n=3'
    seq = parse_sequence(out)
    assert seq.coords[:, 0].tolist() == [0.5, 0.25, 0.75]


def test_gen_accepts_family_params(capsys):
    argv = ['gen', '--family', 'lattice', '--dim', '1', '--n', '4', '--param', 'side=2']
    assert run_cli(argv) == EXIT_OK
    seq = parse_sequence(capsys.readouterr().out)
    assert seq.coords[:, 0].tolist() == [0.0, 0.5, 0.0, 0.5]


@pytest.mark.parametrize('argv', [
    ['gen', '--family', 'sobol', '--dim', '2', '--n', '3'],
    ['gen', '--family', 'iid', '--dim', '2'],
    ['gen', '--n', '3'],
    ['--threads', '0', 'gen', '--family', 'iid', '--dim', '2', '--n', '3'],
    ['incidence', '--family', 'iid', '--dim', '2', '--n', '10', '--region', 'annulus:0.2:0.6'],
    ['slab', '--family', 'iid', '--dim', '2', '--n', '10', '--region', 'slab:0.005:0.5',
     '--samples', '10000'],
    ['frobnicate'],
])
def test_configuration_errors_exit_2(argv):
    assert run_cli(argv) == EXIT_CONFIG


@pytest.mark.parametrize('argv', [
    ['gen', '--family', 'iid', '--dim', '2'],
    ['frobnicate'],
])
def test_argument_errors_print_usage(argv, capsys):
    assert run_cli(argv) == EXIT_CONFIG
    assert 'usage' in capsys.readouterr().err


def test_gamma_with_two_checkpoints_exits_3():
    argv = ['gamma', '--family', 'iid', '--dim', '2', '--checkpoints', '100,200']
    assert run_cli(argv) == EXIT_COMPUTE


def test_help_exits_0(capsys):
    assert run_cli(['--help']) == EXIT_OK
    assert 'equicount' in capsys.readouterr().out


def test_gamma_record(capsys):
    argv = ['gamma', '--family', 'iid', '--dim', '2', '--kmax', '4', '--checkpoints', '128,256,512,1024']
    assert run_cli(argv) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record['kmax'] == 4
    assert record['checkpoints'] == [128, 256, 512, 1024]
    assert 0.2 < record['gamma_hat'] < 0.8


def test_weyl_csv(capsys):
    argv = ['weyl', '--family', 'kronecker', '--dim', '1', '--kmax', '2', '--checkpoints', '10,20']
    assert run_cli(argv) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'k_1,N,re,im,magnitude_over_N'
    assert len(lines) == 1 + 4 * 2


def test_lenz_demo_command(capsys):
    assert run_cli(['lenz-demo', '--per-circle', '6']) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record['count'] == 72
    assert record['expected'] == 72


def test_scaling_output_independent_of_threads(capsys):
    argv = ['scaling', '--family', 'iid', '--dim', '2', '--seeds', '3', '--checkpoints', '64,128,256',
            '--region', 'annulus:0.1:0.2', '--gamma', '0.5']
    assert run_cli(['--threads', '1'] + argv) == EXIT_OK
    one = capsys.readouterr().out
    assert run_cli(['--threads', '4'] + argv) == EXIT_OK
    four = capsys.readouterr().out
    assert one == four
    assert json.loads(one)['bound'] == 'upper'


def test_scaling_from_config_file(tmp_path, capsys):
    config = tmp_path / 'exp.json'
    config.write_text(json.dumps({
        'generator': {'family': 'halton', 'dim': 2},
        'checkpoints': [100, 200, 400],
        'region': 'annulus:0.1:0.2',
        'gamma': 0.5,
    }))
    rows, fit = tmp_path / 'rows.csv', tmp_path / 'fit.json'
    argv = ['scaling', '--config', str(config), '--out', str(rows), '--fit-out', str(fit)]
    assert run_cli(argv) == EXIT_OK
    assert json.loads(fit.read_text()) == json.loads(capsys.readouterr().out)
    assert len(rows.read_text().splitlines()) == 4


def test_sequence_file_round_trip(tmp_path, capsys):
    path = tmp_path / 'seq.txt'
    assert run_cli(['gen', '--family', 'iid', '--dim', '2', '--seed', '7', '--n', '300',
                    '--out', str(path)]) == EXIT_OK
    assert run_cli(['incidence', '--in', str(path), '--n', '300', '--region', 'annulus:0.1:0.2']) == EXIT_OK
    from_file = json.loads(capsys.readouterr().out)
    assert run_cli(['incidence', '--family', 'iid', '--dim', '2', '--seed', '7', '--n', '300',
                    '--region', 'annulus:0.1:0.2', '--method', 'brute']) == EXIT_OK
    generated = json.loads(capsys.readouterr().out)
    assert from_file['count'] == generated['count']


def test_short_sequence_file_is_rejected(tmp_path):
    path = tmp_path / 'seq.txt'
    run_cli(['gen', '--family', 'iid', '--dim', '2', '--n', '5', '--out', str(path)])
    assert run_cli(['energy', '--in', str(path), '--n', '10', '--s', '1']) == EXIT_CONFIG


def test_non_numeric_sequence_file_exits_2(tmp_path):
    path = tmp_path / 'seq.txt'
    path.write_text('# dim=2 family=iid seed=0 n=2\n0.1 0.2\n0.3 x\n')
    assert run_cli(['energy', '--in', str(path), '--n', '2', '--s', '1']) == EXIT_CONFIG


def test_relative_output_uses_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv('EQUICOUNT_OUTPUT_DIR', str(tmp_path))
    assert run_cli(['lenz-demo', '--out', 'lenz.json']) == EXIT_OK
    assert json.loads((tmp_path / 'lenz.json').read_text())['count'] == 50


def test_energy_command(capsys):
    assert run_cli(['energy', '--family', 'kronecker', '--dim', '2', '--n', '200', '--s', '1']) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record['energy'] > 0
    assert record['metric'] == 'torus'


def test_fourier_check_command(tmp_path, capsys):
    samples = tmp_path / 'samples.csv'
    argv = ['fourier-check', '--kind', 'sphere', '--dim', '3', '--r', '0.25',
            '--samples-out', str(samples)]
    assert run_cli(argv) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record['predicted_slope'] == -1.0
    assert samples.read_text().startswith('k,value,abs_value\n')


def test_adversarial_command(capsys):
    argv = ['adversarial', '--n', '3', '--seed', '2', '--eps', '0.1', '--qmax', '2000']
    assert run_cli(argv) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record['guaranteed'] is True
    assert record['real_part'] >= 1 - 2 * math.pi * 0.1


def test_slab_command(capsys):
    argv = ['slab', '--family', 'iid', '--dim', '2', '--n', '50', '--region', 'slab:0.5:0.7',
            '--samples', '20000']
    assert run_cli(argv) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record['region'] == {'kind': 'slab', 'a': 0.5, 'b': 0.7}
    assert record['main_term_stderr'] > 0


def test_support_command(capsys):
    argv = ['support', '--family', 'iid', '--dim', '2', '--seeds', '2', '--checkpoints', '32,64,128',
            '--gamma', '0.5']
    assert run_cli(argv) == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record['bound'] == 'lower'
    assert record['verdict'] == 'WithinBound'
