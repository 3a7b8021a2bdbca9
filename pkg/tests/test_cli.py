"""
Tests for the run configuration and the cusp_cli entry point.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml
from pydantic import ValidationError

import scripts.cusp_cli as cusp_cli
from models.medium import ConvergenceError
from scripts.config import RunConfig, load_config
from scripts.cusp_cli import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_DOMAIN, EXIT_OK, EXIT_VERIFY, main


def test_config_defaults_and_overrides():
    """Flags override file entries section by section."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / 'run.yaml'
        path.write_text(yaml.safe_dump({'medium': {'a0': 4.0, 'b0': 2.0}, 'seed': 7}))
        cfg = load_config(path, {'medium': {'b0': 3.0}})
    assert cfg.medium.a0 == 4.0
    assert cfg.medium.b0 == 3.0
    assert cfg.medium.R0 == 3.0
    assert cfg.seed == 7


def test_config_rejects_unknown_keys():
    """Misspelled keys are validation errors, not silently ignored."""
    with pytest.raises(ValidationError):
        RunConfig.model_validate({'medium': {'a0': 2.0, 'c0': 1.0}})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({'truncation': {'n_quad': 300}})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({'boundary': {'type': 'samples', 'data': [0.0] * 100}})


def test_config_hash_is_deterministic():
    """Equal configs hash equally, from YAML or JSON; any change alters the hash."""
    raw = {'medium': {'a0': 5.0, 'b0': 5.0}, 'boundary': {'cos': {1: 1.0}}}
    with tempfile.TemporaryDirectory() as tmpdir:
        y = Path(tmpdir) / 'run.yaml'
        j = Path(tmpdir) / 'run.json'
        y.write_text(yaml.safe_dump(raw))
        j.write_text(json.dumps(raw))
        h_yaml = load_config(y).config_hash()
        h_json = load_config(j).config_hash()
    assert h_yaml == h_json
    assert len(h_yaml) == 16
    assert RunConfig().config_hash() == RunConfig().config_hash()
    assert RunConfig(seed=1).config_hash() != RunConfig().config_hash()


def test_missing_config_file_exit_code():
    """A missing config file exits with code 2."""
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['map', '--config', str(Path(tmpdir) / 'nope.yaml'), '--output', tmpdir]) == EXIT_CONFIG


def test_invalid_medium_exit_code():
    """Non-positive coefficients exit with code 2."""
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['basis', '--a0', '-1', '--output', tmpdir]) == EXIT_CONFIG


def test_bad_geometry_flag_exit_code():
    """--geometry only knows r1 and r2."""
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['map', '--geometry', 'q=1', '--output', tmpdir]) == EXIT_CONFIG


def test_bad_thread_count_exit_code(monkeypatch):
    """CUSP_THREADS must be a positive integer."""
    monkeypatch.setenv('CUSP_THREADS', 'zero')
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['solve', '--output', tmpdir]) == EXIT_CONFIG


def test_domain_error_exit_code():
    """A negative basis index exits with code 4."""
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['basis', '--j', '-1', '--output', tmpdir]) == EXIT_DOMAIN


def test_convergence_error_exit_code(monkeypatch):
    """Convergence failures exit with code 3."""
    def refuse(*args, **kwargs):
        raise ConvergenceError("no N meets the tolerance", achieved=1e-3, requested=1e-10)

    monkeypatch.setattr(cusp_cli, 'select_truncation', refuse)
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['matrix', '--alpha', '0.5', '--output', tmpdir]) == EXIT_CONVERGENCE


def test_failed_verification_exit_code():
    """An unknown check fails the battery and exits with code 1."""
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['verify', '--checks', 'bogus', '--output', tmpdir]) == EXIT_VERIFY
        report = json.loads((Path(tmpdir) / 'cusp_verify.json').read_text())
    assert report['passed'] is False


def test_verify_zero_contrast_battery():
    """Every check passes for a = 1."""
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['verify', '--a0', '1', '--b0', '1', '--output', tmpdir]) == EXIT_OK
        report = json.loads((Path(tmpdir) / 'cusp_verify.json').read_text())
    assert report['passed'] is True
    names = {c['name'] for c in report['checks']}
    assert names == {'transmission', 'dominance', 'roundtrip', 'expansion', 'correspondence', 'charge'}


def test_map_command(capsys):
    """r1 = 1, r2 = 2 prints the map and equal image radii."""
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['map', '--geometry', 'r1=1,r2=2', '--output', tmpdir]) == EXIT_OK
        report = json.loads((Path(tmpdir) / 'cusp_map.json').read_text())
    assert report['aspect_root'] == pytest.approx(4.0 + np.sqrt(15.0), abs=1e-12)
    assert report['image1_radius'] == pytest.approx(1.0, abs=1e-10)
    assert report['image2_radius'] == pytest.approx(1.0, abs=1e-10)
    assert 'Equal-radius map' in capsys.readouterr().out


def test_matrix_command():
    """Matrix CSV and dominance JSON for alpha = 0.8, R0 = 3, N = 20."""
    with tempfile.TemporaryDirectory() as tmpdir:
        assert main(['matrix', '--alpha', '0.8', '--N', '20', '--output', tmpdir]) == EXIT_OK
        report = json.loads((Path(tmpdir) / 'cusp_matrix_even_dominance.json').read_text())
        df = pd.read_csv(Path(tmpdir) / 'cusp_matrix_even.csv', comment='#')
    assert report['all_dominant'] is True
    assert report['source'] == 'closed-form'
    assert len(report['columns']) == 20
    assert len(df) == 21 * 21


def test_basis_command_on_circle():
    """--circle samples |x| = R0 and writes the trace alongside."""
    with tempfile.TemporaryDirectory() as tmpdir:
        args = ['basis', '--alpha', '0.5', '--j', '2', '--circle', '--n-circle', '128', '--output', tmpdir]
        assert main(args) == EXIT_OK
        field = pd.read_csv(Path(tmpdir) / 'cusp_basis_sym_even_2.csv', comment='#')
        trace = pd.read_csv(Path(tmpdir) / 'cusp_basis_sym_even_2_trace.csv', comment='#')
    assert len(field) == 128
    assert np.allclose(np.hypot(field['x1'], field['x2']), 3.0)
    assert list(trace.columns) == ['l', 'coefficient']
    assert len(trace) == 64


def test_green_command():
    """Kernel table for one fixed source."""
    with tempfile.TemporaryDirectory() as tmpdir:
        args = ['green', '--alpha', '0.5', '--source', '1.5', '0.4', '--grid', '8', '--output', tmpdir]
        assert main(args) == EXIT_OK
        df = pd.read_csv(Path(tmpdir) / 'cusp_green_disk.csv', comment='#')
    assert set(df['region_y']) == {'matrix'}
    assert np.all(np.isfinite(df['G']))


def test_solve_command():
    """A zero-contrast solve of cos theta reports tiny boundary and transmission residuals."""
    with tempfile.TemporaryDirectory() as tmpdir:
        cfg = Path(tmpdir) / 'run.yaml'
        cfg.write_text(yaml.safe_dump({'medium': {'a0': 1.0, 'b0': 1.0}, 'boundary': {'cos': {1: 1.0}}}))
        assert main(['solve', '--config', str(cfg), '--grid', '8', '--output', tmpdir]) == EXIT_OK
        report = json.loads((Path(tmpdir) / 'cusp_solve_report.json').read_text())
        field = pd.read_csv(Path(tmpdir) / 'cusp_solution.csv', comment='#')
    assert report['route'] == 'direct'
    assert report['boundary_residual'] < 1e-9
    assert report['transmission']['value_jump'] < 1e-10
    assert np.allclose(field['u'], field['x1'] / 3.0, rtol=0, atol=1e-9)


if __name__ == '__main__':
    pytest.main([__file__])
