import pytest

from pymsrl.lib import config
from pymsrl.lib.utils import ConfigError


def test_parse_defaults():
    lines = ['# solver settings', '', 'admm kappa 10', 'admm tau 1.5',
             '  pls tol 1e-7  ']
    parsed = config.parse_defaults(lines)
    assert parsed == {'admm': {'kappa': 10, 'tau': 1.5},
                      'pls': {'tol': 1e-7}}
    assert isinstance(parsed['admm']['kappa'], int)
    assert isinstance(parsed['admm']['tau'], float)


@pytest.mark.parametrize('line', ['admm kappa', 'admm kappa 10 extra',
                                  'admm kappa ten'])
def test_parse_defaults_rejects_bad_lines(line):
    with pytest.raises(ConfigError, match='line 2'):
        config.parse_defaults(['admm tau 1.0', line])


def test_packaged_sections():
    admm = config.section('admm')
    assert admm['kappa'] == 10
    assert admm['rho0'] == 1.0
    assert config.section('corollary')['c2'] == 2.0
    assert config.section('tuning')['block_size'] == 250

    # Callers get a copy
    admm['kappa'] = 99
    assert config.section('admm')['kappa'] == 10


def test_missing_section():
    with pytest.raises(ConfigError):
        config.section('newton')
