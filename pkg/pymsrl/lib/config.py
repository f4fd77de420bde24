"""Loads the packaged solver and tuning defaults from res/defaults.txt"""
from importlib import resources

from pymsrl.lib.utils import ConfigError

DEFAULTS_FILE = 'defaults.txt'

_cache = {}


def _parse_value(text):
    """Turns a defaults entry into an int when it looks like one, and a
    float otherwise"""
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_defaults(lines):
    """Parses default settings from an iterable of text lines

    Every non-blank line holds three whitespace separated entries:
    a section name, a key and a numeric value.

    Args:
        lines: the lines to parse
    Returns:
        a dictionary mapping section name to a dictionary of settings
    Raises:
        ConfigError: if a line has the wrong number of entries or a
            non-numeric value
    """
    sections = {}
    for number, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue

        entries = line.split()
        try:
            section, key, value = entries
            value = _parse_value(value)
        except ValueError:
            # There weren't exactly three entries, or the value is not
            # a number
            raise ConfigError('%s corrupt at line %d: expected '
                              '"section key number", got %r'
                              % (DEFAULTS_FILE, number, line))

        sections.setdefault(section, {})[key] = value
    return sections


def load_defaults():
    """Reads the packaged defaults file once and caches the result

    Returns:
        a dictionary mapping section name to a dictionary of settings
    """
    if 'defaults' not in _cache:
        res = resources.files('pymsrl.lib') / 'res' / DEFAULTS_FILE
        try:
            text = res.read_text()
        except OSError:
            raise ConfigError('defaults file (res/%s) not found'
                              % DEFAULTS_FILE)
        _cache['defaults'] = parse_defaults(text.splitlines())
    return _cache['defaults']


def section(name):
    """Gets a copy of one section of the packaged defaults

    Args:
        name: the section name, e.g. 'admm'
    Returns:
        a dictionary of settings
    Raises:
        ConfigError: if the section is missing
    """
    defaults = load_defaults()
    if name not in defaults:
        raise ConfigError('no section %r in %s' % (name, DEFAULTS_FILE))
    return dict(defaults[name])
