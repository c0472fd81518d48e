"""
This module provides interaction with the config files
of the user and of a single run
"""

from configparser import ConfigParser
import logging
from pathlib import Path

from .compression import CompressionSpec
from .errors import LayoutError
from .types import DEFAULT_INTERNAL_BLOCK_SIZE


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_config_debug_logging():
    """ enable config debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)

DEFAULT_ORACLE_MAX_VOXELS = 16777216

def _get_user_config_path():
    return Path('~/.blockwriter.ini').expanduser()

def get_config(config_path=None, user_config_path=None):
    """
    reads and parses both the users config file and an explicit config file if present
    and returns the combined config; the explicit file overrides the users file
    """
    logger = logging.getLogger(__name__)
    logger.debug('get_config: config_path: %r', config_path)

    weak_config = Path(user_config_path) if user_config_path else _get_user_config_path()
    strong_config = Path(config_path).expanduser() if config_path else None
    logger.debug('get_config: strong_config: %r', strong_config)
    logger.debug('get_config: weak_config: %r', weak_config)

    if strong_config is not None and not strong_config.is_file():
        raise FileNotFoundError(f'config file {strong_config} does not exist')

    config_parser = ConfigParser()
    config_parser.read([path for path in (weak_config, strong_config) if path is not None],
                       encoding='utf8')

    for section_name in config_parser:
        for option_name in config_parser[section_name]:
            logger.debug('get_config: config[%r][%r]: %r', section_name, option_name,
                         config_parser[section_name][option_name])

    return config_parser

def get_thread_count(config_parser):
    """
    :return: int or None for the logical processor count
    """
    try:
        threads = config_parser.getint('writer', 'threads', fallback=0)
    except ValueError:
        raise LayoutError('[writer] threads must be an integer')
    if threads < 0:
        raise LayoutError(f'[writer] threads must be >= 0, got {threads}')
    return threads or None

def get_compression(config_parser):
    """
    :return: CompressionSpec from [writer] compression and shuffle
    """
    try:
        shuffle = config_parser.getboolean('writer', 'shuffle', fallback=False)
    except ValueError:
        raise LayoutError('[writer] shuffle must be a boolean')
    return CompressionSpec.parse(config_parser.get('writer', 'compression', fallback='gzip:2'),
                                 shuffle=shuffle)

def get_internal_block(config_parser):
    """
    :return: (int, int, int)
    """
    text = config_parser.get('writer', 'internal_block', fallback=None)
    if text is None:
        return DEFAULT_INTERNAL_BLOCK_SIZE
    try:
        values = tuple(int(part) for part in text.split(','))
    except ValueError:
        values = ()
    if len(values) != 3 or min(values) < 1:
        raise LayoutError(f'[writer] internal_block must be three positive integers, '
                          f'got {text!r}')
    return values

def get_backend(config_parser):
    return config_parser.get('writer', 'backend', fallback='reference')

def get_oracle_max_voxels(config_parser):
    try:
        return config_parser.getint('verify', 'oracle_max_voxels',
                                    fallback=DEFAULT_ORACLE_MAX_VOXELS)
    except ValueError:
        raise LayoutError('[verify] oracle_max_voxels must be an integer')
