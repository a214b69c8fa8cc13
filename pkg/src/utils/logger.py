import logging
import os

LOG_CONFIG = {
    'level': os.getenv("LOG_LEVEL", logging.INFO),
    'format': '%(asctime)s; %(levelname)s; %(name)s; %(funcName)s:%(lineno)d; %(message)s',
}

VALID_LEVELS = {'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'}


def filter_loggers(lib_level_dict: dict[str, str]):
    """
    Set the logging level for specific libraries.

    Args:
        lib_level_dict: Dictionary mapping library names to logging levels.
    """
    for lib_name, level in lib_level_dict.items():
        if level not in VALID_LEVELS:
            raise ValueError(f"Invalid logging level: {level} for library: {lib_name}")
        logging.getLogger(lib_name).setLevel(level)


def setup_logging(level: str | None = None):
    """
    Configure the root logger once for command line runs.
    Third-party image libraries are quieted down to warnings.
    """
    config = dict(LOG_CONFIG)
    if level:
        if level not in VALID_LEVELS:
            raise ValueError(f"Invalid logging level: {level}")
        config['level'] = level
    filter_loggers({'PIL': 'WARNING'})
    logging.basicConfig(**config)
