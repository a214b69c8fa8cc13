"""
Flat `key = value` run configuration.

    # comment
    output_dir = runs/toy
    dataset = toy
    stn_channels = 16, 32
    loss.lambda_t = 10
    loss.stn = false

Keys under `loss.` fill the loss weights and toggles; comma-separated values become lists.
"""
import logging

from pydantic import ValidationError

from utils.dto import TrainConfig
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ('output_dir', 'dataset')


def parse_config_text(text: str, source: str = '<config>') -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(line, f"{source}:{lineno}: expected 'key = value', got '{line}'")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError('', f"{source}:{lineno}: empty key")
        parsed = [item.strip() for item in value.split(',')] if ',' in value else value
        if key.startswith('loss.'):
            values.setdefault('loss', {})[key.removeprefix('loss.')] = parsed
        else:
            values[key] = parsed
    return values


def config_from_dict(values: dict, source: str = '<config>') -> TrainConfig:
    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(key, f"{source}: missing required key '{key}'")
    try:
        return TrainConfig.model_validate(values)
    except ValidationError as exc:
        error = exc.errors()[0]
        key = '.'.join(str(part) for part in error['loc'])
        if error['type'] == 'extra_forbidden':
            raise ConfigError(key, f"{source}: unknown key '{key}'") from exc
        raise ConfigError(key, f"{source}: invalid value for '{key}': {error['msg']}") from exc


def load_config(path: str) -> TrainConfig:
    with open(path, encoding='utf-8') as f:
        text = f.read()
    config = config_from_dict(parse_config_text(text, source=path), source=path)
    logger.debug(f'loaded config {path}: {config.model_dump_json()}')
    return config
