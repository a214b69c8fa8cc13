import os

import pytest

TINY_MODEL = dict(
    resolution=32,
    base_channels=4,
    disc_channels=4,
    stn_channels=(4, 8),
    stn_hidden=16,
    perceptual_widths=(4, 8, 8, 8, 8),
    batch_size=2,
    k=3,
    steps=3,
    log_every=1,
    checkpoint_every=0,
)

slow = pytest.mark.skipif(os.getenv('MORPH_RUN_SLOW') != '1', reason="set MORPH_RUN_SLOW=1 to run")


def write_config(path, values: dict) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, (tuple, list)):
            value = ', '.join(str(v) for v in value)
        lines.append(f'{key} = {value}')
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return str(path)
