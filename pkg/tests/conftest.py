import os
from pathlib import Path

import numpy as np
import pytest
import torch

torch.set_num_threads(1)

#: canonical 256x256 test images (butterfly.png, barbara.png) live here when
#: available; tests asserting published absolute metrics skip otherwise
DATA_DIR = Path(os.environ.get("DIPWTV_DATA", Path(__file__).resolve().parent.parent / "data"))


def data_image(name: str) -> Path:
    path = DATA_DIR / name
    if not path.exists():
        pytest.skip(f"canonical test image {name} not present under {DATA_DIR}")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_gen_cfg():
    from dipwtv.generator import GeneratorConfig

    return GeneratorConfig(
        levels=1,
        down_channels=(4,),
        up_channels=(4,),
        skip_channels=(2,),
        input_channels=4,
        output_channels=1,
        seed=0,
    )
