import numpy as np
import pytest

from lanebev.synth import jittered_rig


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_rig_pair(seed: int, rot_deg: float = 3.0, trans_m: float = 0.3):
    """Two plausible forward-looking rigs with seeded pose jitter."""
    rng = np.random.default_rng(seed)
    return jittered_rig(rng, rot_deg, trans_m), jittered_rig(rng, rot_deg, trans_m)
