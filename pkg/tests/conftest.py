import os

import hypothesis
import numpy as np
import pytest

from edgeidle.core import DUMP_TRUCK
from tests.factories import det

np.seterr(all="warn")

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def make_det():
    return det


@pytest.fixture
def two_machines():
    """Per-frame detections for a parked excavator and a truck driving right at 3 px/frame."""
    def frames(n):
        return [
            (t, [det(t, 100.0, 100.0), det(t, 800.0 + 3.0 * t, 500.0, 300.0, 180.0, cls=DUMP_TRUCK)])
            for t in range(n)
        ]
    return frames
