import os

import hypothesis
import numpy as np
import pytest

from volwealth.econ_core import Log, PowerNeg, PowerPos

np.seterr(all="warn")

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=8, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=300, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FAMILIES = [PowerNeg(0.5), PowerNeg(1.0), PowerNeg(2.0),
            PowerPos(0.25), PowerPos(0.5), PowerPos(0.75), Log()]


@pytest.fixture(params=FAMILIES, ids=repr)
def family(request):
    return request.param
