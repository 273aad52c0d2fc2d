import numpy as np
import pytest

from platoonrl import environment as env
from platoonrl.channel import LinkGains


def make_gains(n_platoons=1, n_v2n=1, members=3, cc=1e-10, dc=0.0, dd_direct=1e-8, dd_cross=0.0, cd=0.0):
    dd = np.full((n_platoons, n_platoons, members), float(dd_cross))
    for n in range(n_platoons):
        dd[n, n] = dd_direct
    return LinkGains(
        cc=np.full(n_v2n, float(cc)),
        dc=np.full((n_platoons, n_v2n), float(dc)),
        dd=dd,
        cd=np.full((n_v2n, n_platoons, members), float(cd)),
    )


@pytest.fixture
def small_cfg():
    return env.EnvConfig(n_v2n=1, n_platoons=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
