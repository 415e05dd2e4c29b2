import math

import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile/load every numba kernel once so timed tests measure runs."""
    import byzpop as bp
    from byzpop.harness import validate_drift

    params = bp.make_params("desk", 60, psi=10, sigma1=2, sigma2=6)
    for protocol in bp.PROTOCOLS:
        pop = bp.build_initial(60, 40, 20)
        bp.run(protocol, params, pop, seed=1, max_exchanges=2000, engine="fast")
    validate_drift(50, trials=1)
    return True


def desk_budget(n: int, mult: int = 24) -> int:
    return math.ceil(mult * n * math.log(n) ** 3)
