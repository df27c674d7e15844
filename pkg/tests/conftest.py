import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def spiked_sample(rng, p, n, lam, noise=1.0):
    """Gaussian p x n sample with covariance diag(lam..., noise, ..., noise).

    Returns the sample and the true covariance diagonal; the true
    eigenvectors are the leading coordinate axes.
    """
    d = np.full(p, float(noise))
    d[: len(lam)] = lam
    return np.sqrt(d)[:, None] * rng.standard_normal((p, n)), d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
