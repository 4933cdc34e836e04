import math

import numpy as np
import pytest
from scipy import integrate, stats

from dmem import SourceSummary

ACCEPTANCE_LINES: list[str] = []


def quadrature_log_marginal(group):
    """log of  integral prod_i N(ybar_i; mu, sigma_i^2/n_i) dmu  by adaptive quadrature.

    The integrand is evaluated in the log domain, shifted by its value at a
    grid maximum, and integrated over a window of +-40 widths around it.
    """
    means = np.array([s.mean for s in group])
    sds = np.array([math.sqrt(s.variance / s.n) for s in group])

    log_norm = -0.5 * math.log(2 * math.pi) * len(means) - float(np.sum(np.log(sds)))

    def log_f(mu):
        z = (means - mu) / sds
        return log_norm - 0.5 * float(z @ z)

    grid = np.linspace(means.min() - 1, means.max() + 1, 4001)
    vals = stats.norm.logpdf(means[None, :], loc=grid[:, None], scale=sds[None, :]).sum(axis=1)
    center = grid[int(np.argmax(vals))]
    shift = log_f(center)
    width = 1.0 / math.sqrt(np.sum(1.0 / sds**2))
    lo, hi = center - 40 * width, center + 40 * width
    value, _ = integrate.quad(
        lambda mu: math.exp(log_f(mu) - shift), lo, hi, points=[center],
        epsabs=0.0, epsrel=1e-12, limit=400,
    )
    return math.log(value) + shift


@pytest.fixture
def unit_primary():
    return SourceSummary("p", 20, 0.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
