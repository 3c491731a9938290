import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nonlocal_eigs import assemble, build_coefficient, build_domain, make_kernel

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_op(shape="interval", res=60, rule="dirichlet", family="truncated-gaussian", delta=0.5,
            **params):
    dom = build_domain({"shape": shape, **params}, res)
    kern = make_kernel(family, delta, dom.intrinsic_dim)
    return assemble(dom, kern, build_coefficient(rule, dom, kern))


@pytest.fixture
def interval_op():
    return make_op()
