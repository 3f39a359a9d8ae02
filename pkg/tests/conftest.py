import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from akflow.charts import make_chart
from akflow.static import HoloFn, make_static_chart

settings.register_profile("akflow", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("akflow")

CHART_NAMES = ["flat", "hyperbolic_product", "kodaira_thurston", "darboux", "static"]


def chart_by_name(name):
    if name == "static":
        return make_static_chart(HoloFn((1.0, 0.5)))
    return make_chart({"chart": name, "params": {}})


@pytest.fixture(params=CHART_NAMES)
def any_chart(request):
    return chart_by_name(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sample_points(chart, n, seed=0):
    return chart.sample(np.random.default_rng(seed), n)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=lambda k: (int(k.rstrip("b")), k)):
            terminalreporter.write_line(RESULTS[key])
