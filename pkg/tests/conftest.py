import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("METAQA_SEED", raising=False)


from metaqa.encoder import EncoderConfig  # noqa: E402
from metaqa.simulator import (  # noqa: E402
    AgentProfile, BenchmarkSpec, Calibration, DomainSpec, generate_benchmark,
)
from metaqa.training import TrainConfig, train  # noqa: E402

TINY_ENCODER = EncoderConfig(hidden=16, layers=1, heads=2, ffn=32, max_len=48)


def tiny_spec(train_per_domain=60, test_per_domain=20):
    sizes = {"train": train_per_domain, "dev": test_per_domain, "test": test_per_domain}
    doms = tuple(DomainSpec(d, (wh,), i, sizes=sizes) for i, (d, wh) in
                 enumerate([("d1", "what"), ("d2", "who"), ("d3", "where")]))
    agents = (
        AgentProfile("a1", "d1", {"d1": 0.9, "d2": 0.3, "d3": 0.3}, 0.1),
        AgentProfile("a2", "d2", {"d1": 0.3, "d2": 0.9, "d3": 0.6}, 0.1),
        AgentProfile("a3", "d3", {"d1": 0.3, "d2": 0.3, "d3": 0.4}, 0.1,
                     Calibration(0.5, 1.5, 0.05)),
    )
    return BenchmarkSpec(doms, agents, {"d3": "rouge_l"}, 0)


def tiny_config(**kw):
    base = dict(lr=1e-3, warmup_steps=5, encoder=TINY_ENCODER, curve_every=5)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def tiny_bench():
    return generate_benchmark(tiny_spec(), seed=0)


@pytest.fixture(scope="session")
def tiny_ckpt(tiny_bench):
    return train(tiny_bench["train"], tiny_bench["dev"], tiny_config())


# -- acceptance reporting: one pass/fail line per criterion --------------------

_CRITERIA: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    ok = rep.passed and not hasattr(rep, "wasxfail")
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    _CRITERIA.setdefault(mark.args[0], []).append((item.name, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        runs = _CRITERIA[n]
        verdict = "PASS" if all(ok for _, ok, _ in runs) else "FAIL"
        notes = " | ".join(f"{name}{' (failed)' if not ok else ''}: {d}" if d else
                           f"{name}{' (failed)' if not ok else ''}" for name, ok, d in runs)
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {notes}")
