import pytest

from cloudrca import AgentConfig, PolicyBackend, Sandbox, generate_scenarios
from cloudrca.backends import GenerationParams


@pytest.fixture(scope="session")
def scenario_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenarios") / "bundle"
    generate_scenarios(seed=1234, count=8, out_dir=str(out))
    return str(out)


@pytest.fixture(scope="session")
def sandbox(scenario_dir):
    return Sandbox(scenario_dir)


@pytest.fixture
def policy_backend():
    return PolicyBackend()


def make_config(job_id: str, **overrides) -> AgentConfig:
    defaults = dict(
        task_statement=f"Diagnose the anomalous job {job_id}.",
        params=GenerationParams(mode="greedy"),
    )
    defaults.update(overrides)
    return AgentConfig(**defaults)
