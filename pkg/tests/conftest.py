import pytest

from baroflow.scenario import Scenario, run_scenario


@pytest.fixture(scope="session")
def preset_runs():
    """Run presets once per session; keyed on name + overrides."""
    cache = {}

    def get(name, **overrides):
        key = (name, tuple(sorted(overrides.items())))
        if key not in cache:
            sc = Scenario.preset(name)
            for dotted, value in overrides.items():
                sc.override(dotted, value)
            cache[key] = run_scenario(sc)
        return cache[key]

    return get
