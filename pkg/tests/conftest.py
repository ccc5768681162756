"""Shared fixtures: cached scenario simulation so the suite stays fast."""

import dataclasses
import functools

import pytest

from attfree.simulator import ScenarioConfig, simulate_scenario


@functools.lru_cache(maxsize=None)
def _simulate(kind: str, duration: float, seed: int, noiseless: bool):
    cfg = ScenarioConfig(kind=kind, duration=duration, seed=seed)
    if noiseless:
        cfg = dataclasses.replace(cfg, sensors=cfg.sensors.noiseless())
    return simulate_scenario(cfg)


@pytest.fixture(scope="session")
def scenario():
    """Callable (kind, duration, seed, noiseless=False) -> (truth, imu, gnss).

    Results are cached for the whole session; tests must treat the returned
    arrays as read-only.
    """
    return _simulate
