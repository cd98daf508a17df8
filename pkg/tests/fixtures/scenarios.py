"""
Hand-built kernels and small scenarios shared by the test suites.
"""

from imposter_sim.dedup import ScanConfig
from imposter_sim.harness import AttackScenario, TargetSpec

TWO_STATE_TRANSITION = [
    [0.9, 0.1],
    [0.2, 0.8],
]
TWO_STATE_OBSERVATION = [
    [0.7, 0.2, 0.1],
    [0.1, 0.3, 0.6],
]

TWO_VAR_TRANSITION = [
    [[0.6, 0.3, 0.1], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]],
    [[0.5, 0.5], [0.25, 0.75]],
]
TWO_VAR_OBSERVATION = [
    [[0.9, 0.1], [0.3, 0.7], [0.5, 0.5]],
    [[0.6, 0.3, 0.1], [0.1, 0.1, 0.8], [0.2, 0.6, 0.2]],
    [[0.8, 0.2], [0.4, 0.6]],
]

# Enough history for every dominant kernel entry to win its argmax.
FAST_TRAINING = 3000


def fast_scenario(**overrides) -> AttackScenario:
    """Default attack scenario with a shorter historian."""
    params = dict(training_length=FAST_TRAINING, holdout_steps=5)
    params.update(overrides)
    return AttackScenario(**params)


def suction_drop_scenario(**overrides) -> AttackScenario:
    """Adversarial suction drop with a vulnerable cell planted under the bit."""
    params = dict(
        target=TargetSpec("adversarial", "suctionstate", 0, "one-to-zero"), plant_target_cell=True
    )
    params.update(overrides)
    return fast_scenario(**params)


def threshold_scenario(**overrides) -> AttackScenario:
    target = TargetSpec("adversarial", "S_theta", 11, "zero-to-one")
    return fast_scenario(target=target, **overrides)


def slow_scan() -> ScanConfig:
    return ScanConfig(pages_to_scan=1, sleep_millisec=20, gb_scan_minutes=6.5)
