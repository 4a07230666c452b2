import pytest

from multinav.config import desk_config

TINY = {
    "lidar": {"n_beams": 32},
    "net": {"conv1": [8, 5, 2], "conv2": [8, 3, 2], "fc1": 32, "fc2": 16},
    "ppo": {"rollout_length": 16, "minibatch_size": 32, "epochs": 2},
    "stage_one": {"random_empty": 3},
    "stage_two": {"circle": 2, "random_obstacles": 2},
    "curriculum": {"max_stage1_iterations": 3, "total_iterations": 6},
    "checkpoint_every": 2,
}


def tiny_config(**overrides):
    """A seconds-scale training setup that exercises every code path."""
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY.items()}
    for k, v in overrides.items():
        if isinstance(v, dict) and k in raw and k not in ("stage_one", "stage_two"):
            raw[k].update(v)
        else:
            raw[k] = v
    return desk_config(**raw)


@pytest.fixture
def tiny():
    return tiny_config()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance")
        for line in RESULTS:
            terminalreporter.write_line(line)
