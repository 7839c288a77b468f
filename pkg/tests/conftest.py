import numpy as np
import pytest

from warmsched.instance import Agent, GenConfig, Instance, Obstacle, Task, generate
from warmsched.motion import compute_travel_times


def make_instance(starts, velocities, tasks, durations, precedence=None, wait=None,
                  obstacles=(), workspace=(100.0, 100.0), seed=0):
    """``tasks`` is a list of (x, y, window_start, window_end)."""
    nt = len(tasks)
    agents = [Agent(i, tuple(map(float, p)), float(v)) for i, (p, v) in
              enumerate(zip(starts, velocities))]
    tk = [Task(k, (float(x), float(y)), float(s), float(e)) for k, (x, y, s, e) in enumerate(tasks)]
    O = np.zeros((nt, nt), dtype=np.int8) if precedence is None else np.array(precedence)
    W = np.zeros((nt, nt)) if wait is None else np.array(wait, dtype=float)
    return Instance(agents, tk, [Obstacle(*o) for o in obstacles], workspace,
                    np.array(durations, dtype=float), O, W, seed)


@pytest.fixture
def small_pair():
    """A generated 2x3 instance with its travel times."""
    inst = generate(GenConfig(n_agents=2, n_tasks=3), 3)
    return inst, compute_travel_times(inst)


@pytest.fixture
def desk_pair():
    inst = generate(GenConfig(), 11)
    return inst, compute_travel_times(inst)
