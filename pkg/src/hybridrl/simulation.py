"""Batched noise-free closed-loop rollouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import RUNNING, ControlEnv, TerminationCause, as_states
from .models import FloatArray, IntArray
from .policies import Policy


@dataclass(slots=True)
class Rollout:
    """States of ``N`` trajectories over ``T`` steps.

    Terminated trajectories are frozen at their terminal state.
    """

    states: FloatArray  # (T + 1, N, 2)
    actions: FloatArray  # (T, N); NaN after termination
    codes: IntArray  # (N,) final termination codes
    steps: IntArray  # (N,) steps taken before termination (or T)

    @property
    def final_states(self) -> FloatArray:
        return self.states[-1]

    def causes(self) -> list[TerminationCause | None]:
        return [TerminationCause.from_code(int(code)) for code in self.codes]


def rollout(
    env: ControlEnv,
    policy: Policy,
    initial_states: FloatArray,
    n_steps: int,
) -> Rollout:
    """Simulate the noise-free closed loop ``xi+ = xi + f(xi, pi(xi)) dt`` in batch.

    Initial states that already satisfy a termination condition terminate at step 0.

    Args:
        env: Environment
        policy: Policy queried with exact observations
        initial_states: Array ``(N, 2)``
        n_steps: Maximum number of steps

    Returns:
        The rollout
    """
    current = as_states(initial_states).reshape(-1, 2).copy()
    count = current.shape[0]
    states = np.empty((n_steps + 1, count, 2))
    actions = np.full((n_steps, count), np.nan)
    states[0] = current
    codes = env.termination_codes(current)
    steps = np.zeros(count, dtype=np.int64)
    for k in range(n_steps):
        alive = codes == RUNNING
        if not alive.any():
            states[k + 1 :] = current
            break
        chosen = np.asarray(policy.act_batch(current[alive]), dtype=np.float64)
        actions[k, alive] = chosen
        current[alive] = env.advance(current[alive], chosen)
        codes[alive] = env.termination_codes(current[alive])
        steps[alive] += 1
        states[k + 1] = current
    return Rollout(states, actions, codes, steps)
