import numpy as np
import pytest

from cuprl.envs import (
    ACTION_DIM,
    GOAL_BONUS,
    OBS_DIM,
    SUCCESS_RADIUS,
    V_MAX,
    GoalBox,
    PointMassState,
    TaskSpec,
    make_chain_mdp,
    make_task,
    observe,
    reset,
    step,
)


def seg_side(wall, point):
    """Sign of the point relative to the wall line (oracle)."""
    d = wall[1] - wall[0]
    v = point - wall[0]
    return np.sign(d[0] * v[1] - d[1] * v[0])


def segments_cross(p, q, a, b):
    """Orientation-test oracle for proper segment intersection."""
    def orient(x, y, z):
        return np.sign((y[0] - x[0]) * (z[1] - x[1]) - (y[1] - x[1]) * (z[0] - x[0]))

    return (orient(p, q, a) != orient(p, q, b)) and (orient(a, b, p) != orient(a, b, q))


def test_reset_deterministic_given_stream():
    spec = make_task("reach")
    s1 = reset(spec, np.random.default_rng(5))
    s2 = reset(spec, np.random.default_rng(5))
    assert np.array_equal(s1.position, s2.position)
    assert np.array_equal(s1.goal, s2.goal)
    assert s1.step_index == 0
    assert np.all(s1.velocity == 0.0)


def test_reset_degenerate_goal_sampler():
    point = np.array([0.25, 0.5])
    spec = make_task("reach", goal_sampler=GoalBox(point, point))
    s = reset(spec, np.random.default_rng(0))
    assert np.array_equal(s.goal, point)


def test_reset_goal_statistics_match_sampler():
    spec = make_task("random_goal")
    rng = np.random.default_rng(123)
    goals = np.array([reset(spec, rng).goal for _ in range(10_000)])
    box = spec.goal_sampler
    # uniform on [low, high]: sd = width / sqrt(12)
    se = (box.high - box.low) / np.sqrt(12.0) / np.sqrt(len(goals))
    assert np.all(np.abs(goals.mean(axis=0) - box.mean) <= 3 * se)


def test_zero_action_zero_velocity_is_fixed_point():
    spec = make_task("reach")
    state = PointMassState(np.array([0.1, 0.2]), np.zeros(2),
                           np.array([0.5, 0.5]), 0)
    nxt, reward, done, success = step(state, np.zeros(2), spec)
    assert np.array_equal(nxt.position, state.position)
    dist = np.linalg.norm(state.position - state.goal)
    assert reward == pytest.approx(-dist)
    assert not done and not success


def test_goal_bonus_dominates_at_goal():
    spec = make_task("reach")
    goal = np.array([0.3, 0.3])
    state = PointMassState(goal.copy(), np.zeros(2), goal.copy(), 0)
    _, reward, _, success = step(state, np.full(2, 0.01), spec)
    assert success
    assert reward >= GOAL_BONUS - SUCCESS_RADIUS - 1e-9


def test_done_at_horizon():
    spec = make_task("reach", horizon=3)
    state = reset(spec, np.random.default_rng(0))
    for k in range(3):
        state, _, done, _ = step(state, np.array([0.1, 0.0]), spec)
        assert done == (k == 2)
    assert state.step_index == 3


def test_wall_blocks_all_approach_angles():
    spec = make_task("reach_wall")
    wall = spec.wall
    mid = 0.5 * (wall[0] + wall[1])
    rng = np.random.default_rng(9)
    for _ in range(100):
        # start below the wall near its middle, slam into it at a random angle
        offset = rng.uniform(-0.3, 0.3)
        start = np.array([mid[0] + offset, wall[0, 1] - 0.02])
        start_sign = seg_side(wall, start)
        angle = rng.uniform(0.15 * np.pi, 0.85 * np.pi)
        velocity = V_MAX * np.array([np.cos(angle), np.sin(angle)])
        state = PointMassState(start, velocity, np.array([0.0, 0.9]), 0)
        action = rng.uniform(-1, 1, 2)
        target = np.clip(start + 0.1 * np.clip(velocity + 0.1 * action,
                                               -V_MAX, V_MAX), -1, 1)
        nxt, _, _, _ = step(state, action, spec)
        if segments_cross(start, target, wall[0], wall[1]):
            assert seg_side(wall, nxt.position) == start_sign
            assert np.all(nxt.velocity == 0.0)


def test_bounds_hold_under_fuzzing():
    rng = np.random.default_rng(77)
    spec = make_task("reach_wall", horizon=10_000)
    state = reset(spec, rng)
    for _ in range(100_000):
        state, _, done, _ = step(state, rng.uniform(-3, 3, 2), spec)
        assert np.all(np.abs(state.position) <= 1.0)
        assert np.all(np.abs(state.velocity) <= V_MAX)
        assert 0 <= state.step_index <= spec.horizon
        if done:
            state = reset(spec, rng)


def test_step_is_pure():
    spec = make_task("reach")
    state = PointMassState(np.array([0.1, 0.2]), np.array([0.05, 0.0]),
                           np.array([0.5, 0.5]), 4)
    a = np.array([0.3, -0.2])
    n1 = step(state, a, spec)
    n2 = step(state, a, spec)
    assert np.array_equal(n1[0].position, n2[0].position)
    assert n1[1] == n2[1]
    assert state.step_index == 4  # input untouched


def test_wall_spec_validation():
    with pytest.raises(ValueError):
        TaskSpec(task_kind="reach", goal_sampler=GoalBox(np.zeros(2), np.ones(2)),
                 wall=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        TaskSpec(task_kind="reach_wall", goal_sampler=GoalBox(np.zeros(2), np.ones(2)))
    with pytest.raises(ValueError):
        make_task("reach", horizon=0)


def test_observation_layout():
    spec = make_task("reach")
    s = reset(spec, np.random.default_rng(1))
    obs = observe(s)
    assert obs.shape == (OBS_DIM,)
    assert np.array_equal(obs[:2], s.position)
    assert np.array_equal(obs[4:], s.goal)
    assert ACTION_DIM == 2


def test_chain_mdp_rows_are_stochastic():
    mdp = make_chain_mdp(6, 3, 0.9, np.random.default_rng(3))
    sums = mdp.transition.sum(axis=2)
    assert np.max(np.abs(sums - 1.0)) <= 1e-12
    assert np.all(mdp.transition >= 0.0)
    assert np.max(np.abs(mdp.reward)) <= 1.0
    assert mdp.reward_bound <= 1.0


def test_chain_mdp_rejects_degenerate_sizes():
    with pytest.raises(ValueError):
        make_chain_mdp(1, 3, 0.9, np.random.default_rng(0))
    with pytest.raises(ValueError):
        make_chain_mdp(4, 1, 0.9, np.random.default_rng(0))


def test_chain_mdp_deterministic_given_seed():
    a = make_chain_mdp(5, 2, 0.95, np.random.default_rng(11))
    b = make_chain_mdp(5, 2, 0.95, np.random.default_rng(11))
    assert np.array_equal(a.reward, b.reward)
    assert np.array_equal(a.transition, b.transition)
