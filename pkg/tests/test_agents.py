from collections import Counter

import pytest

from rulegame.agents import (
    ACTIONS,
    AbstractAction,
    AgentConfig,
    AgentKind,
    Observation,
    QLearningAgent,
    RandomAgent,
    Selector,
    default_state_key,
    export_q_table,
    make_observation,
    new_agent,
)
from rulegame.engine import EpisodeParams, MoveAttempt, Status, attempt_move, make_state, new_episode
from rulegame.rules import Bucket, parse_rule

LEFT, RIGHT = Bucket.LEFT, Bucket.RIGHT

RULE_LTR = parse_rule("order=ltr; bucket=any")


def obs_from(board, last_success=None, success_count=0, failures=frozenset()):
    return Observation(
        board=tuple(board),
        last_success=last_success,
        success_count=success_count,
        failures_this_board=frozenset(failures),
    )


class TestObservation:
    def test_failures_reset_on_board_change(self):
        from rulegame.engine import pattern_to_board

        state = make_state(RULE_LTR, pattern_to_board("..R...G....."))
        attempt_move(state, MoveAttempt(7, LEFT))  # rejected
        attempt_move(state, MoveAttempt(7, RIGHT))  # rejected
        obs = make_observation(state)
        assert obs.failures_this_board == {MoveAttempt(7, LEFT), MoveAttempt(7, RIGHT)}
        attempt_move(state, MoveAttempt(3, LEFT))  # accepted, board changes
        obs = make_observation(state)
        assert obs.failures_this_board == frozenset()
        attempt_move(state, MoveAttempt(2, LEFT))  # rejected (empty cell)
        obs = make_observation(state)
        assert obs.failures_this_board == {MoveAttempt(2, LEFT)}
        assert obs.last_success == (3, "red", LEFT)
        assert obs.success_count == 1

    def test_default_state_key(self):
        obs = obs_from(("red", None, "green"), last_success=(2, "red", RIGHT), success_count=3)
        assert default_state_key(obs) == ("right", 1, "red", "green")
        empty = obs_from((None, None))
        assert default_state_key(empty) == ("none", 0, "empty", "empty")


class TestAbstractActions:
    def test_enumeration_order_and_size(self):
        assert len(ACTIONS) == 12  # (2 + 4 colors) selectors x 2 buckets
        assert ACTIONS[0] == AbstractAction(Selector.LEFTMOST, None, LEFT)
        assert ACTIONS[1] == AbstractAction(Selector.LEFTMOST, None, RIGHT)
        assert ACTIONS[2].selector is Selector.RIGHTMOST

    def test_resolution(self):
        board = (None, "red", None, "green", "red")
        assert AbstractAction(Selector.LEFTMOST, None, LEFT).resolve(board) == 2
        assert AbstractAction(Selector.RIGHTMOST, None, LEFT).resolve(board) == 5
        assert AbstractAction(Selector.LEFTMOST_OF, "green", LEFT).resolve(board) == 4
        assert AbstractAction(Selector.LEFTMOST_OF, "blue", LEFT).resolve(board) is None


class TestRandomAgent:
    def test_uniform_over_two_moves(self):
        agent = new_agent(AgentConfig(kind=AgentKind.RANDOM, seed=5))
        obs = obs_from((None, "red", None))
        counts = Counter(agent.select_move(obs) for _ in range(10_000))
        assert set(counts) == {MoveAttempt(2, LEFT), MoveAttempt(2, RIGHT)}
        # binomial(10^4, 1/2): 3 sigma = 150
        assert abs(counts[MoveAttempt(2, LEFT)] - 5000) < 150

    def test_avoids_failed_pairs(self):
        agent = new_agent(AgentConfig(kind=AgentKind.RANDOM, seed=5))
        obs = obs_from(("red", "green"), failures={MoveAttempt(1, LEFT), MoveAttempt(1, RIGHT)})
        for _ in range(50):
            assert agent.select_move(obs).position == 2

    def test_all_failed_falls_back_to_uniform(self):
        agent = new_agent(AgentConfig(kind=AgentKind.RANDOM, seed=5))
        all_pairs = {MoveAttempt(1, LEFT), MoveAttempt(1, RIGHT)}
        obs = obs_from(("red",), failures=all_pairs)
        assert {agent.select_move(obs) for _ in range(50)} == all_pairs

    def test_pure_uniform_flag(self):
        agent = new_agent(AgentConfig(kind=AgentKind.RANDOM, seed=5, avoid_failures=False))
        obs = obs_from(("red", "green"), failures={MoveAttempt(1, LEFT)})
        seen = {agent.select_move(obs) for _ in range(200)}
        assert MoveAttempt(1, LEFT) in seen

    def test_same_seed_same_sequence(self):
        a = new_agent(AgentConfig(kind=AgentKind.RANDOM, seed=11))
        b = new_agent(AgentConfig(kind=AgentKind.RANDOM, seed=11))
        obs = obs_from(("red", None, "green", "blue"))
        assert [a.select_move(obs) for _ in range(30)] == [b.select_move(obs) for _ in range(30)]


class TestQLearningAgent:
    def test_fresh_table_is_zero(self):
        agent = new_agent(AgentConfig(kind=AgentKind.QLEARN))
        obs = obs_from(("red",))
        key = default_state_key(obs)
        assert all(agent.value(key, action) == 0.0 for action in ACTIONS)

    def test_greedy_argmax(self):
        agent = QLearningAgent(AgentConfig(epsilon0=0.0))
        obs = obs_from(("green", "red", None))
        key = default_state_key(obs)
        agent.q[(key, AbstractAction(Selector.LEFTMOST_OF, "red", RIGHT))] = 1.0
        assert agent.select_move(obs) == MoveAttempt(2, RIGHT)

    def test_zero_table_tie_breaks_to_first_action(self):
        agent = QLearningAgent(AgentConfig(epsilon0=0.0))
        obs = obs_from((None, "red", "green"))
        assert agent.select_move(obs) == MoveAttempt(2, LEFT)  # LEFTMOST, LEFT

    def test_masked_actions_never_selected(self):
        agent = QLearningAgent(AgentConfig(epsilon0=1.0, seed=3))  # always explore
        obs = obs_from((None, "red", None, "red"))
        for _ in range(300):
            move = agent.select_move(obs)
            assert obs.board[move.position - 1] is not None

    def test_update_accept_terminal(self):
        agent = QLearningAgent(AgentConfig(epsilon0=0.0))
        obs = obs_from(("red",))
        move = agent.select_move(obs)
        out = attempt_move(make_state(parse_rule("order=any; bucket=any"), ("red",)), move)
        next_obs = obs_from((None,), last_success=(1, "red", move.bucket), success_count=1)
        agent.observe(obs, move, out, next_obs)
        key = default_state_key(obs)
        assert agent.value(key, ACTIONS[0]) == pytest.approx(0.1)

    def test_update_reject_zero_next(self):
        agent = QLearningAgent(AgentConfig(epsilon0=0.0))
        obs = obs_from(("red", "green"))
        move = agent.select_move(obs)

        class Rejected:
            accepted = False
            reward = -1

        agent.observe(obs, move, Rejected(), obs)
        assert agent.value(default_state_key(obs), ACTIONS[0]) == pytest.approx(-0.1)

    def test_repeated_terminal_reward_converges_geometrically(self):
        agent = QLearningAgent(AgentConfig(epsilon0=0.0, alpha=0.1))
        obs = obs_from(("red",))
        terminal = obs_from((None,), success_count=1)

        class Accepted:
            accepted = True
            reward = 1

        values = []
        for n in range(1, 51):
            move = agent.select_move(obs)
            agent.observe(obs, move, Accepted(), terminal)
            values.append(agent.value(default_state_key(obs), ACTIONS[0]))
            assert values[-1] == pytest.approx(1 - 0.9**n)  # closed form
        assert all(b > a for a, b in zip(values, values[1:]))  # monotone toward +1

    def test_epsilon_decay(self):
        agent = QLearningAgent(AgentConfig(epsilon0=0.2, epsilon_decay=0.995))
        agent.end_episode()
        assert agent.epsilon == pytest.approx(0.199)
        for _ in range(99):
            agent.end_episode()
        assert agent.epsilon == pytest.approx(0.2 * 0.995**100)

    def test_q_values_bounded_on_long_run(self):
        config = AgentConfig(kind=AgentKind.QLEARN, seed=1)
        agent = new_agent(config)
        params = EpisodeParams(L=6, Kmin=3, Kmax=3, C=2)
        rule = parse_rule("order=ltr; bucket=any")
        bound = 1.0 / (1.0 - config.gamma) + 1e-9
        for episode in range(200):
            state = new_episode(rule, params, episode)
            obs = make_observation(state)
            while state.status is Status.IN_PROGRESS:
                move = agent.select_move(obs)
                out = attempt_move(state, move)
                next_obs = make_observation(state)
                agent.observe(obs, move, out, next_obs)
                obs = next_obs
            agent.end_episode()
        assert agent.q
        assert all(abs(v) <= bound for v in agent.q.values())

    def test_frozen_policy_deterministic(self):
        agent = QLearningAgent(AgentConfig(epsilon0=0.0))
        obs = obs_from(("red", "green", None, "blue"))
        assert agent.select_move(obs) == agent.select_move(obs)

    def test_export_q_table(self):
        agent = QLearningAgent(AgentConfig(epsilon0=0.0))
        key = ("none", 0, "red", "red")
        agent.q[(key, ACTIONS[0])] = 0.5
        text = export_q_table(agent)
        lines = text.strip().splitlines()
        assert lines[0] == "state_key,selector,color,bucket,value"
        assert lines[1] == "none|0|red|red,leftmost,,left,0.5"


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        AgentConfig(alpha=0.0)
    with pytest.raises(ValueError):
        AgentConfig(epsilon0=1.5)


def test_random_agent_ignores_learning_params():
    agent = new_agent(AgentConfig(kind=AgentKind.RANDOM, alpha=1.0, epsilon0=0.9, seed=2))
    assert isinstance(agent, RandomAgent)
    agent.end_episode()  # no state to change
