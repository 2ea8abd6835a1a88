import numpy as np
import pytest

from core.file_ops import FileOperations
from core.models import Diagnosis, SymptomRequest, SymptomStatus, UserGoal, build_state, count_true
from core.simulator import (
    DiagnosisEnv,
    EpisodeConfig,
    EpisodeStatus,
    SubtaskStatus,
    answer,
    intrinsic_reward,
    potential,
    shaped_reward,
    shaping,
    subtask_status,
)
from core.validator import ConfigError, EpisodeTerminatedError, UnknownSymptomError, ValidationError
from tests.helpers import TOY_TABLE


@pytest.fixture
def env(tiny_ontology):
    return DiagnosisEnv(tiny_ontology, EpisodeConfig())


class TestEpisodeConfig:
    def test_defaults(self):
        config = EpisodeConfig()
        assert config.max_turns == 20
        assert config.max_subtask_turns == 5
        assert config.shaping_lambda == 1.0

    @pytest.mark.parametrize("field, value", [
        ("max_turns", 0),
        ("max_subtask_turns", 0),
        ("shaping_lambda", -0.1),
        ("master_gamma", 1.5),
        ("worker_gamma", -0.5),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ConfigError):
            EpisodeConfig(**{field: value})

    def test_from_dict(self):
        assert EpisodeConfig.from_dict({"max_turns": 7}).max_turns == 7
        with pytest.raises(ConfigError):
            EpisodeConfig.from_dict({"turns": 7})


class TestAnswer:
    def test_answers_follow_goal(self, flu_goal):
        assert answer("fever", flu_goal) is SymptomStatus.TRUE
        assert answer("cough", flu_goal) is SymptomStatus.TRUE
        assert answer("chills", flu_goal) is SymptomStatus.FALSE
        assert answer("nausea", flu_goal) is SymptomStatus.UNKNOWN

    def test_unknown_implicit_label_is_unknown(self):
        goal = UserGoal("flu", "g1", ("fever",), {"cough": SymptomStatus.UNKNOWN})
        assert answer("cough", goal) is SymptomStatus.UNKNOWN


class TestDiagnosisEnv:
    def test_reset_seeds_explicit_symptoms(self, env, flu_goal, tiny_ontology):
        state, goal = env.reset(flu_goal)
        assert goal is flu_goal
        assert state.turn == 0
        assert count_true(state) == 1
        assert state.block(tiny_ontology.symptom_index["fever"]).tolist() == [1.0, 0.0, 0.0]
        assert env.history == {"fever"}

    def test_request_updates_state(self, env, flu_goal, tiny_ontology):
        env.reset(flu_goal)
        outcome = env.step(SymptomRequest("cough"))
        assert outcome.status is EpisodeStatus.ONGOING
        assert outcome.reward == 0.0
        assert outcome.answer is SymptomStatus.TRUE
        assert outcome.state.turn == 1
        assert count_true(outcome.state) == 2

        outcome = env.step(SymptomRequest("nausea"))
        assert outcome.answer is SymptomStatus.UNKNOWN
        assert outcome.state.block(tiny_ontology.symptom_index["nausea"]).tolist() == [0.0, 0.0, 1.0]

    def test_requesting_explicit_symptom_is_a_repeat(self, env, flu_goal):
        env.reset(flu_goal)
        outcome = env.step(SymptomRequest("fever"))
        assert outcome.repeated is True
        assert outcome.reward == -1.0
        assert outcome.status is EpisodeStatus.REPEATED_ACTION
        assert env.done

    def test_repeat_after_request(self, env, flu_goal):
        env.reset(flu_goal)
        env.step(SymptomRequest("chills"))
        before = env.state
        outcome = env.step(SymptomRequest("chills"))
        assert outcome.status is EpisodeStatus.REPEATED_ACTION
        assert np.array_equal(outcome.state.vector, before.vector)
        assert outcome.state.turn == 2

    def test_diagnosis(self, env, flu_goal):
        env.reset(flu_goal)
        outcome = env.step(Diagnosis("flu"))
        assert outcome.reward == 1.0
        assert outcome.status is EpisodeStatus.SUCCESS_DIAGNOSIS

        env.reset(flu_goal)
        outcome = env.step(Diagnosis("cold"))
        assert outcome.reward == -1.0
        assert outcome.status is EpisodeStatus.WRONG_DIAGNOSIS

    def test_goal_without_disease_is_never_right(self, env):
        env.reset(UserGoal(None, None, ("fever",)))
        assert env.step(Diagnosis("flu")).status is EpisodeStatus.WRONG_DIAGNOSIS

    def test_unknown_names(self, env, flu_goal):
        env.reset(flu_goal)
        with pytest.raises(UnknownSymptomError):
            env.step(SymptomRequest("itching"))
        with pytest.raises(ValidationError):
            env.step(Diagnosis("plague"))

    def test_step_after_end(self, env, flu_goal):
        with pytest.raises(EpisodeTerminatedError):
            env.step(SymptomRequest("cough"))
        env.reset(flu_goal)
        env.step(Diagnosis("flu"))
        with pytest.raises(EpisodeTerminatedError):
            env.step(Diagnosis("flu"))

    def test_max_turns(self, tiny_ontology, flu_goal):
        env = DiagnosisEnv(tiny_ontology, EpisodeConfig(max_turns=3))
        env.reset(flu_goal)
        assert env.step(SymptomRequest("cough")).status is EpisodeStatus.ONGOING
        assert env.step(SymptomRequest("chills")).status is EpisodeStatus.ONGOING
        outcome = env.step(SymptomRequest("nausea"))
        assert outcome.status is EpisodeStatus.MAX_TURNS_REACHED
        assert outcome.reward == -1.0

    def test_default_cap_is_twenty_turns(self):
        ontology = FileOperations().read_table(TOY_TABLE).to_ontology()
        goal = UserGoal("influenza", "1", ("fever",))
        env = DiagnosisEnv(ontology, EpisodeConfig())
        env.reset(goal)
        others = [name for name in ontology.symptoms if name != "fever"]
        for name in others[:19]:
            assert env.step(SymptomRequest(name)).status is EpisodeStatus.ONGOING
        outcome = env.step(SymptomRequest(others[19]))
        assert outcome.status is EpisodeStatus.MAX_TURNS_REACHED
        assert outcome.state.turn == 20

    def test_reset_from_goal_list(self, env, flu_goal):
        _, goal = env.reset([flu_goal], np.random.default_rng(0))
        assert goal is flu_goal
        with pytest.raises(ValueError):
            env.reset([flu_goal])
        with pytest.raises(ValidationError):
            env.reset([], np.random.default_rng(0))

    def test_custom_responder(self, tiny_ontology, flu_goal):
        env = DiagnosisEnv(tiny_ontology, EpisodeConfig(), responder=lambda symptom, goal: SymptomStatus.FALSE)
        env.reset(flu_goal)
        assert env.step(SymptomRequest("cough")).answer is SymptomStatus.FALSE


class TestInternalCritic:
    def test_hit(self):
        assert intrinsic_reward(False, SymptomStatus.TRUE, 1, 5) == 1
        assert subtask_status(SymptomStatus.TRUE, False, 1, 5) is SubtaskStatus.SUCCESS_HIT

    def test_hit_on_last_turn_still_succeeds(self):
        assert intrinsic_reward(False, SymptomStatus.TRUE, 5, 5) == 1
        assert subtask_status(SymptomStatus.TRUE, False, 5, 5) is SubtaskStatus.SUCCESS_HIT

    def test_repeat(self):
        assert intrinsic_reward(True, None, 2, 5) == -1
        assert subtask_status(None, True, 2, 5) is SubtaskStatus.FAIL_REPEAT

    def test_budget(self):
        assert intrinsic_reward(False, SymptomStatus.FALSE, 5, 5) == -1
        assert subtask_status(SymptomStatus.UNKNOWN, False, 5, 5) is SubtaskStatus.FAIL_BUDGET

    def test_ongoing(self):
        assert intrinsic_reward(False, SymptomStatus.FALSE, 3, 5) == 0
        assert subtask_status(SymptomStatus.FALSE, False, 3, 5) is SubtaskStatus.ONGOING


def discounted_shaping(env, goal, rng, config):
    state, _ = env.reset(goal)
    total, discount = 0.0, 1.0
    symptoms = env.ontology.symptoms
    while not env.done:
        if rng.random() < 0.1:
            action = Diagnosis(env.ontology.diseases[int(rng.integers(len(env.ontology.diseases)))])
        else:
            action = SymptomRequest(symptoms[int(rng.integers(len(symptoms)))])
        outcome = env.step(action)
        total += discount * (shaped_reward(outcome, state, config) - outcome.reward)
        discount *= config.master_gamma
        state = outcome.state
    return total


class TestShaping:
    def test_potential(self, tiny_ontology, flu_goal):
        state = build_state({"fever": SymptomStatus.TRUE, "cough": SymptomStatus.TRUE}, tiny_ontology)
        assert potential(state, False, 0.5) == 1.0
        assert potential(state, True, 0.5) == 0.0

    def test_shaping_formula(self, tiny_ontology):
        before = build_state({"fever": SymptomStatus.TRUE}, tiny_ontology)
        after = before.with_status(1, SymptomStatus.TRUE, turn=1)
        assert shaping(before, after, 1.0, 0.9) == pytest.approx(0.9 * 2 - 1)
        assert shaping(before, after, 1.0, 0.9, next_terminal=True) == pytest.approx(-1.0)

    def test_discounted_shaping_telescopes(self, tiny_ontology, tiny_dataset):
        config = EpisodeConfig(shaping_lambda=0.5, master_gamma=0.9)
        env = DiagnosisEnv(tiny_ontology, config)
        rng = np.random.default_rng(21)
        for episode in range(1000):
            goal = tiny_dataset.goals[episode % len(tiny_dataset.goals)]
            initial = build_state(goal.initial_answers(), tiny_ontology)
            total = discounted_shaping(env, goal, rng, config)
            assert total == pytest.approx(-0.5 * count_true(initial), abs=1e-12)

    def test_shaping_preserves_optimal_policy(self, tiny_ontology):
        # six states: five dialogue states plus one absorbing terminal
        answers = [
            {},
            {"fever": SymptomStatus.TRUE},
            {"fever": SymptomStatus.TRUE, "cough": SymptomStatus.TRUE},
            {"fever": SymptomStatus.TRUE, "cough": SymptomStatus.TRUE, "chills": SymptomStatus.TRUE},
            {"nausea": SymptomStatus.TRUE, "chills": SymptomStatus.FALSE},
        ]
        states = [build_state(a, tiny_ontology) for a in answers]
        terminal = 5
        rng = np.random.default_rng(8)
        n_actions = 3
        transitions = {
            (s, a): (int(rng.integers(6)), float(rng.normal()))
            for s in range(5)
            for a in range(n_actions)
        }
        gamma, lam = 0.9, 0.7

        def shaped(s, a):
            nxt, reward = transitions[(s, a)]
            if nxt == terminal:
                return reward + shaping(states[s], states[0], lam, gamma, next_terminal=True)
            return reward + shaping(states[s], states[nxt], lam, gamma)

        def solve(reward_fn):
            values = np.zeros(6)
            for _ in range(2000):
                q = np.array([[reward_fn(s, a) + gamma * values[transitions[(s, a)][0]]
                               for a in range(n_actions)] for s in range(5)])
                values[:5] = q.max(axis=1)
            return values, q.argmax(axis=1)

        plain_values, plain_policy = solve(lambda s, a: transitions[(s, a)][1])
        shaped_values, shaped_policy = solve(shaped)

        assert plain_policy.tolist() == shaped_policy.tolist()
        for s in range(5):
            phi = potential(states[s], False, lam)
            assert shaped_values[s] == pytest.approx(plain_values[s] - phi, abs=1e-9)
