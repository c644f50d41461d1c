import numpy as np
import pytest

from taskmix.ddpg import Batch, DdpgAgent, ReplayBuffer, Transition, run_episode
from taskmix.envs import Navigation2D
from taskmix.nets import LayerSpec, Network


def make_agent(seed=0, optimizer="adam", hidden=(8, 8), **kw):
    return DdpgAgent.init(
        2, 2, [-0.1, -0.1], [0.1, 0.1], hidden=hidden, rng=np.random.default_rng(seed),
        optimizer=optimizer, **kw
    )


def random_batch(n=16, seed=0, terminal_frac=0.0):
    rng = np.random.default_rng(seed)
    trs = []
    for i in range(n):
        trs.append(
            Transition(
                state=rng.uniform(0, 1, 2),
                action=rng.uniform(-0.1, 0.1, 2),
                reward=float(rng.uniform(-1, 0)),
                next_state=rng.uniform(0, 1, 2),
                terminal=bool(rng.uniform() < terminal_frac),
            )
        )
    return Batch.from_transitions(trs)


class TestSelectAction:
    def test_noiseless_is_deterministic(self):
        agent = make_agent(3)
        s = np.array([0.2, 0.8])
        a1 = agent.select_action(s, noise_std=0.0)
        a2 = agent.select_action(s, noise_std=0.0)
        assert np.array_equal(a1, a2)

    def test_zero_weight_actor_gives_centered_action(self):
        agent = make_agent(0)
        agent.actor.params[:] = 0.0
        a = agent.select_action(np.array([0.5, 0.5]), noise_std=0.0)
        np.testing.assert_array_equal(a, np.zeros(2))

    def test_seeded_noise_matches_rng_oracle(self):
        agent = make_agent(1)
        s = np.array([0.3, 0.4])
        a = agent.select_action(s, rng=np.random.default_rng(77), noise_std=0.1)
        det = agent.policy(s)
        want = np.clip(det + np.random.default_rng(77).normal(0.0, 0.1, size=2), -0.1, 0.1)
        np.testing.assert_array_equal(a, want)

    def test_always_within_bounds(self):
        agent = make_agent(2)
        rng = np.random.default_rng(5)
        for _ in range(200):
            a = agent.select_action(rng.uniform(0, 1, 2), rng=rng, noise_std=1.0)
            assert (a >= -0.1).all() and (a <= 0.1).all()

    def test_default_noise_is_tenth_of_half_range(self):
        assert make_agent(0).noise_std == pytest.approx(0.01)


class TestBellmanTargets:
    def test_gamma_zero_gives_rewards(self):
        agent = make_agent(0, gamma=0.0)
        batch = random_batch()
        np.testing.assert_array_equal(agent.bellman_targets(batch), batch.rewards)

    def test_zero_critic_gives_rewards(self):
        agent = make_agent(0)
        agent.critic.params[:] = 0.0
        agent.critic_target.params[:] = 0.0
        batch = random_batch()
        np.testing.assert_array_equal(agent.bellman_targets(batch), batch.rewards)

    def test_three_transitions_match_forward_oracle(self):
        agent = make_agent(4, gamma=0.99)
        batch = random_batch(3, seed=9)
        got = agent.bellman_targets(batch)
        for i in range(3):
            mu = agent.actor_target.forward(batch.next_states[i]) * agent.action_half + agent.action_mid
            q = agent.critic_target.forward(np.concatenate([batch.next_states[i], mu]))[0]
            want = batch.rewards[i] + 0.99 * q
            assert got[i] == pytest.approx(want, rel=1e-12)

    def test_terminal_bootstrap_dropped(self):
        agent = make_agent(4)
        batch = random_batch(8, seed=2, terminal_frac=1.0)
        np.testing.assert_array_equal(agent.bellman_targets(batch), batch.rewards)

    def test_terminal_mask_off_keeps_bootstrap(self):
        agent = make_agent(4)
        batch = random_batch(8, seed=2, terminal_frac=1.0)
        unmasked = agent.bellman_targets(batch, terminal_mask=False)
        assert not np.array_equal(unmasked, batch.rewards)


class TestCriticUpdate:
    def test_zero_responsibility_keeps_params_reports_mse(self):
        agent = make_agent(1)
        before = agent.critic.params.copy()
        mse = agent.critic_update(random_batch(), responsibility=0.0)
        assert np.array_equal(agent.critic.params, before)
        assert mse > 0.0

    def test_zero_residual_batch_keeps_params(self):
        agent = make_agent(1)
        agent.critic.params[:] = 0.0
        agent.critic_target.params[:] = 0.0
        rng = np.random.default_rng(0)
        trs = [
            Transition(rng.uniform(0, 1, 2), rng.uniform(-0.1, 0.1, 2), 0.0, rng.uniform(0, 1, 2), True)
            for _ in range(8)
        ]
        mse = agent.critic_update(Batch.from_transitions(trs))
        assert mse == 0.0
        assert not np.any(agent.critic.params)

    def test_responsibility_scaling_equals_scaled_lr_sgd(self):
        batch = random_batch(12, seed=6)
        a = make_agent(7, optimizer="sgd", lr=1e-3)
        b = make_agent(7, optimizer="sgd", lr=5e-4)
        a.critic_update(batch, responsibility=0.5)
        b.critic_update(batch, responsibility=1.0)
        assert np.array_equal(a.critic.params, b.critic.params)

    def test_responsibility_one_is_plain_update(self):
        batch = random_batch(12, seed=6)
        a = make_agent(7, optimizer="sgd")
        b = make_agent(7, optimizer="sgd")
        a.critic_update(batch, responsibility=1.0)
        b.critic_update(batch)
        assert np.array_equal(a.critic.params, b.critic.params)


class TestActorUpdate:
    def test_zero_responsibility_keeps_params(self):
        agent = make_agent(1)
        before = agent.actor.params.copy()
        agent.actor_update(random_batch(), responsibility=0.0)
        assert np.array_equal(agent.actor.params, before)

    def test_critic_blind_to_actions_gives_zero_actor_gradient(self):
        agent = make_agent(1)
        # zero the first-layer weight rows that read the action inputs
        for w, b in agent.critic.layer_views()[:1]:
            w[2:, :] = 0.0
        before = agent.actor.params.copy()
        agent.actor_update(random_batch())
        assert np.array_equal(agent.actor.params, before)

    def test_critic_params_untouched_by_actor_update(self):
        agent = make_agent(2)
        before = agent.critic.params.copy()
        agent.actor_update(random_batch())
        assert np.array_equal(agent.critic.params, before)

    def test_update_improves_mean_q(self):
        agent = make_agent(3, hidden=(16, 16), lr=1e-2)
        batch = random_batch(32, seed=8)

        def mean_q():
            actions = agent.policy(batch.states)
            return float(np.mean(agent.q_values(batch.states, actions)))

        before = mean_q()
        agent.actor_update(batch)
        assert mean_q() > before


class TestTargets:
    def test_tau_zero_targets_frozen(self):
        agent = make_agent(5, tau=0.0)
        a0 = agent.actor_target.params.copy()
        c0 = agent.critic_target.params.copy()
        for seed in range(5):
            agent.train_step(random_batch(16, seed=seed))
        assert np.array_equal(agent.actor_target.params, a0)
        assert np.array_equal(agent.critic_target.params, c0)

    def test_targets_move_toward_online(self):
        agent = make_agent(5, tau=0.5)
        agent.train_step(random_batch(16, seed=1))
        gap = np.abs(agent.critic_target.params - agent.critic.params).max()
        agent.update_targets()
        gap2 = np.abs(agent.critic_target.params - agent.critic.params).max()
        assert gap2 <= gap

    def test_clone_is_deep(self):
        agent = make_agent(6)
        c = agent.clone()
        c.train_step(random_batch(16, seed=0))
        assert not np.array_equal(c.critic.params, agent.critic.params)


class TestReplayBuffer:
    def _tr(self, i):
        return Transition(np.full(2, float(i)), np.zeros(2), float(i), np.zeros(2), False)

    def test_fifo_keeps_first_five_in_order(self):
        buf = ReplayBuffer(10, 2, 2)
        for i in range(5):
            buf.push(self._tr(i))
        assert len(buf) == 5
        got = buf.stored_order()
        np.testing.assert_array_equal(got.rewards, [0, 1, 2, 3, 4])

    def test_fifo_evicts_oldest(self):
        buf = ReplayBuffer(3, 2, 2)
        for i in range(5):
            buf.push(self._tr(i))
        np.testing.assert_array_equal(buf.stored_order().rewards, [2, 3, 4])

    def test_sample_full_buffer_is_permutation(self):
        buf = ReplayBuffer(8, 2, 2)
        for i in range(8):
            buf.push(self._tr(i))
        batch = buf.sample(8, np.random.default_rng(0))
        assert sorted(batch.rewards.tolist()) == list(range(8))

    def test_sample_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            ReplayBuffer(4, 2, 2).sample(1, np.random.default_rng(0))

    def test_oversample_uses_replacement(self):
        buf = ReplayBuffer(4, 2, 2)
        buf.push(self._tr(1))
        batch = buf.sample(6, np.random.default_rng(0))
        assert len(batch) == 6
        assert set(batch.rewards.tolist()) == {1.0}

    def test_newest_returns_most_recent(self):
        buf = ReplayBuffer(4, 2, 2)
        for i in range(6):
            buf.push(self._tr(i))
        got = sorted(buf.newest(3).rewards.tolist())
        assert got == [3, 4, 5]

    def test_reservoir_needs_rng(self):
        with pytest.raises(ValueError, match="rng"):
            ReplayBuffer(4, 2, 2, mode="reservoir")

    def test_reservoir_never_exceeds_capacity(self):
        buf = ReplayBuffer(10, 2, 2, mode="reservoir", rng=np.random.default_rng(0))
        for i in range(200):
            buf.push(self._tr(i))
        assert len(buf) == 10
        assert buf.seen_count == 200

    def test_reservoir_matches_independent_simulation(self):
        # same draw sequence, independently replayed slot bookkeeping
        for trial in range(20):
            rng = np.random.default_rng(1000 + trial)
            buf = ReplayBuffer(10, 2, 2, mode="reservoir", rng=rng)
            for i in range(300):
                buf.push(self._tr(i))
            sim_rng = np.random.default_rng(1000 + trial)
            slots = list(range(10))
            for k in range(11, 301):
                j = int(sim_rng.integers(0, k))
                if j < 10:
                    slots[j] = k - 1
            got = sorted(buf.stored_order().rewards.tolist())
            assert got == sorted(float(s) for s in slots)


class TestRunEpisode:
    def test_episode_respects_horizon_and_return(self):
        domain = Navigation2D()
        agent = make_agent(0)
        buf = ReplayBuffer(1000, 2, 2)
        res = run_episode(
            domain, np.array([0.9, 0.9]), agent, buf,
            explore_rng=np.random.default_rng(0), sample_rng=np.random.default_rng(1),
            train=False,
        )
        assert res.steps <= domain.spec.horizon
        assert len(buf) == res.steps
        assert res.ret <= 0.0
