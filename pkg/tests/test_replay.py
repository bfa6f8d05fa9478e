import numpy as np
import pytest

from coarsegrasp.replay import ReplayBuffer, Transition
from coarsegrasp.scene import GraspAction, HeightmapPair


def make_transition(tag: float) -> Transition:
    hm = HeightmapPair(np.full((4, 4, 3), tag), np.full((4, 4), tag))
    return Transition(hm, GraspAction(0, 0, 0), 0, hm, False)


class TestPushEvict:
    def test_single_item_sampled(self):
        buf = ReplayBuffer(4)
        t = make_transition(1.0)
        buf.push(t)
        idx, batch = buf.sample(1, np.random.default_rng(0))
        assert batch == [t]

    def test_fifo_eviction(self):
        buf = ReplayBuffer(2)
        a, b, c = (make_transition(i) for i in (1.0, 2.0, 3.0))
        buf.push(a)
        buf.push(b)
        buf.push(c)
        assert len(buf) == 2
        remaining = {t.s.depth[0, 0] for t in buf._items}
        assert remaining == {2.0, 3.0}

    def test_new_items_get_max_priority(self):
        buf = ReplayBuffer(8)
        buf.push(make_transition(1.0))
        buf.update_priorities([0], [5.0])
        buf.push(make_transition(2.0))
        assert buf._items[1].priority == 5.0

    def test_priority_floor(self):
        buf = ReplayBuffer(2)
        buf.push(make_transition(1.0))
        buf.update_priorities([0], [0.0])
        assert buf._items[0].priority == buf.p_min

    def test_capacity_never_exceeded(self):
        buf = ReplayBuffer(5)
        for i in range(20):
            buf.push(make_transition(float(i)))
            assert len(buf) <= 5

    def test_bad_capacity(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0)


class TestSampling:
    def test_empty_buffer_raises(self):
        with pytest.raises(ValueError):
            ReplayBuffer(2).sample(1, np.random.default_rng(0))

    def test_no_replacement_within_batch(self):
        buf = ReplayBuffer(8)
        for i in range(8):
            buf.push(make_transition(float(i)))
        idx, _ = buf.sample(8, np.random.default_rng(1))
        assert len(set(idx)) == 8

    def test_proportional_frequencies(self):
        # priorities (3, 1) with omega=1 -> first sampled ~75% of single draws
        buf = ReplayBuffer(2, omega=1.0)
        buf.push(make_transition(0.0))
        buf.push(make_transition(1.0))
        buf.update_priorities([0, 1], [3.0, 1.0])
        rng = np.random.default_rng(2)
        n = 10_000
        hits = sum(buf.sample(1, rng)[0][0] == 0 for _ in range(n))
        assert hits / n == pytest.approx(0.75, abs=0.02)
