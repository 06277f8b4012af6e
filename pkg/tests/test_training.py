import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from glickformer.encoder import EncodedDataset
from glickformer.gradsuite import random_batch
from glickformer.model import ModelConfig, build_model, load_model
from glickformer.nn import NumericError, Parameter
from glickformer.training import (
    RMSprop, TrainConfig, cycle_boundaries, mse_loss, sample_target, train,
)


def toy_dataset(n=16, n_max=3, seed=0):
    rng = np.random.default_rng(seed)
    boards, mask = random_batch(rng, n, n_max)
    return EncodedDataset(boards, mask, rng.normal(size=n), np.abs(rng.normal(size=n)) * 0.2,
                          mask.sum(axis=1) * 2 - 1, [f"p{i}" for i in range(n)])


def snapshot(model):
    return {p.name: p.value.copy() for p in model.parameters()}


class TestCycleBoundaries:
    def test_full_scale_schedule(self):
        assert cycle_boundaries(28000, 1000) == [1000, 3000, 6000, 10000, 15000, 21000, 28000]

    @pytest.mark.parametrize("total, base, expected", [(60, 10, [10, 30, 60]), (1, 1, [1]), (25, 10, [10, 25])])
    def test_small(self, total, base, expected):
        assert cycle_boundaries(total, base) == expected

    @given(st.integers(1, 5000), st.integers(1, 500))
    def test_properties(self, total, base):
        b = cycle_boundaries(total, base)
        assert b[-1] == total
        lengths = np.diff([0, *b])
        assert_array_equal(lengths[:-1], base * np.arange(1, len(b)))
        assert 0 < lengths[-1] <= base * len(b)

    def test_invalid(self):
        with pytest.raises(ValueError):
            cycle_boundaries(0, 10)

    def test_full_scale_config(self):
        tc = TrainConfig.full_scale()
        assert (tc.learning_rate, tc.rho, tc.batch_size, tc.total_steps) == (1e-6, 0.99, 4096, 28000)
        assert cycle_boundaries(tc.total_steps, tc.cycle_base)[-1] == 28000


class TestSampleTarget:
    def test_statistics(self):
        draws = sample_target(np.zeros(100_000), np.ones(100_000), np.random.default_rng(0))
        assert abs(draws.mean()) < 0.02
        assert abs(draws.std() - 1) < 0.02
        assert draws.min() >= -3 and draws.max() <= 3

    def test_clip_is_active(self):
        # roughly 0.27% of normal draws fall outside 3 sigma
        draws = sample_target(np.zeros(200_000), np.ones(200_000), np.random.default_rng(1))
        assert np.count_nonzero(np.abs(draws) == 3.0) > 100

    def test_zero_phi(self):
        mu = np.linspace(-2, 2, 50)
        assert_array_equal(sample_target(mu, np.zeros(50), np.random.default_rng(2)), mu)

    def test_scalar(self):
        assert isinstance(sample_target(0.5, 0.0, np.random.default_rng()), float)

    def test_negative_phi(self):
        with pytest.raises(ValueError):
            sample_target(0.0, -1.0, np.random.default_rng())

    @given(st.floats(-5, 5), st.floats(0, 3), st.integers(0, 2**31))
    def test_within_three_phi(self, mu, phi, seed):
        y = sample_target(np.full(64, mu), np.full(64, phi), np.random.default_rng(seed))
        assert np.all(np.abs(y - mu) <= 3 * phi + 1e-12)


class TestMSE:
    def test_values(self):
        assert mse_loss([1.0, 2.0], [1.0, 2.0])[0] == 0.0
        assert mse_loss([0.0, 0.0], [1.0, -1.0])[0] == 1.0

    def test_gradient(self):
        rng = np.random.default_rng(3)
        p, t = rng.normal(size=7), rng.normal(size=7)
        _, g = mse_loss(p, t)
        h = 1e-6
        fd = np.array([(mse_loss(p + h * e, t)[0] - mse_loss(p - h * e, t)[0]) / (2 * h) for e in np.eye(7)])
        assert_allclose(g, fd, rtol=1e-8)

    @pytest.mark.parametrize("p, t", [([1.0], [1.0, 2.0]), ([], [])])
    def test_errors(self, p, t):
        with pytest.raises(ValueError):
            mse_loss(p, t)


class TestRMSprop:
    def test_zero_gradient(self):
        p = Parameter("w", np.arange(4.0))
        opt = RMSprop([p], 0.1, 0.99)
        opt.step()
        assert_array_equal(p.value, np.arange(4.0))

    def test_first_update(self):
        g = np.array([0.5, -2.0, 3e-3])
        p = Parameter("w", np.zeros(3))
        p.grad[...] = g
        lr, rho = 1e-3, 0.99
        RMSprop([p], lr, rho).step()
        assert_allclose(-p.value, lr * g / (np.sqrt((1 - rho) * g * g) + 1e-8), rtol=1e-14)

    def test_accumulator_recurrence(self):
        rng = np.random.default_rng(4)
        p = Parameter("w", np.zeros(5))
        opt = RMSprop([p], 1e-2, 0.9)
        acc, val = np.zeros(5), np.zeros(5)
        for _ in range(5):
            g = rng.normal(size=5)
            p.grad[...] = g
            opt.step()
            acc = 0.9 * acc + 0.1 * g * g
            val = val - 1e-2 * g / (np.sqrt(acc) + 1e-8)
        assert_allclose(opt.acc["w"], acc, rtol=1e-14)
        assert_allclose(p.value, val, rtol=1e-13)

    def test_non_finite_gradient(self):
        p = Parameter("layer.W", np.zeros(2))
        p.grad[0] = np.nan
        with pytest.raises(NumericError, match="layer.W"):
            RMSprop([p], 1e-3, 0.99).step()


class TestTrain:
    cfg = ModelConfig.tiny(variant="baseline")

    def test_zero_learning_rate(self):
        model = build_model(self.cfg, 0)
        before = snapshot(model)
        train(model, toy_dataset(), TrainConfig(learning_rate=0.0, total_steps=5, batch_size=8))
        for name, v in snapshot(model).items():
            assert_array_equal(v, before[name])

    def test_accumulators_zero_after_boundary(self):
        seen = {}

        def on_step(step, loss, opt):
            seen[step] = max(float(np.abs(a).max()) for a in opt.acc.values())

        train(build_model(self.cfg, 0), toy_dataset(),
              TrainConfig(learning_rate=1e-4, total_steps=7, cycle_base=2, batch_size=4), on_step=on_step)
        assert [s for s, m in seen.items() if m == 0.0] == [2, 6, 7]

    def test_trace_and_cycles(self):
        res = train(build_model(self.cfg, 0), toy_dataset(),
                    TrainConfig(learning_rate=1e-4, total_steps=7, cycle_base=2, batch_size=4))
        assert [t[0] for t in res.trace] == list(range(1, 8))
        assert [t[2] for t in res.trace] == [0, 0, 1, 1, 1, 1, 2]
        assert np.isfinite(res.losses()).all()

    def test_deterministic(self, tmp_path):
        ds = toy_dataset()
        tc = TrainConfig(learning_rate=1e-3, total_steps=6, cycle_base=2, batch_size=8, seed=3)
        for run in ("a", "b"):
            train(build_model(self.cfg, 1), ds, tc, out_dir=tmp_path / run)
        for name in ("checkpoint.glkw", "checkpoint_step000002.glkw", "loss.csv", "manifest.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_outputs(self, tmp_path):
        model = build_model(self.cfg, 0)
        res = train(model, toy_dataset(), TrainConfig(learning_rate=1e-3, total_steps=3, cycle_base=1, batch_size=4),
                    out_dir=tmp_path)
        assert [p.name for p in res.checkpoints] == [
            "checkpoint_step000001.glkw", "checkpoint_step000003.glkw", "checkpoint.glkw"]
        back = load_model(tmp_path / "checkpoint.glkw")
        ds = toy_dataset()
        assert_array_equal(back.predict(ds.boards, ds.mask), model.predict(ds.boards, ds.mask))
        assert (tmp_path / "loss.csv").read_text().splitlines()[0] == "step,loss,cycle"

    def test_zero_phi_targets_are_mu(self, monkeypatch):
        import glickformer.training as tr
        ds = toy_dataset()
        ds.phi[:] = 0.0
        captured = []
        real = tr._forward_backward

        def spy(model, boards, mask, targets):
            captured.append(targets.copy())
            return real(model, boards, mask, targets)

        monkeypatch.setattr(tr, "_forward_backward", spy)
        batch_rng = tr.RngState(0).stream("batch")
        train(build_model(self.cfg, 0), ds, TrainConfig(learning_rate=1e-4, total_steps=4, batch_size=8))
        for t in captured:
            assert_array_equal(t, ds.mu[batch_rng.integers(0, len(ds), size=8)])

    def test_target_seed_changes_only_targets(self):
        ds = toy_dataset()
        runs = [train(build_model(self.cfg, 0), ds,
                      TrainConfig(learning_rate=1e-4, total_steps=3, batch_size=8, target_seed=s)).losses()
                for s in (None, 0, 7)]
        assert_array_equal(runs[0], runs[1])
        assert not np.array_equal(runs[0], runs[2])

    def test_non_finite_loss(self):
        ds = toy_dataset()
        ds.mu[:] = np.inf
        with pytest.raises(NumericError, match="step 1"):
            train(build_model(self.cfg, 0), ds, TrainConfig(total_steps=3, batch_size=4))

    def test_errors(self):
        model = build_model(self.cfg, 0)
        with pytest.raises(ValueError, match="n_max"):
            train(model, toy_dataset(n_max=2), TrainConfig(total_steps=1))
        with pytest.raises(ValueError):
            TrainConfig(rho=1.0)

    def test_loss_decreases(self):
        ds = toy_dataset(n=8)
        ds.phi[:] = 0.0
        res = train(build_model(self.cfg, 0), ds, TrainConfig(learning_rate=1e-3, total_steps=150,
                                                              cycle_base=150, batch_size=8))
        assert res.losses()[-20:].mean() < 0.25 * res.losses()[:5].mean()


@pytest.mark.slow
def test_target_seed_runs_both_converge():
    from glickformer.encoder import encode_records
    from glickformer.puzzle_data import load_puzzles
    from conftest import CORPUS

    cfg = ModelConfig.tiny(variant="fe")
    ds, _ = encode_records(load_puzzles(CORPUS).records[:64], cfg.n_max)
    traces, maes = [], []
    for target_seed in (0, 1):
        model = build_model(cfg, 0)
        res = train(model, ds, TrainConfig(learning_rate=1e-3, batch_size=64, total_steps=2000,
                                           cycle_base=2000, target_seed=target_seed))
        traces.append(res.losses())
        maes.append(float(np.mean(np.abs(model.predict(ds.boards, ds.mask) - ds.mu))))
    assert not np.array_equal(traces[0], traces[1])
    assert max(maes) < 0.1, maes
