import csv
import dataclasses

import numpy as np
import pytest

from gancs import checks, kspace, training
from gancs.data import Dataset, Normalization, PhantomSpec, gen_dataset
from gancs.networks import (
    Context,
    DiscriminatorConfig,
    GeneratorConfig,
    GeneratorOutput,
    build_discriminator,
    build_generator,
    checkpoint_to_bytes,
    generator_forward,
)
from gancs.training import (
    CSV_HEADER,
    Batch,
    NumericalError,
    TrainConfig,
    adam_step,
    d_loss,
    g_loss,
    g_loss_terms,
    learning_rate_at,
    preset,
    resolve_generator_config,
    train,
)

TINY_G = GeneratorConfig(1, 4, 1)
TINY_D = DiscriminatorConfig(3, 2, 1)


@pytest.fixture(scope="module")
def phantoms():
    ds = gen_dataset(PhantomSpec(16, (3, 6), (0.0, 1.0), 0.3, 0), 24)
    return ds, kspace.make_vardens_mask(16, 16, 0.3, 3.0, 0)


def _batch(ds, mask, n=4, dtype=np.float64):
    x = ds.images[:n]
    return Batch.make(x, kspace.forward(x, mask), mask, ds.normalization, dtype)


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.batch_size, c.learning_rate, c.lr_halve_every, c.adam_beta1, c.epochs) == (8, 1e-5, 5000, 0.9, 20)
        assert (c.adam_beta2, c.adam_eps) == (0.999, 1e-8)

    @pytest.mark.parametrize("kw", [dict(lam=-1), dict(eta=-0.1), dict(batch_size=1), dict(loss_mode="l3"),
                                    dict(dc_mode="medium"), dict(learning_rate=0), dict(iterations=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_presets(self):
        assert (preset("paper-setup").lam, preset("paper-setup").eta) == (0.1, 1.0)
        assert (preset("paper-results").lam, preset("paper-results").eta) == (10.0, 10.0)
        assert preset("paper-results", eta=2.0).eta == 2.0
        with pytest.raises(ValueError):
            preset("nope")

    @pytest.mark.parametrize("mode,weights", [("gancs", (1, 2, 3)), ("l1", (0, 2, 0)), ("l2", (0, 2, 0)),
                                              ("gan_only", (1, 0, 3))])
    def test_weights(self, mode, weights):
        assert TrainConfig(lam=3, eta=2, loss_mode=mode).weights() == weights

    def test_dc_mode_resolution(self):
        g = GeneratorConfig(4, 8, 1)
        assert resolve_generator_config(g, "soft").num_dc_blocks == 0
        assert resolve_generator_config(g, "hard").num_dc_blocks == 1
        assert resolve_generator_config(g, "interleaved").num_dc_blocks == 2
        assert resolve_generator_config(dataclasses.replace(g, num_dc_blocks=4), "interleaved").num_dc_blocks == 4


class TestAdam:
    def _ps(self):
        ps = build_generator(TINY_G, 0, np.float64)
        return ps

    def test_zero_gradient(self):
        ps = self._ps()
        before = {k: v.copy() for k, v in ps.values.items()}
        ps.zero_grad()
        adam_step(ps, 1e-3)
        for k in before:
            np.testing.assert_array_equal(ps.values[k], before[k])

    def test_first_step_magnitude(self):
        ps = self._ps()
        before = {k: v.copy() for k, v in ps.values.items()}
        for g in ps.grads.values():
            g.fill(0.37)
        adam_step(ps, 1e-3)
        for k in before:
            np.testing.assert_allclose(before[k] - ps.values[k], 1e-3, rtol=1e-6)

    def test_explicit_t(self):
        ps = self._ps()
        for g in ps.grads.values():
            g.fill(-2.0)
        adam_step(ps, 1e-2, t=1)
        assert ps.step == 0

    def test_schedule(self):
        cfg = TrainConfig(learning_rate=1e-5, lr_halve_every=5000)
        assert learning_rate_at(cfg, 0) == 1e-5
        assert learning_rate_at(cfg, 4999) == 1e-5
        assert learning_rate_at(cfg, 5000) == 5e-6
        assert learning_rate_at(cfg, 10_000) == 1e-5 / 4


class TestDiscriminatorLoss:
    def test_constant_half(self, phantoms):
        ds, mask = phantoms
        dp = build_discriminator(TINY_D, 0, np.float64)
        dp.set_all(0.0)
        dp.values["d.conv3.bias"][...] = 0.5
        b = _batch(ds, mask)
        total, real, fake = d_loss(dp, TINY_D, b.target, b.target)
        assert (real, fake, total) == (0.25, 0.25, 0.5)

    def test_perfect_discriminator(self, phantoms, monkeypatch):
        ds, mask = phantoms
        b = _batch(ds, mask)
        real_ids = id(b.target)

        class Res:
            def __init__(self, s):
                self.scores = s

        monkeypatch.setattr(training, "discriminator_forward",
                            lambda p, x, *a, **k: Res(np.ones(len(x)) if id(x) == real_ids else np.zeros(len(x))))
        monkeypatch.setattr(training, "discriminator_backward", lambda *a, **k: None)
        fake = b.target.copy()
        assert d_loss(None, TINY_D, b.target, fake) == (0.0, 0.0, 0.0)

    def test_empty_batch(self):
        dp = build_discriminator(TINY_D, 0)
        with pytest.raises(ValueError):
            d_loss(dp, TINY_D, np.zeros((0, 2, 8, 8)), np.zeros((2, 2, 8, 8)))

    def test_gradcheck(self):
        r = {c.name: c for c in checks.network_checks()}["discriminator loss"]
        assert r.passed, r.line()


class TestGeneratorLoss:
    def test_perfect_output_is_zero(self, phantoms):
        ds, mask = phantoms
        b = _batch(ds, mask)
        out = GeneratorOutput(b.target, b.x, [], Context(norm=ds.normalization))
        t = g_loss_terms(out, b, mask, TrainConfig(lam=0.0, eta=1.0), None, None)
        assert t.dc < 1e-28 and t.pixel == 0.0 and t.total < 1e-28

    def test_hard_projection_kills_dc(self, phantoms):
        ds, mask = phantoms
        gp = build_generator(TINY_G, 0, np.float64)
        b = _batch(ds, mask)
        t = g_loss(gp, None, b, mask, TINY_G, None, TrainConfig(lam=0.0, eta=0.0), ds.normalization)
        assert t.dc <= 1e-10 and t.total <= 1e-10

    def test_gan_weight_needs_discriminator(self, phantoms):
        ds, mask = phantoms
        gp = build_generator(TINY_G, 0, np.float64)
        with pytest.raises(ValueError):
            g_loss(gp, None, _batch(ds, mask), mask, TINY_G, None, TrainConfig(lam=1.0), ds.normalization)

    def test_gradcheck(self):
        r = {c.name: c for c in checks.network_checks()}["generator loss"]
        assert r.passed, r.line()

    def test_discriminator_grads_untouched(self, phantoms):
        ds, mask = phantoms
        gp = build_generator(TINY_G, 0, np.float64)
        dp = build_discriminator(TINY_D, 1, np.float64)
        for g in dp.grads.values():
            g[...] = np.random.default_rng(0).normal(size=g.shape)
        saved = {k: g.copy() for k, g in dp.grads.items()}
        g_loss(gp, dp, _batch(ds, mask), mask, TINY_G, TINY_D, TrainConfig(lam=2.0), ds.normalization)
        for k in saved:
            np.testing.assert_array_equal(dp.grads[k], saved[k])

    def test_d_loss_leaves_generator_alone(self, phantoms):
        ds, mask = phantoms
        gp = build_generator(TINY_G, 0, np.float64)
        dp = build_discriminator(TINY_D, 1, np.float64)
        b = _batch(ds, mask)
        out = generator_forward(gp, b.x_tilde, b.y, mask, TINY_G, ds.normalization)
        gp.zero_grad()
        d_loss(dp, TINY_D, b.target, out.image)
        assert all(not g.any() for g in gp.grads.values())

    def test_zero_discriminator_reduces_to_l1(self, phantoms):
        ds, mask = phantoms
        b = _batch(ds, mask)
        dp = build_discriminator(TINY_D, 1, np.float64)
        dp.set_all(0.0)
        grads = {}
        totals = {}
        for mode in ("gancs", "l1"):
            gp = build_generator(TINY_G, 0, np.float64)
            t = g_loss(gp, dp, b, mask, TINY_G, TINY_D, TrainConfig(lam=0.7, eta=1.3, loss_mode=mode), ds.normalization)
            grads[mode] = np.concatenate([g.ravel() for g in gp.grads.values()])
            totals[mode] = t
        # D == 0 contributes the constant lam * (1 - 0)^2 and no gradient;
        # the hard projection zeroes the data-consistency gradient
        np.testing.assert_allclose(grads["gancs"], grads["l1"], atol=1e-12)
        assert totals["gancs"].gan == 1.0
        assert totals["gancs"].total == pytest.approx(totals["l1"].total + 0.7 + totals["gancs"].dc, rel=1e-12)

    def test_l2_mode_pixel_term(self, phantoms):
        ds, mask = phantoms
        b = _batch(ds, mask)
        img = b.target + 0.1
        out = GeneratorOutput(img, ds.normalization.from_channels(img), [], Context(norm=ds.normalization))
        t2 = g_loss_terms(out, b, mask, TrainConfig(loss_mode="l2", eta=1.0), None, None)
        t1 = g_loss_terms(out, b, mask, TrainConfig(loss_mode="l1", eta=1.0, lam=0.0), None, None)
        assert t2.pixel == pytest.approx(0.01) and t1.pixel == pytest.approx(0.1)

    def test_empty_batch(self, phantoms):
        ds, mask = phantoms
        b = _batch(ds, mask)
        empty = Batch(b.x[:0], b.y[:0], b.x_tilde[:0], b.target[:0])
        out = GeneratorOutput(b.target[:0], b.x[:0], [], Context(norm=ds.normalization))
        with pytest.raises(ValueError):
            g_loss_terms(out, empty, mask, TrainConfig(), None, None)


def _small_run(ds, mask, tmp=None, **kw):
    cfg = TrainConfig(**{**dict(batch_size=4, learning_rate=1e-3, iterations=6, seed=3), **kw})
    return train(ds, mask, TINY_G, TINY_D, cfg, tmp)


class TestTrainLoop:
    def test_stage_order(self, phantoms):
        ds, mask = phantoms
        calls = []
        cfg = TrainConfig(batch_size=4, iterations=3)
        train(ds, mask, TINY_G, TINY_D, cfg, hooks=lambda stage, it: calls.append((stage, it)))
        assert calls == [(s, i) for i in range(3) for s in ("S1", "S2", "S3")]

    def test_no_discriminator_step_without_gan(self, phantoms):
        ds, mask = phantoms
        calls = []
        train(ds, mask, TINY_G, TINY_D, TrainConfig(batch_size=4, iterations=2, loss_mode="l2"),
              hooks=lambda s, i: calls.append(s))
        assert calls == ["S1", "S3", "S1", "S3"]

    def test_outputs_and_csv(self, phantoms, tmp_path):
        ds, mask = phantoms
        res = _small_run(ds, mask, tmp_path, checkpoint_every=2)
        assert res.checkpoint_path == tmp_path / "checkpoint.gcsc" and res.checkpoint_path.is_file()
        rows = list(csv.reader(open(tmp_path / "losses.csv")))
        assert rows[0] == CSV_HEADER == ["iter", "d_real", "d_fake", "g_gan", "g_l1", "g_dc", "g_total", "d_total", "lr"]
        assert len(rows) == 7 and [int(r[0]) for r in rows[1:]] == list(range(6))
        assert sorted(p.name for p in tmp_path.iterdir()) == ["checkpoint.gcsc", "losses.csv"]

    def test_records_consistent(self, phantoms):
        ds, mask = phantoms
        cfg = TrainConfig(batch_size=4, learning_rate=1e-3, iterations=5, lam=0.3, eta=2.0)
        res = train(ds, mask, TINY_G, TINY_D, cfg)
        for r in res.records:
            vals = r.row()[1:]
            assert np.all(np.isfinite(vals))
            assert r.total_g == pytest.approx(r.g_datacons_loss + 2.0 * r.g_l1_loss + 0.3 * r.g_gan_loss, abs=1e-6)
            assert r.total_d == pytest.approx(r.d_loss_real + r.d_loss_fake, abs=1e-6)

    def test_warmup_disables_gan_weight(self, phantoms):
        ds, mask = phantoms
        res = train(ds, mask, TINY_G, TINY_D, TrainConfig(batch_size=4, iterations=4, warmup_iterations=2, lam=5.0))
        for r in res.records[:2]:
            assert r.total_g == pytest.approx(r.g_datacons_loss + r.g_l1_loss, abs=1e-9)
        r = res.records[3]
        assert r.total_g == pytest.approx(r.g_datacons_loss + r.g_l1_loss + 5.0 * r.g_gan_loss, abs=1e-6)

    def test_iterations_from_epochs(self, phantoms):
        ds, mask = phantoms
        res = train(ds, mask, TINY_G, TINY_D, TrainConfig(batch_size=8, epochs=2))
        assert len(res.records) == 2 * (len(ds) // 8)

    def test_deterministic(self, phantoms, tmp_path):
        ds, mask = phantoms
        a = _small_run(ds, mask, tmp_path / "a")
        b = _small_run(ds, mask, tmp_path / "b")
        assert checkpoint_to_bytes(a.checkpoint) == checkpoint_to_bytes(b.checkpoint)
        assert (tmp_path / "a" / "losses.csv").read_bytes() == (tmp_path / "b" / "losses.csv").read_bytes()
        c = _small_run(ds, mask, seed=4)
        assert checkpoint_to_bytes(c.checkpoint) != checkpoint_to_bytes(a.checkpoint)

    def test_hard_mode_fakes_are_consistent(self, phantoms, monkeypatch):
        ds, mask = phantoms
        seen = []
        real_d_loss = training.d_loss

        def spy(dp, dc, real, fake, update_stats=True):
            seen.append(fake.copy())
            return real_d_loss(dp, dc, real, fake, update_stats)

        monkeypatch.setattr(training, "d_loss", spy)
        _small_run(ds, mask, iterations=4)
        assert len(seen) == 4
        for fake in seen:
            raw = ds.normalization.from_channels(fake.astype(np.float64))
            y = kspace.forward(raw, mask)
            # measurements of the images behind this batch: find them by matching consistency
            for img in raw:
                ok = [np.linalg.norm(kspace.forward(img, mask) - yy) / np.linalg.norm(yy)
                      for yy in kspace.forward(ds.images, mask)]
                assert min(ok) < 1e-6

    def test_dataset_too_small(self, phantoms):
        ds, mask = phantoms
        with pytest.raises(ValueError):
            train(ds.subset([0, 1]), mask, TINY_G, TINY_D, TrainConfig(batch_size=4))

    def test_shape_mismatch(self, phantoms):
        ds, mask = phantoms
        with pytest.raises(ValueError):
            train(ds, kspace.make_vardens_mask(8, 8, 0.5, 3.0, 0), TINY_G, TINY_D, TrainConfig(batch_size=4))

    def test_nan_aborts_with_tensor_name(self, phantoms):
        ds, mask = phantoms
        bad = ds.images.copy()
        bad[:, 3, 3] = np.nan
        poisoned = Dataset(bad, ds.ids, ds.normalization)
        with pytest.raises(NumericalError, match=r"iteration 0: non-finite .* in d\.grad\[d\.conv1"):
            train(poisoned, mask, TINY_G, TINY_D, TrainConfig(batch_size=4, iterations=2))
        with pytest.raises(NumericalError, match=r"g\.output"):
            train(poisoned, mask, TINY_G, TINY_D, TrainConfig(batch_size=4, iterations=2, loss_mode="l1"))


def test_l2_loss_halves():
    ds = gen_dataset(PhantomSpec(32, (5, 10), (0.0, 1.0), 0.0, 0), 200)
    mask = kspace.make_vardens_mask(32, 32, 0.2, 3.0, 0)
    cfg = TrainConfig(loss_mode="l2", eta=1.0, learning_rate=1e-3, iterations=300, seed=0)
    res = train(ds, mask, GeneratorConfig(1, 8, 1), DiscriminatorConfig(3, 4, 1), cfg)
    pix = [r.g_l1_loss for r in res.records]
    assert np.median(pix[-50:]) < 0.5 * np.median(pix[:50])


@pytest.mark.slow
def test_thousand_iterations_finite():
    ds = gen_dataset(PhantomSpec(32, (5, 10), (0.0, 1.0), 0.3, 1), 64)
    mask = kspace.make_vardens_mask(32, 32, 0.2, 3.0, 1)
    res = train(ds, mask, GeneratorConfig(1, 8, 1), DiscriminatorConfig(), TrainConfig(iterations=1000, seed=1))
    assert len(res.records) == 1000
    assert np.all(np.isfinite([r.row()[1:] for r in res.records]))
