import numpy as np
import pytest

import toy
from hyperdest import diffcore as dc
from hyperdest.encode import sample_references
from hyperdest.ingest import MetadataRaw, Trajectory
from hyperdest.model import ModelSpec
from hyperdest.synth import SynthConfig, generate
from hyperdest.train import (
    Adam, NumericalError, TrainConfig, batch_loss, build_model, clip_gradients, global_grad_norm,
    pad_and_mask, split_validation, train,
)


def line_traj(n, t=1372636800):
    pts = np.column_stack([41.15 + 1e-3 * np.arange(n), np.full(n, -8.6)])
    return Trajectory(pts, MetadataRaw(t, 1))


def test_pad_and_mask():
    pts, mask = pad_and_mask([line_traj(4), line_traj(4)])
    assert mask.all() and pts.shape == (2, 4, 2)
    pts, mask = pad_and_mask([line_traj(2), line_traj(5)])
    assert (~mask).sum() == 3
    assert np.array_equal(pts[0, 2:], np.tile(pts[0, 1], (3, 1)))


def test_masked_steps_do_not_change_loss():
    model, *_ = toy.toy_problem("post_lstm", 0)
    rng = np.random.default_rng(0)
    batch = [Trajectory(rng.normal(0, 0.02, (n, 2)), m)
             for n, m in zip((2, 3), toy.toy_metas(rng))]
    base = float(batch_loss(model, batch).data)
    # extend the short trip's padding with arbitrary points via a longer batch mate
    long_mate = Trajectory(rng.normal(0, 0.02, (6, 2)), batch[1].meta)
    l2 = float(batch_loss(model, [batch[0], long_mate]).data)
    solo = float(batch_loss(model, [batch[0]]).data)
    solo_mate = float(batch_loss(model, [long_mate]).data)
    assert l2 == pytest.approx((solo + solo_mate) / 2, abs=1e-12)
    assert base == pytest.approx((solo + float(batch_loss(model, [batch[1]]).data)) / 2, abs=1e-12)


def test_adam_matches_hand_update():
    p = dc.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad[:] = [0.5, -1.0]
    opt.step()
    # first step of bias-corrected Adam moves each entry by lr * sign(g)
    assert np.allclose(p.data, [0.9, -1.9], atol=1e-7)
    p.grad[:] = [0.5, 0.0]
    opt.step()
    m = 0.9 * 0.05 + 0.05, 0.9 * -0.1
    v = 0.999 * 0.00025 + 0.00025, 0.999 * 0.001
    c1, c2 = 1 - 0.9 ** 2, 1 - 0.999 ** 2
    want = [0.9 - 0.1 * (m[0] / c1) / (np.sqrt(v[0] / c2) + 1e-8),
            -1.9 - 0.1 * (m[1] / c1) / (np.sqrt(v[1] / c2) + 1e-8)]
    assert np.allclose(p.data, want, atol=1e-12)


def test_clip_global_norm():
    rng = np.random.default_rng(0)
    ps = [dc.Tensor(rng.normal(size=s), requires_grad=True) for s in [(3, 4), (5,)]]
    for p in ps:
        p.grad[:] = rng.normal(size=p.shape) * 10
    before = global_grad_norm(ps)
    assert clip_gradients(ps, 1.0) == before > 1.0
    assert global_grad_norm(ps) <= 1.0 + 1e-9
    small = [dc.Tensor(np.zeros(2), requires_grad=True)]
    small[0].grad[:] = [0.1, 0.2]
    clip_gradients(small, 1.0)
    assert np.array_equal(small[0].grad, [0.1, 0.2])


def test_split_validation_sizes():
    corpus = [line_traj(2)] * 20_000
    tr, va = split_validation(corpus, seed=0)
    assert len(va) == 10_000 and len(tr) == 10_000
    tr, va = split_validation(list(range(500)), seed=3)
    assert len(va) == 50 and sorted(tr + va) == list(range(500))
    assert split_validation(list(range(500)), seed=3) == (tr, va)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(variant="nope")
    assert TrainConfig().to_dict()["batch_size"] == 128


@pytest.fixture(scope="module")
def small_corpus():
    corpus = generate(SynthConfig(n_trajectories=120, seed=3, concentration=4.0))
    return corpus, sample_references(corpus, n=32, seed=0)


def test_learning_oracle_loss_decreases(small_corpus):
    corpus, refs = small_corpus
    cfg = TrainConfig(epochs=4, batch_size=16, lr=3e-3, seed=0)
    spec = ModelSpec(n_ref=len(refs), embed_dim=8, hidden=16, penultimate=16)
    res = train(corpus, refs, cfg, spec)
    assert res.epoch_losses[-1] < 0.8 * res.epoch_losses[0]
    assert len(res.step_losses) == 4 * 8 and res.optimizer.t == 32


def test_training_deterministic(small_corpus):
    corpus, refs = small_corpus
    cfg = TrainConfig(epochs=1, batch_size=32, seed=5, variant="hyper-lstm")
    spec = ModelSpec(variant="hyper_lstm", n_ref=len(refs), embed_dim=4, hidden=8, penultimate=8)
    a = train(corpus, refs, cfg, spec)
    b = train(corpus, refs, cfg, spec)
    assert a.step_losses == b.step_losses
    for (na, pa), (nb, pb) in zip(a.model.named_parameters().items(),
                                  b.model.named_parameters().items()):
        assert na == nb and np.array_equal(pa.data, pb.data)


def test_loss_log(tmp_path, small_corpus):
    corpus, refs = small_corpus
    spec = ModelSpec(variant="naive", n_ref=len(refs), embed_dim=4, hidden=4, penultimate=4)
    res = train(corpus[:20], refs, TrainConfig(epochs=2, batch_size=10, variant="naive"), spec)
    res.write_loss_log(tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,step,loss_km" and len(lines) == 5
    assert lines[-1].startswith("2,3,")


def test_nan_aborts_with_location(small_corpus):
    corpus, refs = small_corpus
    cfg = TrainConfig(epochs=1, batch_size=40, variant="naive")
    spec = ModelSpec(variant="naive", n_ref=len(refs), embed_dim=4, hidden=4, penultimate=4)
    model = build_model(corpus, refs, cfg, spec)
    model.head2.b.data[0] = np.nan
    with pytest.raises(NumericalError, match="epoch 1, step 0"):
        train(corpus, refs, cfg, model=model)


def test_empty_corpus_rejected(small_corpus):
    _, refs = small_corpus
    with pytest.raises(ValueError):
        train([], refs, TrainConfig())
