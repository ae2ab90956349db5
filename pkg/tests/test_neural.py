import numpy as np
import pytest

from ogmfusion.evidence import evidence_to_mass_arrays
from ogmfusion.io import BadMagic
from ogmfusion.neural.gradcheck import grad_check, loss_and_param_grads, loss_grad_check
from ogmfusion.neural.loss import LossConfig, evidential_loss, loss_and_grad
from ogmfusion.neural.network import NetParams, ShapeMismatch, forward
from ogmfusion.neural.optim import Adam, PlateauScheduler
from ogmfusion.neural.train import (
    EmptyDataset,
    TrainConfig,
    load_checkpoint,
    overfit,
    save_checkpoint,
    train,
    write_log,
)
from ogmfusion.simworld import CONFIGS

TINY = (3, 4, 5)


def tiny_params(seed=0, widths=TINY):
    return NetParams.init(np.random.default_rng(seed), widths)


def random_input(rng, n=8, batch=None):
    shape = (4, n, n) if batch is None else (batch, 4, n, n)
    return rng.random(shape) * 0.5


def random_label(rng, n=8, batch=None):
    shape = (n, n) if batch is None else (batch, n, n)
    f = rng.random(shape)
    o = rng.random(shape) * (1 - f)
    return np.stack([f, o], axis=-3)


def test_output_shape():
    params = NetParams.init(np.random.default_rng(0))
    out = forward(params, np.zeros((4, 64, 64)))
    assert out.shape == (2, 64, 64)
    assert forward(params, np.zeros((4, 48, 72))).shape == (2, 48, 72)


@pytest.mark.parametrize("shape", [(4, 60, 64), (3, 64, 64), (4, 64)])
def test_bad_shapes_rejected(shape):
    with pytest.raises(ShapeMismatch):
        forward(tiny_params(), np.zeros(shape))


def test_outputs_nonnegative():
    rng = np.random.default_rng(1)
    for k in range(1000):
        params = tiny_params(k)
        for b in params.biases.values():
            b[...] = rng.normal(size=b.shape)
        out = forward(params, rng.normal(size=(4, 8, 8)))
        assert out.min() >= 0


def test_zero_head_gives_vacuous_masses():
    params = NetParams.init(np.random.default_rng(2))
    params.weights["head"][...] = 0
    params.biases["head"][...] = 0
    out = forward(params, np.random.default_rng(3).random((4, 32, 32)))
    assert not out.any()
    mf, mo, u = evidence_to_mass_arrays(out[0], out[1])
    assert not mf.any() and not mo.any() and np.all(u == 1)


def test_translation_equivariance_compact_support():
    # zero biases keep an all-zero region at zero, so padding is consistent
    params = NetParams.init(np.random.default_rng(4))
    # receptive field radius is under 50 cells, so the output support stays inside
    x = np.zeros((4, 160, 160))
    x[:, 64:96, 64:96] = np.random.default_rng(5).random((4, 32, 32))
    shifted = np.roll(x, (8, 8), axis=(1, 2))
    a, b = forward(params, x), forward(params, shifted)
    assert np.abs(np.roll(a, (8, 8), axis=(1, 2)) - b).max() <= 1e-5


def test_translation_equivariance_interior():
    params = NetParams.init(np.random.default_rng(6))
    for b in params.biases.values():
        b[...] = np.random.default_rng(7).normal(scale=0.1, size=b.shape)
    x = np.random.default_rng(8).random((4, 192, 192))
    shifted = np.roll(x, (8, -8), axis=(1, 2))
    a, b = forward(params, x), forward(params, shifted)
    interior = (slice(None), slice(64, 128), slice(64, 128))
    assert np.abs(np.roll(a, (8, -8), axis=(1, 2))[interior] - b[interior]).max() <= 1e-5


def test_loss_vacuous_prediction_on_free_cell():
    loss, _ = loss_and_grad(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), LossConfig())
    assert abs(loss - 2 / 3) <= 1e-9


def test_loss_weighting_on_occupied_cell():
    loss, _ = loss_and_grad(np.array([[0.0, 0.0]]), np.array([[0.0, 1.0]]), LossConfig(3.0))
    assert abs(loss - 2.0) <= 1e-9


def test_loss_vanishes_with_infinite_correct_evidence():
    vals = [loss_and_grad(np.array([[e, 0.0]]), np.array([[1.0, 0.0]]))[0] for e in (1e2, 1e4, 1e6)]
    assert vals[0] > vals[1] > vals[2] >= 0
    assert vals[2] < 1e-5


def test_loss_nonnegative_and_shape_checked(rng):
    for _ in range(100):
        e = rng.exponential(size=(5, 2)) * 10
        y = np.moveaxis(random_label(rng, 5)[:, :, 0], 0, -1)
        assert loss_and_grad(e, y)[0] >= 0
    with pytest.raises(ShapeMismatch):
        evidential_loss(np.zeros((2, 4, 4)), np.zeros((2, 4, 5)))
    with pytest.raises(ValueError):
        LossConfig(0.5)


def test_loss_optimum_is_pignistic():
    # with huge strength the best split matches the label's pignistic probability
    y = np.array([[0.5, 0.3]])
    ps = np.linspace(0.01, 0.99, 981)
    losses = [loss_and_grad(1e9 * np.array([[1 - p, p]]), y, need_grad=False)[0] for p in ps]
    assert ps[int(np.argmin(losses))] == pytest.approx(0.4, abs=1e-3)


def test_weighting_monotone(rng):
    e = rng.exponential(size=(16, 2))
    y = np.moveaxis(random_label(rng, 4).reshape(2, 16), 0, -1)
    y[3] = (0.0, 0.9)
    losses = [loss_and_grad(e, y, LossConfig(w), need_grad=False)[0] for w in (1, 1.5, 3, 10)]
    assert losses == sorted(losses) and losses[0] < losses[-1]


def test_loss_gradient_matches_finite_differences(rng):
    e = rng.exponential(size=(6, 2)) * 3
    y = np.moveaxis(random_label(rng, 6)[:, :, 0], 0, -1)
    y[0] = (0.0, 1.0)
    assert loss_grad_check(e, y) < 1e-6


def test_network_gradient_check():
    rng = np.random.default_rng(9)
    params = tiny_params(10)
    for b in params.biases.values():
        b[...] = rng.uniform(0.05, 0.2, size=b.shape)
    err, info = grad_check(params, random_input(rng, batch=2), random_label(rng, batch=2),
                           n_samples=200, return_details=True)
    assert info["checked"] >= 200
    assert err < 1e-4


def test_zero_params_zero_input_zero_gradients():
    params = NetParams.zeros(TINY)
    _, grads, _ = loss_and_param_grads(params, np.zeros((4, 8, 8)), random_label(np.random.default_rng(0)))
    assert len(grads) == len(params.arrays())
    # every path is dead except the head bias
    assert all(not g.any() for g in grads[:-1])


def test_adam_zero_gradient_leaves_params():
    params = tiny_params()
    before = [a.copy() for a in params.arrays()]
    opt = Adam(params.arrays(), lr=0.01)
    for _ in range(3):
        opt.step([np.zeros_like(a) for a in before])
    assert all(np.array_equal(a, b) for a, b in zip(params.arrays(), before))


def test_plateau_two_decays_in_21_flat_epochs():
    opt = Adam([np.zeros(1)], lr=0.01)
    sched = PlateauScheduler(opt, 0.5, 10)
    decays = [sched.step(1.0) for _ in range(21)]
    assert sum(decays) == 2
    assert opt.lr == 0.0025


def test_zero_learning_rate_changes_nothing(rng):
    params = tiny_params(3)
    xs, ys = random_input(rng, batch=3), random_label(rng, batch=3)
    out, losses = overfit(params, xs, ys, iterations=5, lr=0.0)
    assert all(np.array_equal(a, b) for a, b in zip(out.arrays(), params.arrays()))
    assert len(set(losses)) == 1


def test_overfit_small_batch_decreases(rng):
    params = NetParams.init(np.random.default_rng(11), (4, 8, 8))
    xs, ys = random_input(rng, 16, batch=2), random_label(rng, 16, batch=2)
    _, losses = overfit(params, xs, ys, iterations=60, lr=1e-3)
    # random labels keep a high floor; only ask for a clear decrease
    assert losses[-1] < 0.8 * losses[0]


def test_checkpoint_roundtrip(tmp_path):
    params = NetParams.init(np.random.default_rng(12), dtype=np.float32)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, path)
    back = load_checkpoint(path)
    assert back.widths == params.widths
    assert all(np.array_equal(a, b) for a, b in zip(back.arrays(), params.arrays()))
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(BadMagic):
        load_checkpoint(path)


def test_train_smoke(small_pairs, tmp_path):
    cfg = TrainConfig(max_epochs=2, batch_size=2, steps_per_epoch=2, crop_size=32, widths=(4, 8, 8), seed=3)
    params, rows = train(small_pairs[:8], small_pairs[8:], cfg, noise=CONFIGS["B"])
    assert [r["epoch"] for r in rows] == [1, 2]
    assert all(np.isfinite(r["train_loss"]) and np.isfinite(r["val_loss"]) for r in rows)
    again, rows2 = train(small_pairs[:8], small_pairs[8:], cfg, noise=CONFIGS["B"])
    assert rows == rows2
    assert all(np.array_equal(a, b) for a, b in zip(params.arrays(), again.arrays()))
    write_log(rows, tmp_path / "log.csv")
    assert (tmp_path / "log.csv").read_text().splitlines()[0] == "epoch,train_loss,val_loss,lr"


def test_train_requires_data(small_pairs):
    with pytest.raises(EmptyDataset):
        train([], small_pairs)
    with pytest.raises(EmptyDataset):
        train(small_pairs, [])
