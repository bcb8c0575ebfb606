import numpy as np
import pytest

from mvrpstw import autodiff as ad
from mvrpstw.autodiff import (AdamState, CheckpointError, OptimizerStateError, ShapeError, Tensor, adam_step,
                              backward, load_tensors, save_tensors)

from gradcheck import check

SEEDS = range(100)


def _r(rng, *shape):
    return rng.normal(size=shape)


def _weights(rng, shape):
    # random output weights make every gradient component visible
    return ad.Tensor(rng.normal(size=shape))


OPS = {
    "add_broadcast": (lambda rng: [_r(rng, 2, 3, 4), _r(rng, 4)],
                      lambda w: lambda a, b: ad.sum_(ad.mul(ad.add(a, b), w)), (2, 3, 4)),
    "sub": (lambda rng: [_r(rng, 3, 4), _r(rng, 3, 4)], lambda w: lambda a, b: ad.sum_(ad.mul(ad.sub(a, b), w)), (3, 4)),
    "mul": (lambda rng: [_r(rng, 3, 4), _r(rng, 1, 4)], lambda w: lambda a, b: ad.sum_(ad.mul(ad.mul(a, b), w)), (3, 4)),
    "scale": (lambda rng: [_r(rng, 5)], lambda w: lambda a: ad.sum_(ad.mul(ad.scale(a, -2.5), w)), (5,)),
    "tanh": (lambda rng: [_r(rng, 3, 4)], lambda w: lambda a: ad.sum_(ad.mul(ad.tanh(a), w)), (3, 4)),
    # keep inputs away from the kink
    "relu": (lambda rng: [np.sign(_r(rng, 3, 4)) * (0.1 + np.abs(_r(rng, 3, 4)))],
             lambda w: lambda a: ad.sum_(ad.mul(ad.relu(a), w)), (3, 4)),
    "exp": (lambda rng: [_r(rng, 4)], lambda w: lambda a: ad.sum_(ad.mul(ad.exp(a), w)), (4,)),
    "matmul": (lambda rng: [_r(rng, 2, 3, 4), _r(rng, 4, 5)],
               lambda w: lambda a, b: ad.sum_(ad.mul(ad.matmul(a, b), w)), (2, 3, 5)),
    "matmul_batched": (lambda rng: [_r(rng, 2, 3, 4), _r(rng, 2, 4, 2)],
                       lambda w: lambda a, b: ad.sum_(ad.mul(ad.matmul(a, b), w)), (2, 3, 2)),
    "concat": (lambda rng: [_r(rng, 2, 3), _r(rng, 2, 1)],
               lambda w: lambda a, b: ad.sum_(ad.mul(ad.concat([a, b], -1), w)), (2, 4)),
    "mean_axis": (lambda rng: [_r(rng, 3, 4, 2)], lambda w: lambda a: ad.sum_(ad.mul(ad.mean(a, axis=1), w)), (3, 2)),
    "sum_axis": (lambda rng: [_r(rng, 3, 4)], lambda w: lambda a: ad.sum_(ad.mul(ad.sum_(a, axis=0), w)), (4,)),
    "softmax": (lambda rng: [_r(rng, 3, 5)], lambda w: lambda a: ad.sum_(ad.mul(ad.softmax(a), w)), (3, 5)),
    "log_softmax": (lambda rng: [_r(rng, 3, 5)], lambda w: lambda a: ad.sum_(ad.mul(ad.log_softmax(a), w)), (3, 5)),
    "reshape_transpose": (lambda rng: [_r(rng, 2, 6)],
                          lambda w: lambda a: ad.sum_(ad.mul(ad.transpose(ad.reshape(a, (2, 3, 2)), (2, 0, 1)), w)),
                          (2, 2, 3)),
    "getitem_repeated": (lambda rng: [_r(rng, 4, 3)],
                         lambda w: lambda a: ad.sum_(ad.mul(a[np.array([0, 2, 2]), np.array([1, 1, 1])], w)), (3,)),
    "masked_fill": (lambda rng: [_r(rng, 2, 4)],
                    lambda w: lambda a: ad.sum_(ad.mul(ad.masked_fill(a, np.array([True, False, False, True]), 0.0), w)),
                    (2, 4)),
    "masked_log_softmax": (lambda rng: [_r(rng, 2, 5)],
                           lambda w: lambda a: ad.sum_(ad.masked_fill(
                               ad.log_softmax(ad.masked_fill(a, MASK5, -np.inf)), MASK5, 0.0)), None),
}
MASK5 = np.array([[False, True, False, False, True], [True, False, False, False, False]])


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    make, build, wshape = OPS[name]
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.Generator(np.random.PCG64(seed))
        inputs = make(rng)
        w = _weights(rng, wshape) if wshape else None
        worst = max(worst, check(build(w), inputs))
    assert worst <= 1e-6, worst


def test_three_layer_composition():
    worst = 0.0
    for seed in range(20):
        rng = np.random.Generator(np.random.PCG64(seed))
        x = _r(rng, 4, 3)

        def net(w1, w2, w3):
            h = ad.tanh(ad.matmul(Tensor(x), w1))
            h = ad.relu(ad.matmul(h, w2) + 0.05)
            return ad.sum_(ad.log_softmax(ad.matmul(h, w3)))

        worst = max(worst, check(net, [_r(rng, 3, 5), _r(rng, 5, 5), _r(rng, 5, 4)]))
    assert worst <= 1e-6


def test_softmax_examples():
    assert ad.softmax(Tensor([0.0, 0.0])).data.tolist() == [0.5, 0.5]
    out = ad.softmax(ad.masked_fill(Tensor([3.0, 1.0]), np.array([False, True]), -np.inf)).data
    assert out.tolist() == [1.0, 0.0]


def test_softmax_sum_gradient_is_zero():
    z = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    backward(ad.sum_(ad.softmax(z)))
    assert np.abs(z.grad).max() < 1e-15


def test_softmax_normalization():
    for seed in SEEDS:
        rng = np.random.Generator(np.random.PCG64(seed))
        x = _r(rng, 6, 9) * 10
        mask = rng.random((6, 9)) < 0.4
        mask[:, 0] = False
        p = ad.softmax(ad.masked_fill(Tensor(x), mask, -np.inf)).data
        assert np.abs(p.sum(-1) - 1).max() <= 1e-12
        assert (p >= 0).all() and (p[mask] == 0).all()


def test_backward_examples():
    w = Tensor(np.zeros(3), requires_grad=True)
    backward(ad.sum_(w))
    assert w.grad.tolist() == [1, 1, 1]
    v = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    backward(ad.sum_(ad.mul(v, v)))
    assert v.grad.tolist() == [2, 4]


def test_backward_accumulates_and_zero_grad_resets():
    v = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    for _ in range(2):
        backward(ad.sum_(ad.mul(v, v)))
    assert v.grad.tolist() == [4, 8]
    ad.zero_grad([v])
    assert v.grad is None


def test_shared_subexpression():
    x = Tensor(np.array([0.7]), requires_grad=True)
    y = ad.tanh(x)
    backward(ad.sum_(ad.mul(y, y) + y))
    t = np.tanh(0.7)
    assert x.grad[0] == pytest.approx((2 * t + 1) * (1 - t * t), rel=1e-12)


def test_non_scalar_loss():
    with pytest.raises(ValueError):
        backward(Tensor(np.ones(2), requires_grad=True))


def test_no_grad_builds_no_graph():
    w = Tensor(np.ones(2), requires_grad=True)
    with ad.no_grad():
        out = ad.sum_(ad.mul(w, w))
    assert not out.requires_grad


@pytest.mark.parametrize("fn,args", [
    (ad.matmul, (np.ones((2, 3)), np.ones((2, 3)))),
    (ad.add, (np.ones((2, 3)), np.ones((4,)))),
    (ad.concat, ([np.ones((2, 3)), np.ones((3, 3))],)),
])
def test_shape_errors_name_both_shapes(fn, args):
    with pytest.raises(ShapeError) as err:
        fn(*args)
    assert "(2, 3)" in str(err.value)


def test_determinism():
    rng = np.random.Generator(np.random.PCG64(0))
    a, b = _r(rng, 5, 7), _r(rng, 7, 3)
    one = ad.log_softmax(ad.matmul(Tensor(a), Tensor(b))).data
    two = ad.log_softmax(ad.matmul(Tensor(a), Tensor(b))).data
    assert one.tobytes() == two.tobytes()


class TestAdam:
    def test_first_step(self):
        p = Tensor(np.zeros(4), requires_grad=True)
        p.grad = np.ones(4)
        adam_step([p], AdamState.for_params([p], learning_rate=1e-3))
        assert np.allclose(p.data, -1e-3 / (1 + 1e-8), rtol=0, atol=1e-18)

    def test_zero_grad_leaves_params(self):
        p = Tensor(np.arange(3.0), requires_grad=True)
        p.grad = np.zeros(3)
        adam_step([p], AdamState.for_params([p]))
        assert p.data.tolist() == [0, 1, 2]

    def test_defaults(self):
        st = AdamState()
        assert (st.learning_rate, st.beta1, st.beta2, st.epsilon, st.step) == (1e-4, 0.9, 0.999, 1e-8, 0)

    def test_missing_grad(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        with pytest.raises(OptimizerStateError):
            adam_step([p], AdamState.for_params([p]))

    def test_convex_quadratic(self):
        rng = np.random.Generator(np.random.PCG64(0))
        A = rng.normal(size=(6, 6))
        H = A @ A.T + np.eye(6)
        x = Tensor(rng.normal(size=(6, 1)) * 3, requires_grad=True)
        state = AdamState.for_params([x], learning_rate=0.05)

        def loss():
            return ad.sum_(ad.mul(x, ad.matmul(Tensor(H), x)))

        start = float(loss().data)
        for _ in range(200):
            ad.zero_grad([x])
            backward(loss())
            adam_step([x], state)
        assert float(loss().data) <= 0.1 * start


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(0))
        ts = {"a": rng.normal(size=(2, 3)), "b.c": rng.normal(size=(4,)), "s": np.array(1.5)}
        p = tmp_path / "x.ckpt"
        save_tensors(p, ts, {"k": 1})
        meta, out = load_tensors(p, {"a": (2, 3), "b.c": (4,), "s": ()})
        assert meta == {"k": 1}
        for k in ts:
            assert out[k].tobytes() == np.asarray(ts[k], "<f8").tobytes()

    def test_layout(self, tmp_path):
        p = tmp_path / "x.ckpt"
        save_tensors(p, {"w": np.array([[1.0, 2.0]])})
        blob = p.read_bytes()
        assert blob[:8] == b"MVRPCKPT"
        assert blob[-16:] == np.array([1.0, 2.0], "<f8").tobytes()

    @pytest.mark.parametrize("expected", [{"a": (3, 2)}, {"a": (2, 3), "z": (1,)}, {}])
    def test_validation(self, tmp_path, expected):
        p = tmp_path / "x.ckpt"
        save_tensors(p, {"a": np.zeros((2, 3))})
        with pytest.raises(CheckpointError):
            load_tensors(p, expected)

    def test_truncated(self, tmp_path):
        p = tmp_path / "x.ckpt"
        save_tensors(p, {"a": np.zeros((20, 3))})
        p.write_bytes(p.read_bytes()[:-10])
        with pytest.raises(CheckpointError):
            load_tensors(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.ckpt"
        p.write_bytes(b"NOTACKPT" + bytes(20))
        with pytest.raises(CheckpointError):
            load_tensors(p)
