import numpy as np
import pytest

from spire.nn.gradcheck import numeric_grad, rel_error
from spire.nn.layers import Bottleneck, ReorgUnit, SqueezeExcite
from spire.nn.optim import AdamState, ParamStore, ReduceLROnPlateau, adam_step


def _randomise(store, rng):
    store.astype(np.float64)
    for name, p in store.items():
        p[...] = rng.normal(scale=0.5, size=p.shape)
        if name.endswith("gamma"):
            p += 1.0


def _layer_check(layer, store, x, rng, floor=1e-8):
    out = layer.forward(x, True)
    r = rng.normal(size=out.shape)
    store.zero_grad()
    dx = layer.backward(r)
    loss = lambda: float((layer.forward(x, True) * r).sum())
    assert rel_error(dx, numeric_grad(loss, x), floor) < 1e-4
    for name, p in store.items():
        num = numeric_grad(loss, p)
        assert rel_error(store.grads[name], num, floor) < 1e-4, name


@pytest.mark.parametrize("kind", ["se", "bottleneck", "reorg", "reorg_plain"])
def test_composite_layer_gradients(kind):
    rng = np.random.default_rng(11)
    store, buffers = ParamStore(), {}
    if kind == "se":
        layer, c = SqueezeExcite(store, "se", 8, 4), 8
    elif kind == "bottleneck":
        layer, c = Bottleneck(store, buffers, "b", 4, 3, 8), 4
    elif kind == "reorg":
        layer, c = ReorgUnit(store, buffers, "u", 8, extra_dw=True), 8
    else:
        layer, c = ReorgUnit(store, buffers, "u", 8, extra_dw=False, reweight=False), 8
    _randomise(store, rng)
    x = rng.normal(size=(2, c, 5, 5))
    for lay in layer.walk():
        if hasattr(lay, "update_stats"):
            lay.update_stats = False
    # conv biases feeding train-mode BN have exactly zero gradient; the floor absorbs FD noise
    _layer_check(layer, store, x, rng, floor=1e-5)


def test_reorg_identity_half_passes_through():
    store, buffers = ParamStore(), {}
    unit = ReorgUnit(store, buffers, "u", 8, extra_dw=False)
    x = np.random.default_rng(0).normal(size=(1, 8, 4, 4)).astype(np.float32)
    out = unit.forward(x, False)
    # identity half (channels 0..3) lands at even output positions after the shuffle
    np.testing.assert_array_equal(out[:, 0::2], x[:, :4])


def test_param_store_rules():
    store = ParamStore()
    store.add("a", np.zeros((2, 3)))
    assert store.grads["a"].shape == (2, 3)
    with pytest.raises(KeyError):
        store.add("a", np.zeros(1))
    store.add("b", np.zeros(1))
    assert list(store) == ["a", "b"]


def test_adam_zero_gradient_leaves_params():
    store = ParamStore()
    p = store.add("w", np.array([1.5, -2.0]))
    state = AdamState.for_store(store, lr=0.1)
    adam_step(store, state)
    np.testing.assert_array_equal(p, [1.5, -2.0])
    assert state.step == 1


def test_adam_first_step_hand_evaluated():
    # m1 = 0.1, v1 = 0.001; bias-corrected ratio = 1 / (1 + 1e-8) -> update ~ -lr
    store = ParamStore()
    p = store.add("w", np.array([0.0]))
    store.grads["w"][:] = 1.0
    state = AdamState.for_store(store, lr=0.1)
    adam_step(store, state)
    assert p[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)


def test_adam_deterministic_runs():
    def run():
        rng = np.random.default_rng(3)
        store = ParamStore()
        p = store.add("w", rng.normal(size=(4, 4)).astype(np.float32))
        state = AdamState.for_store(store, lr=0.01)
        for _ in range(10):
            store.grads["w"][...] = np.sin(p * 3)
            adam_step(store, state)
        return p.tobytes()

    assert run() == run()


def test_adam_requires_state():
    store = ParamStore()
    store.add("w", np.zeros(2))
    with pytest.raises(RuntimeError):
        adam_step(store, AdamState())


def test_plateau_scheduler_one_event():
    state = AdamState(lr=0.01)
    sched = ReduceLROnPlateau(state, factor=0.01, patience=3)
    assert not sched.step(1.0)
    for _ in range(3):
        assert not sched.step(1.0)
    assert sched.step(1.0)
    assert state.lr == pytest.approx(0.01 * 0.01)
    assert sched.num_reductions == 1


def test_plateau_scheduler_improvement_resets():
    state = AdamState(lr=1.0)
    sched = ReduceLROnPlateau(state, factor=0.5, patience=2)
    for metric in [5, 5, 5, 4, 5, 5]:
        sched.step(metric)
    assert state.lr == 1.0
