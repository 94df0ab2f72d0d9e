import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wbary import autodiff as ad
from wbary.gradcheck import finite_difference, relative_error


def test_matvec_identity_column_selection():
    g = ad.Graph()
    a = g.leaf([[1.0, 2.0], [3.0, 4.0]])
    x = g.leaf([1.0, 0.0])
    assert np.array_equal(ad.matvec(a, x).value, [1.0, 3.0])


def test_squared_norm():
    g = ad.Graph()
    v = g.leaf([3.0, 4.0])
    assert float(ad.squared_norm(v).value) == 25.0


def test_celu_values():
    k = ad.Celu(1.0)
    g = ad.Graph()
    x = g.leaf([2.0, 0.0, -1.0])
    out = ad.act(x, k).value
    assert out[0] == 2.0 and out[1] == 0.0
    assert out[2] == pytest.approx(np.expm1(-1.0))


def test_celu_kink_convention():
    # right derivative 1 and second derivative 0 at exactly 0
    k = ad.Celu(1.0)
    assert k.prime(np.array(0.0)) == 1.0
    assert k.second(np.array(0.0)) == 0.0


def test_matmul_shape_error_names_both_shapes():
    g = ad.Graph()
    a = g.leaf(np.ones((2, 3)))
    b = g.leaf(np.ones((2, 3)))
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(a, b)


def test_non_finite_forward_is_hard_error():
    g = ad.Graph()
    with pytest.raises(ad.NonFiniteError):
        g.leaf([1.0, np.nan])
    big = g.leaf(np.full((2, 2), 1e300))
    with np.errstate(over="ignore"), pytest.raises(ad.NonFiniteError):
        ad.matmul(big, big)


def test_backward_linear():
    g = ad.Graph()
    w = g.leaf([1.0, 2.0])
    x = g.leaf([3.0, 4.0], param=True)
    ad.backward(g, ad.inner_all(w, x))
    assert np.array_equal(x.grad, [1.0, 2.0])


def test_backward_constant_root_gives_zero_grads():
    g = ad.Graph()
    x = g.leaf([3.0, 4.0], param=True)
    root = g.constant(7.0)
    ad.backward(g, root)
    assert np.array_equal(x.grad, [0.0, 0.0])


def test_backward_requires_scalar_root():
    g = ad.Graph()
    x = g.leaf([1.0, 2.0], param=True)
    with pytest.raises(ad.GraphError, match="scalar"):
        ad.backward(g, ad.scale(x, 2.0))


def test_backward_accumulates_across_calls():
    g = ad.Graph()
    x = g.leaf([1.0, 2.0], param=True)
    root = ad.squared_norm(x)
    ad.backward(g, root)
    once = x.grad.copy()
    ad.backward(g, root)
    assert np.array_equal(x.grad, 2 * once)


def test_backward_norm_matches_finite_differences():
    rng = np.random.default_rng(0)
    w0 = rng.standard_normal((3, 3))
    x0 = rng.standard_normal(3)

    def fn(arrs):
        g = ad.Graph()
        w, x = g.leaf(arrs[0]), g.leaf(arrs[1])
        return float(ad.squared_norm(ad.matvec(w, x)).value)

    g = ad.Graph()
    w, x = g.leaf(w0, param=True), g.leaf(x0, param=True)
    ad.backward(g, ad.squared_norm(ad.matvec(w, x)))
    numeric = finite_difference(fn, [w0.copy(), x0.copy()])
    assert relative_error([w.grad, x.grad], numeric) < 1e-6


def test_input_grad_linear_case():
    # g(y) = a.y: input grad is a, and d(c . grad)/da = c
    a0 = np.array([1.5, -2.0])
    c0 = np.array([0.3, 0.7])
    g = ad.Graph()
    a = g.leaf(a0, param=True)
    y = g.leaf([0.4, 0.9])
    t = ad.input_grad_node(g, ad.inner_all(a, y), y)
    assert np.allclose(t.value, a0)
    ad.backward(g, ad.inner_all(g.leaf(c0), t))
    assert np.allclose(a.grad, c0)


def test_input_grad_half_square():
    g = ad.Graph()
    y = g.leaf([1.0, -2.0, 0.5])
    out = ad.scale(ad.squared_norm(y), 0.5)
    assert np.allclose(ad.input_grad_node(g, out, y).value, y.value)


def test_input_grad_rejects_nonscalar():
    g = ad.Graph()
    y = g.leaf([1.0, 2.0])
    with pytest.raises(ad.GraphError, match="scalar"):
        ad.input_grad_node(g, ad.scale(y, 2.0), y)


def test_gradients_unreachable_targets_are_zero():
    g = ad.Graph()
    x = g.leaf([1.0], param=True)
    y = g.leaf([2.0], param=True)
    (gx, gy) = ad.grad(ad.sum_all(x), [x, y])
    assert gx.value[0] == 1.0 and gy.value[0] == 0.0


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(42)
        g = ad.Graph()
        w = g.leaf(rng.standard_normal((4, 4)), param=True)
        x = g.leaf(rng.standard_normal((4, 4)))
        z = ad.act(ad.matmul(x, w), ad.Celu(1.0))
        ad.backward(g, ad.squared_norm(z))
        return w.grad.tobytes()

    assert run() == run()


def test_third_derivative_unsupported():
    g = ad.Graph()
    x = g.leaf([0.5, -0.5], param=True)
    p = ad.act_second(x, ad.Celu(1.0))
    with pytest.raises(ad.GraphError, match="third derivative"):
        ad.grad(ad.sum_all(p), [x])


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_sum_spread_adjoint_pair(seed):
    rng = np.random.default_rng(seed)
    m, k = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    a0 = rng.standard_normal((m, k))
    g = ad.Graph()
    a = g.leaf(a0, param=True)
    ad.backward(g, ad.scale(ad.sum_all(a), 3.0))
    assert np.allclose(a.grad, np.full((m, k), 3.0))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_matmul_gradient_matches_differences(seed):
    rng = np.random.default_rng(seed)
    m, k, n = (int(rng.integers(1, 5)) for _ in range(3))
    a0, b0 = rng.standard_normal((m, k)), rng.standard_normal((k, n))

    def fn(arrs):
        g = ad.Graph()
        return float(ad.squared_norm(ad.matmul(g.leaf(arrs[0]), g.leaf(arrs[1]))).value)

    g = ad.Graph()
    a, b = g.leaf(a0, param=True), g.leaf(b0, param=True)
    ad.backward(g, ad.squared_norm(ad.matmul(a, b)))
    numeric = finite_difference(fn, [a0.copy(), b0.copy()])
    assert relative_error([a.grad, b.grad], numeric) < 1e-5


def test_mixed_graph_nodes_rejected():
    g1, g2 = ad.Graph(), ad.Graph()
    a = g1.leaf([1.0])
    b = g2.leaf([2.0])
    with pytest.raises(ad.GraphError, match="different graphs"):
        ad.add(a, b)


def test_double_backprop_two_layer_net():
    """Parameter gradient of f(grad g(y)) against differences of the whole
    composite, for a small CELU network pair."""
    from wbary import networks as nw

    rng = np.random.default_rng(3)
    f = nw.Ficnn.create(2, [4], ad.Celu(1.0), rng)
    gnet = nw.Ficnn.create(2, [4], ad.Celu(1.0), rng)
    y0 = rng.standard_normal((3, 2))

    def composite(arrs):
        for dst, src in zip(gnet.param_arrays(), arrs):
            dst[...] = src
        graph = ad.Graph()
        yn = graph.leaf(y0)
        t = ad.batch_input_grad(gnet.bind(graph).value(yn), yn)
        return float(ad.mean_all(f.bind(graph).value(t)).value)

    graph = ad.Graph()
    yn = graph.leaf(y0)
    bg = gnet.bind(graph)
    t = ad.batch_input_grad(bg.value(yn), yn)
    root = ad.mean_all(f.bind(graph).value(t))
    analytic = [n.value.copy() for n in ad.grad(root, bg.leaves)]

    orig = [a.copy() for a in gnet.param_arrays()]
    numeric = finite_difference(composite, [a.copy() for a in orig])
    for dst, src in zip(gnet.param_arrays(), orig):
        dst[...] = src
    assert relative_error(analytic, numeric) < 1e-4
