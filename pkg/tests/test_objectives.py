import numpy as np
import pytest

from wbary import autodiff as ad
from wbary import networks as nw
from wbary.gradcheck import finite_difference, relative_error
from wbary.objectives import (BarycenterProblem, j_term, nwb_objective,
                              nwbf_objective)


class _Dim:
    def __init__(self, d):
        self.dim = d


def _problem(n, d=2, weights=None, lam=0.1):
    w = weights if weights is not None else np.full(n, 1.0 / n)
    return BarycenterProblem([_Dim(d) for _ in range(n)], w, latent_dim=d,
                             penalty_weight=lam)


def _zero_generator(d):
    return nw.Generator(latent_dim=d, out_dim=d, widths=[], activation=ad.Prelu(0.25),
                        mats=[np.zeros((d, d))], biases=[np.zeros(d)])


def _coordinate_potential(d, coord=0):
    # f(x) = x_coord via the linear head only
    a_out = np.zeros(d)
    a_out[coord] = 1.0
    return nw.Ficnn(input_dim=d, widths=[d], activations=[ad.Identity()],
                    a_mats=[np.zeros((d, d))], w_mats=[], biases=[np.zeros(d)],
                    w_out=np.zeros(d), a_out=a_out, b_out=np.zeros(()))


def _zero_potential(d):
    return nw.Ficnn(input_dim=d, widths=[d], activations=[ad.Identity()],
                    a_mats=[np.zeros((d, d))], w_mats=[], biases=[np.zeros(d)],
                    w_out=np.zeros(d), a_out=np.zeros(d), b_out=np.zeros(()))


def test_j_term_closed_form_substitution():
    # g = 0.5|y|^2 so grad g = id; f(x) = x_0; h = 0; Y = (2, 0):
    # J = f(Y) - <Y, Y> - f(0) = 2 - 4 - 0 = -2
    f = _coordinate_potential(2)
    g = nw.QuadraticPotential(np.zeros(2))
    h = _zero_generator(2)
    j = j_term(f, g, h, np.array([[2.0, 0.0]]), np.array([[0.3, 0.4]]))
    assert float(j.value) == pytest.approx(-2.0)


def test_j_term_zero_potential():
    rng = np.random.default_rng(0)
    g = nw.QuadraticPotential(rng.standard_normal(2))
    h = _zero_generator(2)
    y = rng.standard_normal((16, 2))
    z = rng.standard_normal((16, 2))
    j = j_term(_zero_potential(2), g, h, y, z)
    grads = y + g.beta  # grad of 0.5|y|^2 + beta.y
    assert float(j.value) == pytest.approx(-np.mean(np.einsum("ij,ij->i", y, grads)))


def test_j_term_rejects_empty_and_mismatched_batches():
    f, g, h = _zero_potential(2), nw.QuadraticPotential(np.zeros(2)), _zero_generator(2)
    with pytest.raises(ValueError, match="equal m"):
        j_term(f, g, h, np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        j_term(f, g, h, np.zeros((0, 2)), np.zeros((0, 2)))


def test_nwb_objective_single_marginal_closed_form():
    prob = _problem(1)
    rng = np.random.default_rng(1)
    y = rng.standard_normal((32, 2))
    z = rng.standard_normal((32, 2))
    parts = nwb_objective(prob, [_zero_potential(2)], [nw.QuadraticPotential(np.zeros(2))],
                          _zero_generator(2), [y], z)
    assert float(parts.gen_term.value) == 0.0
    assert float(parts.total.value) == pytest.approx(-np.mean(np.sum(y * y, axis=1)))


def test_nwb_objective_breakdown_identity():
    rng = np.random.default_rng(2)
    prob = _problem(2, weights=np.array([0.25, 0.75]))
    fs = [nw.Ficnn.create(2, [5], ad.Celu(1.0), rng) for _ in range(2)]
    gs = [nw.Ficnn.create(2, [5], ad.Celu(1.0), rng) for _ in range(2)]
    gs[0].w_mats = []  # widths [5] has no W blocks; force one negative entry via head
    gs[0].w_out[0] = -0.4
    h = nw.Generator.create(2, 2, [6], rng)
    ys = [rng.standard_normal((8, 2)) for _ in range(2)]
    parts = nwb_objective(prob, fs, gs, h, ys, rng.standard_normal((8, 2)))
    f = parts.floats()
    reconstructed = (0.25 * (f["j"][0] + f["r"][0]) + 0.75 * (f["j"][1] + f["r"][1])
                     + f["gen_term"])
    assert f["total"] == pytest.approx(reconstructed, rel=1e-12)
    assert f["r"][0] > 0  # the negative head entry is penalized


def test_objective_affine_in_weights():
    rng = np.random.default_rng(3)
    fs = [nw.Ficnn.create(2, [5], ad.Celu(1.0), rng) for _ in range(2)]
    gs = [nw.Ficnn.create(2, [5], ad.Celu(1.0), rng) for _ in range(2)]
    h = nw.Generator.create(2, 2, [6], rng)
    ys = [rng.standard_normal((8, 2)) for _ in range(2)]
    z = rng.standard_normal((8, 2))

    def total(w):
        return float(nwb_objective(_problem(2, weights=w), fs, gs, h, ys, z).total.value)

    lo, hi = np.array([0.1, 0.9]), np.array([0.7, 0.3])
    mid = 0.5 * (lo + hi)
    assert total(mid) == pytest.approx(0.5 * total(lo) + 0.5 * total(hi), rel=1e-10)


def test_constant_shift_of_f_cancels_in_j():
    # +f(grad g(Y)) and -f(h(Z)) cancel a constant exactly at equal batch sizes
    rng = np.random.default_rng(4)
    f = nw.Ficnn.create(2, [5], ad.Celu(1.0), rng)
    g = nw.Ficnn.create(2, [5], ad.Celu(1.0), rng)
    h = nw.Generator.create(2, 2, [6], rng)
    y = rng.standard_normal((8, 2))
    z = rng.standard_normal((8, 2))
    before = float(j_term(f, g, h, y, z).value)
    f.b_out = f.b_out + 5.0
    after = float(j_term(f, g, h, y, z).value)
    assert after == pytest.approx(before, abs=1e-9)


def test_objective_gradients_match_differences():
    rng = np.random.default_rng(5)
    prob = _problem(1, lam=0.1)
    f = nw.Ficnn.create(2, [4, 4], ad.Celu(1.0), rng)
    g = nw.Ficnn.create(2, [4, 4], ad.Celu(1.0), rng)
    g.w_mats[0][0, 0] = -0.3  # penalty participates
    h = nw.Generator.create(2, 2, [5], rng)
    y = rng.standard_normal((3, 2))
    z = rng.standard_normal((3, 2))

    for net in (f, g, h):
        def fn(arrs, _net=net):
            for dst, src in zip(_net.param_arrays(), arrs):
                dst[...] = src
            return float(nwb_objective(prob, [f], [g], h, [y], z).total.value)

        parts = nwb_objective(prob, [f], [g], h, [y], z)
        graph = parts.total.graph
        nf, ng = len(f.param_arrays()), len(g.param_arrays())
        if net is f:
            leaves = graph.params[:nf]
        elif net is g:
            leaves = graph.params[nf:nf + ng]
        else:
            leaves = graph.params[nf + ng:]
        analytic = [n.value.copy() for n in ad.grad(parts.total, leaves)]
        orig = [a.copy() for a in net.param_arrays()]
        numeric = finite_difference(fn, [a.copy() for a in orig])
        for dst, src in zip(net.param_arrays(), orig):
            dst[...] = src
        assert relative_error(analytic, numeric) < 1e-4


# ---------------------------------------------------------------------------
# Free-weight objective
# ---------------------------------------------------------------------------


def _nwbf_nets(n, d, seed=6):
    rng = np.random.default_rng(seed)
    fs = [nw.Picnn.create(d, n, [5], ad.Celu(1.0), rng) for _ in range(n)]
    gs = [nw.Picnn.create(d, n, [5], ad.Celu(1.0), rng) for _ in range(n)]
    h = nw.Generator.create(d, d, [6], rng, cond_dim=n)
    return fs, gs, h


def test_nwbf_requires_conditioned_networks():
    prob = BarycenterProblem([_Dim(2)], None, latent_dim=2)
    rng = np.random.default_rng(7)
    plain_f = [nw.Ficnn.create(2, [4], ad.Celu(1.0), rng)]
    plain_g = [nw.Ficnn.create(2, [4], ad.Celu(1.0), rng)]
    h = nw.Generator.create(2, 2, [4], rng)
    with pytest.raises(ValueError, match="weight-conditioned"):
        nwbf_objective(prob, plain_f, plain_g, h, [np.zeros((2, 2))],
                       np.zeros((2, 2)), np.array([1.0]))


def test_nwbf_single_marginal_point_simplex():
    prob = BarycenterProblem([_Dim(2)], None, latent_dim=2)
    fs, gs, h = _nwbf_nets(1, 2)
    rng = np.random.default_rng(8)
    y, z = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    parts = nwbf_objective(prob, fs, gs, h, [y], z, np.array([1.0]))
    assert np.isfinite(float(parts.total.value))
    # N=1 forces the weight to (1.0): the value equals the induced fixed-weight mix
    f = parts.floats()
    assert f["total"] == pytest.approx(f["j"][0] + f["r"][0] + f["gen_term"], rel=1e-12)


def test_nwbf_degenerate_weight_zeroes_marginal():
    prob = BarycenterProblem([_Dim(2), _Dim(2)], None, latent_dim=2)
    fs, gs, h = _nwbf_nets(2, 2)
    rng = np.random.default_rng(9)
    ys = [rng.standard_normal((6, 2)) for _ in range(2)]
    z = rng.standard_normal((6, 2))
    parts = nwbf_objective(prob, fs, gs, h, ys, z, np.array([1.0, 0.0]))
    f = parts.floats()
    assert f["total"] == pytest.approx(1.0 * (f["j"][0] + f["r"][0]) + f["gen_term"],
                                       rel=1e-12)


def test_nwbf_gradients_match_differences():
    prob = BarycenterProblem([_Dim(2), _Dim(2)], None, latent_dim=2)
    fs, gs, h = _nwbf_nets(2, 2, seed=10)
    rng = np.random.default_rng(11)
    ys = [rng.standard_normal((3, 2)) for _ in range(2)]
    z = rng.standard_normal((3, 2))
    a = np.array([0.35, 0.65])

    net = gs[0]

    def fn(arrs):
        for dst, src in zip(net.param_arrays(), arrs):
            dst[...] = src
        return float(nwbf_objective(prob, fs, gs, h, ys, z, a).total.value)

    parts = nwbf_objective(prob, fs, gs, h, ys, z, a)
    graph = parts.total.graph
    nf = sum(len(f.param_arrays()) for f in fs)
    ng0 = len(net.param_arrays())
    leaves = graph.params[nf:nf + ng0]
    analytic = [n.value.copy() for n in ad.grad(parts.total, leaves)]
    orig = [x.copy() for x in net.param_arrays()]
    numeric = finite_difference(fn, [x.copy() for x in orig])
    for dst, src in zip(net.param_arrays(), orig):
        dst[...] = src
    assert relative_error(analytic, numeric) < 1e-4
