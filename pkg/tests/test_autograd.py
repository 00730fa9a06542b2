import numpy as np
import pytest

from oracles import central_difference, relative_error
from unisg.nn import autograd as ag
from unisg.nn.autograd import ShapeError, Tensor, gradient_check, parameter

TOL = 1e-4


def check_op(build, *shapes, rng, positive=False, away_from_zero=False):
    """Analytic gradient of sum(build(*xs) * R) against central differences."""
    xs = []
    for s in shapes:
        x = rng.uniform(0.5, 2.0, s) if positive else rng.normal(size=s)
        if away_from_zero:
            x = np.where(np.abs(x) < 0.05, 0.3, x)
        xs.append(parameter(x))
    out_shape = build(*xs).shape
    R = rng.normal(size=out_shape)

    def loss():
        return float((build(*xs).data * R).sum())

    for x in xs:
        x.grad = None
    ag.sum(ag.mul(build(*xs), R)).backward()
    numeric = central_difference(loss, [x.data for x in xs])
    for x, g in zip(xs, numeric):
        assert relative_error(x.grad, g) < TOL, build


# two graphs of 3 and 2 nodes padded to 3 slots
BLOCKS = np.array([[[0.2, 0.5, 0.3], [1.0, 0, 0], [0, 0.5, 0.5]], [[0, 1.0, 0], [0.25, 0.75, 0], [0, 0, 0]]])
BLOCK_MASK = np.array([[True, True, True], [True, True, False]])

OPS = {
    "add": (lambda a, b: a + b, [(4, 3), (4, 3)]),
    "add_broadcast_row": (lambda a, b: a + b, [(4, 3), (1, 3)]),
    "add_broadcast_scalar": (lambda a, b: a + b, [(4, 3), ()]),
    "sub": (lambda a, b: a - b, [(3, 2), (3, 2)]),
    "mul": (lambda a, b: a * b, [(4, 3), (4, 3)]),
    "mul_broadcast": (lambda a, b: a * b, [(4, 3), (4, 1)]),
    "neg": (lambda a: -a, [(3, 3)]),
    "div_const": (lambda a: a / 3.0, [(2, 5)]),
    "matmul": (lambda a, b: a @ b, [(4, 3), (3, 5)]),
    "transpose": (lambda a: a.T, [(4, 3)]),
    "sigmoid": (ag.sigmoid, [(5, 4)]),
    "tanh": (ag.tanh, [(5, 4)]),
    "exp": (ag.exp, [(3, 4)]),
    "square": (ag.square, [(3, 4)]),
    "softmax": (ag.softmax, [(4, 6)]),
    "softmax_axis0": (lambda a: ag.softmax(a, axis=0), [(4, 6)]),
    "log_softmax": (ag.log_softmax, [(4, 6)]),
    "concat": (lambda a, b: ag.concat([a, b]), [(4, 2), (4, 3)]),
    "concat_rows": (lambda a, b: ag.concat([a, b], axis=0), [(2, 3), (4, 3)]),
    "mean_rows": (ag.mean_rows, [(5, 3)]),
    "mean_all": (lambda a: ag.mean(a), [(5, 3)]),
    "sum_axis1": (lambda a: ag.sum(a, axis=1), [(5, 3)]),
    "sum_keepdims": (lambda a: ag.sum(a, axis=0, keepdims=True), [(5, 3)]),
    "lookup_rows": (lambda t: ag.lookup_rows(t, [2, 0, 2, 1]), [(3, 4)]),
    "scatter_rows": (lambda a: ag.scatter_rows([0, 0, 2, 3, 3], [1, 2, 0, 3, 1], [0.5, 0.5, 1.0, 0.25, 0.75], 4, a),
                     [(4, 3)]),
    "block_matmul": (lambda a: ag.block_matmul(BLOCKS, BLOCK_MASK, a), [(5, 3)]),
    "chain": (lambda a, b, c: ag.tanh(ag.sigmoid(a @ b) * 2.0 + c) @ b.T, [(3, 4), (4, 4), (1, 4)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name, rng):
    build, shapes = OPS[name]
    check_op(build, *shapes, rng=rng)


def test_log_gradient(rng):
    check_op(ag.log, (4, 3), rng=rng, positive=True)


@pytest.mark.parametrize("op", [ag.relu, ag.leaky_relu, lambda a: ag.clip(a, -0.5, 0.5)])
def test_kinked_gradients(op, rng):
    # keep samples off the kinks, where the derivative is a convention
    xs = rng.normal(size=(5, 4))
    xs = np.where(np.abs(np.abs(xs) - 0.5) < 0.05, 0.2, xs)
    xs = np.where(np.abs(xs) < 0.05, 0.3, xs)
    x = parameter(xs)
    R = rng.normal(size=xs.shape)
    ag.sum(ag.mul(op(x), R)).backward()
    (g,) = central_difference(lambda: float((op(Tensor(x.data)).data * R).sum()), [x.data])
    assert relative_error(x.grad, g) < TOL


def test_random_op_chains(rng):
    unary = [ag.sigmoid, ag.tanh, ag.square, lambda t: t * 0.5, ag.softmax]
    for _ in range(20):
        picks = rng.integers(0, len(unary), 4)
        W = parameter(rng.normal(size=(3, 3)) * 0.5)
        X = parameter(rng.normal(size=(4, 3)))

        def f(params):
            h = params[1]
            for k in picks:
                h = unary[k](h @ params[0])
            return ag.sum(h * h)

        assert gradient_check(f, [W, X]) < TOL


def test_library_check_matches_oracle(rng):
    W = parameter(rng.normal(size=(3, 2)))

    def f(params):
        return ag.sum(ag.sigmoid(params[0]) * 3.0)

    assert gradient_check(f, [W]) < 1e-9
    # a deliberately wrong backward (missing the factor 2) is caught
    def wrong(params):
        return ag.sum(ag._make(params[0].data * 2, (params[0],), lambda g: params[0]._accumulate(g), "bad"))

    assert gradient_check(wrong, [W]) > 0.1


# -- forward values and contracts ----------------------------------------------------------

def test_matmul_identity(rng):
    X = parameter(rng.normal(size=(3, 4)))
    out = ag.matmul(np.eye(3), X)
    assert np.array_equal(out.data, X.data)
    G = rng.normal(size=(3, 4))
    out.backward(G)
    assert np.array_equal(X.grad, G)


def test_relu_at_minus_one_and_zero():
    x = parameter([[-1.0, 0.0, 2.0]])
    y = ag.relu(x)
    assert y.data.tolist() == [[0.0, 0.0, 2.0]]
    ag.sum(y).backward()
    assert x.grad.tolist() == [[0.0, 0.0, 1.0]]


def test_forward_values_against_numpy(rng):
    a = rng.normal(size=(4, 5))
    np.testing.assert_allclose(ag.sigmoid(a).data, 1 / (1 + np.exp(-a)), rtol=1e-15)
    e = np.exp(a - a.max(axis=1, keepdims=True))
    np.testing.assert_allclose(ag.softmax(a).data, e / e.sum(axis=1, keepdims=True), rtol=1e-14)
    np.testing.assert_allclose(ag.log_softmax(a).data, np.log(e / e.sum(axis=1, keepdims=True)), atol=1e-14)
    np.testing.assert_allclose(ag.mean_rows(a).data, a.mean(axis=0, keepdims=True), rtol=1e-15)


def test_sigmoid_extremes():
    y = ag.sigmoid(np.array([[-800.0, 0.0, 800.0]])).data
    assert y.tolist() == [[0.0, 0.5, 1.0]] and np.all(np.isfinite(y))


def test_scatter_rows_is_sparse_product(rng):
    A = (rng.random((6, 6)) < 0.4) * rng.uniform(0.1, 1.0, (6, 6))
    r, c = np.nonzero(A)
    X = rng.normal(size=(6, 3))
    np.testing.assert_allclose(ag.scatter_rows(r, c, A[r, c], 6, X).data, A @ X, atol=1e-14)
    empty = ag.scatter_rows([], [], [], 3, X)
    assert np.array_equal(empty.data, np.zeros((3, 3)))


def test_block_matmul_is_block_diagonal_product(rng):
    X = rng.normal(size=(5, 3))
    dense = np.zeros((5, 5))
    dense[:3, :3] = BLOCKS[0]
    dense[3:, 3:] = BLOCKS[1][:2, :2]
    np.testing.assert_allclose(ag.block_matmul(BLOCKS, BLOCK_MASK, X).data, dense @ X, atol=1e-15)


def test_gradient_accumulates_over_reuse(rng):
    x = parameter(rng.normal(size=(2, 2)))
    ag.sum(x * x + x).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1, rtol=1e-15)


@pytest.mark.parametrize("call, fragment", [
    (lambda: ag.matmul(np.ones((2, 3)), np.ones((2, 3))), "matmul"),
    (lambda: ag.add(np.ones((2, 3)), np.ones((3, 2))), "add"),
    (lambda: ag.mul(np.ones((2, 3)), np.ones((4, 3))), "mul"),
    (lambda: ag.concat([np.ones((2, 3)), np.ones((3, 3))]), "concat"),
    (lambda: ag.lookup_rows(np.ones((2, 3)), [0, 5]), "lookup_rows"),
    (lambda: ag.scatter_rows([0], [9], [1.0], 2, np.ones((2, 2))), "scatter_rows"),
    (lambda: ag.block_matmul(BLOCKS, BLOCK_MASK, np.ones((4, 2))), "block_matmul"),
    (lambda: Tensor(np.ones((2, 2, 2))), "rank"),
    (lambda: ag.mean(np.ones((0, 3)), axis=0), "mean"),
])
def test_shape_errors_name_the_op(call, fragment):
    with pytest.raises(ShapeError, match=fragment):
        call()


def test_backward_needs_scalar():
    with pytest.raises(ShapeError):
        parameter(np.ones((2, 2))).backward()


def test_constants_do_not_track():
    out = ag.add(np.ones((2, 2)), np.ones((2, 2)))
    assert not out.requires_grad and out._parents == ()
    with pytest.raises(TypeError):
        parameter([1.0]) / parameter([2.0])
