import numpy as np
import pytest
from hypothesis import given, strategies as st

from conesqp import expr
from conesqp.expr import Add, Const, Div, Mul, Neg, Pow, Sub, Var


def central_diff_grad(ast, x, h=1e-5):
    n = x.size
    g = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g[i] = (expr.eval2(ast, x + e).value - expr.eval2(ast, x - e).value) / (2 * h)
    return g


def central_diff_hess(ast, x, h=1e-4):
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        H[i] = (central_diff_grad(ast, x + e, h) - central_diff_grad(ast, x - e, h)) / (2 * h)
    return 0.5 * (H + H.T)


def random_ast(rng, n, depth=3):
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.5:
            return Var(int(rng.integers(n)))
        return Const(float(np.round(rng.uniform(-3, 3), 3)))
    op = rng.integers(5)
    if op == 0:
        return Add(random_ast(rng, n, depth - 1), random_ast(rng, n, depth - 1))
    if op == 1:
        return Sub(random_ast(rng, n, depth - 1), random_ast(rng, n, depth - 1))
    if op == 2:
        return Mul(random_ast(rng, n, depth - 1), random_ast(rng, n, depth - 1))
    if op == 3:
        return Neg(random_ast(rng, n, depth - 1))
    return Pow(random_ast(rng, n, depth - 1), int(rng.integers(0, 4)))


class TestParse:
    def test_ex55_objective_root_is_add(self):
        ast = expr.parse("-0.5*x1^2 + x1^3/6", 1)
        assert isinstance(ast.root, Add)

    def test_unknown_variable(self):
        with pytest.raises(expr.ParseError, match="unknown variable 'x3'"):
            expr.parse("x1 + x3", 2)

    def test_parenthesized_exponent(self):
        ast = expr.parse("x1^(2)", 1)
        assert isinstance(ast.root, Pow) and ast.root.exponent == 2

    def test_precedence_power_binds_before_unary_minus(self):
        # -x1^2 at x1=3 must be -9, not 9
        assert expr.eval2(expr.parse("-x1^2", 1), np.array([3.0])).value == -9.0

    def test_left_associativity(self):
        assert expr.eval2(expr.parse("8 - 3 - 2", 1), np.array([0.0])).value == 3.0
        assert expr.eval2(expr.parse("8 / 2 / 2", 1), np.array([0.0])).value == 2.0

    def test_syntax_error_carries_position(self):
        with pytest.raises(expr.ParseError) as err:
            expr.parse("x1 + + x1", 1)
        assert err.value.position == 5

    def test_non_integer_exponent(self):
        with pytest.raises(expr.ParseError, match="exponent"):
            expr.parse("x1^2.5", 1)
        with pytest.raises(expr.ParseError, match="exponent"):
            expr.parse("x1^-2", 1)

    def test_unbalanced_parens(self):
        with pytest.raises(expr.ParseError):
            expr.parse("(x1 + 1", 1)


class TestEval2:
    def test_ex55_objective_at_two(self):
        # hand differentiation: value -2/3, slope -2 + 2 = 0, curvature -1 + 2 = 1
        so = expr.eval2(expr.parse("-0.5*x1^2 + x1^3/6", 1), np.array([2.0]))
        assert so.value == pytest.approx(-2.0 / 3.0, abs=1e-12)
        assert so.gradient[0] == pytest.approx(0.0, abs=1e-12)
        assert so.hessian[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_product(self):
        so = expr.eval2(expr.parse("x1*x2", 2), np.array([3.0, 4.0]))
        assert so.value == 12.0
        assert np.allclose(so.gradient, [4.0, 3.0])
        assert np.allclose(so.hessian, [[0.0, 1.0], [1.0, 0.0]])

    def test_division_by_zero(self):
        with pytest.raises(expr.EvalError):
            expr.eval2(expr.parse("1/x1", 1), np.array([0.0]))

    def test_division_derivatives(self):
        so = expr.eval2(expr.parse("x1/x2", 2), np.array([1.0, 2.0]))
        assert so.value == 0.5
        assert np.allclose(so.gradient, [0.5, -0.25])
        assert np.allclose(so.hessian, [[0.0, -0.25], [-0.25, 0.25]])

    def test_matches_finite_differences_on_random_polynomials(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 4))
            ast = expr.ExprAST(random_ast(rng, n), n)
            x = rng.uniform(-2, 2, size=n)
            so = expr.eval2(ast, x)
            g_fd = central_diff_grad(ast, x)
            h_fd = central_diff_hess(ast, x)
            scale_g = 1.0 + np.linalg.norm(g_fd)
            scale_h = 1.0 + np.linalg.norm(h_fd)
            assert np.linalg.norm(so.gradient - g_fd) <= 1e-6 * scale_g
            assert np.linalg.norm(so.hessian - h_fd) <= 1e-6 * scale_h

    def test_hessian_symmetric(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 4))
            ast = expr.ExprAST(random_ast(rng, n), n)
            so = expr.eval2(ast, rng.uniform(-2, 2, size=n))
            assert np.allclose(so.hessian, so.hessian.T, atol=1e-12)


# round-trips: parse(to_string(ast)) reproduces the tree exactly on the
# parser's image (the grammar has no negative literals: "-1" is unary minus,
# so parsed trees only ever hold nonnegative constants)

_nodes = st.deferred(
    lambda: st.one_of(
        st.builds(Const, st.floats(min_value=0, max_value=5, allow_nan=False).map(lambda v: round(v, 3))),
        st.builds(Var, st.integers(min_value=0, max_value=2)),
        st.builds(Add, _nodes, _nodes),
        st.builds(Sub, _nodes, _nodes),
        st.builds(Mul, _nodes, _nodes),
        st.builds(Div, _nodes, _nodes),
        st.builds(Neg, _nodes),
        st.builds(Pow, _nodes, st.integers(min_value=0, max_value=4)),
    )
)


@given(_nodes)
def test_parse_print_parse_identity(node):
    ast = expr.ExprAST(node, 3)
    text = expr.to_string(ast)
    assert expr.parse(text, 3).root == ast.root


def test_text_level_round_trip_is_stable():
    texts = [
        "-0.5*x1^2 + x1^3/6",
        "x1*x2 - (x1 - x2)^3",
        "-(x1 + 1)/(x2 + 2) + x3^2*x1",
        "2 - 3 - 4 + x1/2/2",
    ]
    for text in texts:
        once = expr.parse(text, 3)
        twice = expr.parse(expr.to_string(once), 3)
        assert once.root == twice.root


def test_negative_constants_round_trip_semantically(rng):
    for _ in range(50):
        n = 2
        ast = expr.ExprAST(random_ast(rng, n), n)
        reparsed = expr.parse(expr.to_string(ast), n)
        x = rng.uniform(0.5, 2.0, size=n)
        try:
            a = expr.eval2(ast, x)
        except expr.EvalError:
            continue
        b = expr.eval2(reparsed, x)
        assert a.value == pytest.approx(b.value, rel=1e-12, abs=1e-12)
