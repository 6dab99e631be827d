import math

import numpy as np
import pytest

from fvc import EvalError, ParseError, differentiate, evaluate, parse, to_string
from fvc.expr import free_variables


class TestParseEval:
    def test_mixed_arithmetic(self):
        e = parse("x1^2 + u1*t", 1)
        assert evaluate(e, {"x1": 2.0, "u1": 3.0, "t": 0.5}) == 5.5

    def test_cosh(self):
        assert evaluate(parse("cosh(t)", 1), {"t": 0.0}) == 1.0

    def test_exp(self):
        assert math.isclose(evaluate(parse("exp(1)", 1), {}), math.e, rel_tol=1e-15)

    def test_sqrt(self):
        assert evaluate(parse("sqrt(x1)", 1), {"x1": 4.0}) == 2.0

    def test_incomplete_expression_offset(self):
        with pytest.raises(ParseError) as exc:
            parse("x1 +", 1)
        assert exc.value.offset == 4

    def test_unknown_identifier(self):
        with pytest.raises(ParseError):
            parse("foo + 1", 1)

    def test_index_out_of_range(self):
        parse("x2", 2)
        with pytest.raises(ParseError):
            parse("x2", 1)
        with pytest.raises(ParseError):
            parse("xb3", 2)

    def test_empty_source(self):
        with pytest.raises(ParseError):
            parse("   ", 1)

    def test_trailing_garbage(self):
        with pytest.raises(ParseError):
            parse("x1 1", 1)

    def test_power_right_associative(self):
        assert evaluate(parse("2^3^2", 1), {}) == 512.0

    def test_unary_minus_binds_below_power(self):
        assert evaluate(parse("-2^2", 1), {}) == -4.0

    def test_division_left_associative(self):
        assert evaluate(parse("6/3/2", 1), {}) == 1.0

    def test_whitespace_insensitive(self):
        a = parse("x1+ 2 *u1", 1)
        b = parse("x1+2*u1", 1)
        env = {"x1": 1.0, "u1": 4.0}
        assert evaluate(a, env) == evaluate(b, env)

    def test_vectorized_evaluation(self):
        e = parse("x1^2 + t", 1)
        out = evaluate(e, {"x1": np.array([1.0, 2.0]), "t": np.array([0.0, 1.0])})
        assert np.array_equal(out, [1.0, 5.0])

    def test_free_variables(self):
        assert free_variables(parse("x1*u2 + t", 2)) == {"x1", "u2", "t"}


class TestEvalErrors:
    def test_unbound_variable(self):
        with pytest.raises(EvalError):
            evaluate(parse("x1", 1), {})

    def test_division_by_zero(self):
        with pytest.raises(EvalError):
            evaluate(parse("1/(t - t)", 1), {"t": 2.0})

    def test_sqrt_negative(self):
        with pytest.raises(EvalError):
            evaluate(parse("sqrt(x1)", 1), {"x1": -1.0})

    def test_log_negative(self):
        with pytest.raises(EvalError):
            evaluate(parse("log(x1)", 1), {"x1": -1.0})


class TestDifferentiate:
    def test_square(self):
        d = differentiate(parse("x1^2", 1), "x1")
        assert evaluate(d, {"x1": 2.0}) == 4.0

    def test_quadratic_lagrangian(self):
        e = parse("0.5*(x1^2 + u1^2)", 1)
        d = differentiate(e, "u1")
        assert evaluate(d, {"x1": 0.0, "u1": 3.0}) == 3.0
        dd = differentiate(d, "u1")
        assert evaluate(dd, {"x1": 7.0, "u1": -2.0}) == 1.0

    def test_other_variable(self):
        d = differentiate(parse("x1^2", 1), "u1")
        assert evaluate(d, {"x1": 5.0}) == 0.0

    def test_abs_at_kink(self):
        d = differentiate(parse("abs(x1)", 1), "x1")
        assert evaluate(d, {"x1": 0.0}) == 0.0
        assert evaluate(d, {"x1": -2.0}) == -1.0

    def test_variable_exponent(self):
        e = parse("x1^u1", 1)
        d = differentiate(e, "u1")
        val = evaluate(d, {"x1": 2.0, "u1": 3.0})
        assert math.isclose(val, 8.0 * math.log(2.0), rel_tol=1e-12)

    def test_quotient(self):
        d = differentiate(parse("x1/u1", 1), "u1")
        assert evaluate(d, {"x1": 6.0, "u1": 2.0}) == -1.5


def _random_expr(rng, depth=3):
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.5:
            return repr(round(rng.uniform(0.2, 3.0), 3))
        return rng.choice(["t", "x1", "u1"])
    roll = rng.random()
    if roll < 0.55:
        op = rng.choice(["+", "-", "*"])
        return f"({_random_expr(rng, depth - 1)} {op} {_random_expr(rng, depth - 1)})"
    if roll < 0.7:
        return f"({_random_expr(rng, depth - 1)})^{rng.integers(1, 4)}"
    fn = rng.choice(["sin", "cos", "exp", "cosh", "sinh"])
    return f"{fn}({_random_expr(rng, depth - 1)})"


class TestRandomized:
    def test_derivative_matches_finite_difference(self, rng):
        step = 1e-5
        checked = 0
        for _ in range(1000):
            src = _random_expr(rng)
            e = parse(src, 1)
            var = rng.choice(["t", "x1", "u1"])
            d = differentiate(e, var)
            env = {n: rng.uniform(-1.0, 1.0) for n in ("t", "x1", "u1")}
            try:
                sym = float(evaluate(d, env))
                hi = dict(env, **{var: env[var] + step})
                lo = dict(env, **{var: env[var] - step})
                fd = (float(evaluate(e, hi)) - float(evaluate(e, lo))) / (2 * step)
            except EvalError:
                continue
            scale = 1.0 + abs(float(evaluate(e, env)))
            assert abs(sym - fd) <= 2e-5 * scale * (1.0 + abs(sym)), src
            checked += 1
        assert checked > 800

    def test_print_parse_round_trip(self, rng):
        for _ in range(300):
            src = _random_expr(rng)
            e = parse(src, 1)
            back = parse(to_string(e), 1)
            env = {n: rng.uniform(-1.0, 1.0) for n in ("t", "x1", "u1")}
            try:
                a = float(evaluate(e, env))
            except EvalError:
                continue
            assert float(evaluate(back, env)) == a

    def test_round_trip_of_derivatives(self, rng):
        for _ in range(200):
            e = differentiate(parse(_random_expr(rng), 1), "x1")
            back = parse(to_string(e), 1)
            env = {n: rng.uniform(0.1, 1.0) for n in ("t", "x1", "u1")}
            try:
                a = float(evaluate(e, env))
            except EvalError:
                continue
            assert math.isclose(float(evaluate(back, env)), a, rel_tol=1e-12)
