import numpy as np
import pytest

from core.errors import ConfigValidationError, ExpressionError
from core.expressions import Expression, combine


def test_evaluates_on_arrays():
    f = Expression('x1^2 + sin(pi*x2)')
    x = np.array([0.0, 1.0, 2.0])
    y = np.array([0.5, 0.0, 1.5])
    np.testing.assert_allclose(f(x, y), x ** 2 + np.sin(np.pi * y), atol=1e-15)


def test_variable_aliases():
    xx, yy = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(0, 1, 4), indexing='ij')
    np.testing.assert_array_equal(Expression('x*y')(xx, yy), Expression('y1*y2')(xx, yy))
    np.testing.assert_array_equal(Expression('x1*x2')(xx, yy), Expression('x*y')(xx, yy))


def test_constant_broadcasts_to_grid_shape():
    f = Expression('2')
    values = f(np.zeros((3, 4)), np.zeros((3, 4)))
    assert values.shape == (3, 4)
    assert np.all(values == 2.0)
    assert f.is_constant


def test_exact_derivative():
    f = Expression('x^3*y')
    assert float(f.derivative(2, 1)(2.0, 1.0)) == pytest.approx(12.0)
    d1, d2 = f.gradient()
    assert float(d1(1.0, 2.0)) == pytest.approx(6.0)
    assert float(d2(2.0, 5.0)) == pytest.approx(8.0)


def test_combine_builds_new_expression():
    B = Expression('1 + x^2')
    twice = combine(lambda b: 2 * b, B)
    assert float(twice(1.0, 0.0)) == pytest.approx(4.0)


@pytest.mark.parametrize('text', ['log(x)', 'z + 1', '__import__("os")', '', 'x =='])
def test_rejects_text_outside_grammar(text):
    with pytest.raises(ExpressionError):
        Expression(text)


def test_expression_error_is_a_validation_error():
    with pytest.raises(ConfigValidationError) as info:
        Expression('foo(x)')
    assert info.value.exit_code == 2
