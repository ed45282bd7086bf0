"""A small arithmetic grammar for coefficients, drifts and path functionals.

Accepted syntax: numeric constants, ``+ - * /``, ``**`` with a constant
exponent, parentheses, the functions ``sin cos exp tanh abs`` and the
variables supplied by the caller (``t``, ``x1``/``x_1``, ``B1``/``B_1``, ...).
Path functionals may also sample a coordinate at a fixed grid time with a
call such as ``X1(0.5)`` or ``B2(1)``. Vectors are written as tuples,
``"(sin(x1), 0)"``.

Expressions are compiled once into numpy closures; nothing is ``eval``-ed.
"""
from __future__ import annotations

import ast
import re
from typing import Callable, Dict, Iterable, List

import numpy as np

from .exceptions import ConfigError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh, "abs": np.abs}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}
_NAME = re.compile(r"^([A-Za-z]+)_?(\d*)$")


def canonical_name(name: str) -> str:
    """``x_1`` -> ``x1``; other names unchanged."""
    m = _NAME.match(name)
    return m.group(1) + m.group(2) if m else name


class Expression:
    """Compiled scalar expression; call with a mapping of variable arrays."""

    def __init__(self, source: str, fn: Callable, names: frozenset, samples: frozenset):
        self.source = source
        self._fn = fn
        self.names = names
        self.samples = samples  # {("X1", 0.5), ...}

    def __call__(self, env: Dict[str, np.ndarray]):
        return self._fn(env)

    def __repr__(self):
        return f"Expression({self.source!r})"

    @property
    def is_constant(self) -> bool:
        return not self.names and not self.samples


def _compile(node, allowed, sample_prefixes, names, samples, source):
    def fail(msg):
        col = getattr(node, "col_offset", None)
        where = f" at column {col + 1}" if col is not None else ""
        raise ConfigError(f"{msg}{where} in expression {source!r}", location=source)

    if isinstance(node, ast.Expression):
        return _compile(node.body, allowed, sample_prefixes, names, samples, source)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        name = canonical_name(node.id)
        if name not in allowed:
            fail(f"unknown variable {node.id!r} (allowed: {', '.join(sorted(allowed)) or 'none'})")
        names.add(name)
        return lambda env: env[name]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, allowed, sample_prefixes, names, samples, source)
        if isinstance(node.op, ast.USub):
            return lambda env: -inner(env)
        return inner
    if isinstance(node, ast.BinOp):
        left = _compile(node.left, allowed, sample_prefixes, names, samples, source)
        if isinstance(node.op, ast.Pow):
            exp = node.right
            if isinstance(exp, ast.UnaryOp) and isinstance(exp.op, ast.USub) and isinstance(exp.operand, ast.Constant):
                power = -float(exp.operand.value)
            elif isinstance(exp, ast.Constant) and isinstance(exp.value, (int, float)):
                power = float(exp.value)
            else:
                fail("exponent must be a numeric constant")
            return lambda env: np.power(left(env), power)
        op = _BINOPS.get(type(node.op))
        if op is None:
            fail(f"operator {type(node.op).__name__} not supported")
        right = _compile(node.right, allowed, sample_prefixes, names, samples, source)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        fname = node.func.id
        if fname in FUNCTIONS and len(node.args) == 1:
            fn = FUNCTIONS[fname]
            arg = _compile(node.args[0], allowed, sample_prefixes, names, samples, source)
            return lambda env: fn(arg(env))
        cname = canonical_name(fname)
        m = _NAME.match(cname)
        if m and m.group(1) in sample_prefixes and m.group(2) and len(node.args) == 1:
            arg = node.args[0]
            if not (isinstance(arg, ast.Constant) and isinstance(arg.value, (int, float))):
                fail(f"{fname}(...) needs a constant time")
            key = (cname, float(arg.value))
            samples.add(key)
            return lambda env: env[key]
        fail(f"unknown function {fname!r}")
    fail(f"unsupported syntax {type(node).__name__}")


def parse_scalar(source, allowed: Iterable[str] = (), sample_prefixes: Iterable[str] = ()) -> Expression:
    source = str(source).strip()
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"syntax error at column {exc.offset}: {source!r}", location=source) from None
    names, samples = set(), set()
    fn = _compile(tree, frozenset(allowed), frozenset(sample_prefixes), names, samples, source)
    return Expression(source, fn, frozenset(names), frozenset(samples))


def parse_vector(source, allowed: Iterable[str] = (), sample_prefixes: Iterable[str] = ()) -> List[Expression]:
    """Parse ``"(e1, e2, ...)"`` (or a list of strings) into expressions."""
    if isinstance(source, (list, tuple)):
        return [parse_scalar(s, allowed, sample_prefixes) for s in source]
    text = str(source).strip()
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"syntax error at column {exc.offset}: {text!r}", location=text) from None
    if isinstance(tree.body, ast.Tuple):
        parts = [ast.get_source_segment(text, elt) for elt in tree.body.elts]
    else:
        parts = [text]
    return [parse_scalar(p, allowed, sample_prefixes) for p in parts]


def state_names(n: int) -> List[str]:
    return [f"x{i + 1}" for i in range(n)]


def driver_names(d: int) -> List[str]:
    return [f"B{j + 1}" for j in range(d)]
