"""Sparse multivariate polynomials with exact integer exponents.

A polynomial over ``n`` variables is a mapping from exponent tuples to
coefficients.  Zero coefficients are never stored, so two polynomials are
equal exactly when their term maps are equal.

The text grammar used for configuration files is::

    poly  := ["-"] term (("+" | "-") term)*
    term  := coeff ["*" vars] | vars
    vars  := var ("*" var)*
    var   := "x" INDEX ["^" INTEGER]

Variables are 1-based (``x1`` .. ``xn``).
"""
from __future__ import annotations

import re
from fractions import Fraction
from numbers import Number
from typing import Iterable, Mapping

import numpy as np

__all__ = ["Polynomial", "PolynomialParseError", "poly_eval"]


class PolynomialParseError(ValueError):
    """Raised for strings outside the polynomial grammar."""

    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position} in {text!r}")
        self.text = text
        self.position = position


def _normalize_coeff(c):
    if isinstance(c, Fraction) and c.denominator == 1:
        return int(c.numerator)
    if isinstance(c, float) and c.is_integer() and abs(c) < 2**53:
        return int(c)
    return c


class Polynomial:
    """Immutable sparse polynomial in ``n`` variables.

    Parameters
    ----------
    terms : mapping
        Exponent tuple (length ``n``) -> coefficient.
    n : int
        Number of variables.
    """

    __slots__ = ("_terms", "_n", "_hash", "_exps", "_coeffs")

    def __init__(self, terms: Mapping[tuple, Number] | None, n: int):
        if n < 1:
            raise ValueError("polynomial needs at least one variable")
        clean = {}
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != n:
                raise ValueError(f"exponent {exp} has length {len(exp)}, expected {n}")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            if c != 0:
                clean[exp] = clean.get(exp, 0) + c
        self._terms = {e: _normalize_coeff(c) for e, c in clean.items() if c != 0}
        self._n = n
        self._hash = None
        self._exps = None
        self._coeffs = None

    # construction helpers

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls({}, n)

    @classmethod
    def constant(cls, c, n: int) -> "Polynomial":
        return cls({(0,) * n: c}, n)

    @classmethod
    def variable(cls, k: int, n: int) -> "Polynomial":
        """The coordinate polynomial ``x_{k+1}`` (``k`` is 0-based)."""
        if not 0 <= k < n:
            raise ValueError(f"variable index {k} out of range for n={n}")
        exp = [0] * n
        exp[k] = 1
        return cls({tuple(exp): 1}, n)

    @classmethod
    def parse(cls, text: str, n: int) -> "Polynomial":
        return _Parser(text, n).parse()

    # basic properties

    @property
    def n(self) -> int:
        return self._n

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        if not self._terms:
            return -1
        return max(sum(e) for e in self._terms)

    def variables(self) -> set[int]:
        """0-based indices of the variables that actually occur."""
        return {k for e in self._terms for k, p in enumerate(e) if p}

    def is_constant(self) -> bool:
        return not self.variables()

    def constant_term(self):
        return self._terms.get((0,) * self._n, 0)

    # arithmetic

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other._n != self._n:
                raise ValueError(f"dimension mismatch: {self._n} vs {other._n}")
            return other
        if isinstance(other, Number):
            return Polynomial.constant(other, self._n)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, 0) + c
        return Polynomial(out, self._n)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self._terms.items()}, self._n)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Polynomial(out, self._n)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Polynomial.constant(1, self._n)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def diff(self, k: int) -> "Polynomial":
        """Partial derivative with respect to the 0-based variable ``k``."""
        if not 0 <= k < self._n:
            raise ValueError(f"variable index {k} out of range for n={self._n}")
        out = {}
        for e, c in self._terms.items():
            if e[k]:
                d = list(e)
                d[k] -= 1
                out[tuple(d)] = c * e[k]
        return Polynomial(out, self._n)

    # comparison / hashing

    def __eq__(self, other):
        if isinstance(other, Number):
            other = Polynomial.constant(other, self._n)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._n == other._n and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._n, frozenset(self._terms.items())))
        return self._hash

    # evaluation

    def _arrays(self):
        if self._exps is None:
            keys = sorted(self._terms)
            self._exps = np.array(keys, dtype=np.int64).reshape(len(keys), self._n)
            self._coeffs = np.array([float(self._terms[k]) for k in keys])
        return self._exps, self._coeffs

    def __call__(self, x) -> float | np.ndarray:
        """Evaluate at a point (shape ``(n,)``) or a batch (shape ``(..., n)``)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self._n,):
            raise ValueError(f"expected trailing dimension {self._n}, got shape {x.shape}")
        exps, coeffs = self._arrays()
        if not len(coeffs):
            out = np.zeros(x.shape[:-1])
        else:
            mon = np.prod(x[..., None, :] ** exps, axis=-1)
            out = mon @ coeffs
        return float(out) if out.ndim == 0 else out

    # text form

    def to_string(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for e in sorted(self._terms, key=lambda t: (-sum(t), tuple(-p for p in t))):
            c = self._terms[e]
            vars_ = [f"x{k + 1}" + (f"^{p}" if p > 1 else "") for k, p in enumerate(e) if p]
            neg = c < 0
            mag = -c if neg else c
            if vars_ and mag == 1:
                body = "*".join(vars_)
            else:
                cs = repr(float(mag)) if isinstance(mag, float) else str(mag)
                if isinstance(mag, Fraction):
                    cs = repr(float(mag))
                body = "*".join([cs] + vars_)
            if not parts:
                parts.append(("-" if neg else "") + body)
            else:
                parts.append(("- " if neg else "+ ") + body)
        return " ".join(parts)

    __str__ = to_string

    def __repr__(self):
        return f"Polynomial({self.to_string()!r}, n={self._n})"


def poly_eval(p: Polynomial, x: Iterable[float]) -> float:
    """Evaluate ``p`` at a single point, checking the dimension."""
    x = np.asarray(list(x), dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"point has length {x.size}, polynomial has n={p.n}")
    return p(x)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x\d+)|(?P<op>[-+*^]))"
)


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens = []
        pos = 0
        stripped = text.rstrip()
        while pos < len(stripped):
            m = _TOKEN.match(stripped, pos)
            if not m or m.end() == pos:
                start = pos + len(stripped[pos:]) - len(stripped[pos:].lstrip())
                raise PolynomialParseError("unexpected character", text, start)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def _next(self):
        tok = self._peek()
        self.i += 1
        return tok

    def _fail(self, message):
        raise PolynomialParseError(message, self.text, self._peek()[2])

    def parse(self) -> Polynomial:
        if not self.tokens:
            self._fail("empty polynomial")
        result = Polynomial.zero(self.n)
        sign = 1
        kind, val, _ = self._peek()
        if kind == "op" and val in "+-":
            sign = -1 if val == "-" else 1
            self._next()
        result = result + self._term() * sign
        while self._peek()[0] is not None:
            kind, val, _ = self._peek()
            if kind != "op" or val not in "+-":
                self._fail("expected '+' or '-'")
            self._next()
            result = result + self._term() * (-1 if val == "-" else 1)
        return result

    def _term(self) -> Polynomial:
        kind, val, _ = self._peek()
        exp = [0] * self.n
        coeff = 1
        if kind == "num":
            self._next()
            coeff = int(val) if re.fullmatch(r"\d+", val) else float(val)
            if self._peek()[0] == "op" and self._peek()[1] == "*":
                self._next()
                self._var(exp)
        elif kind == "var":
            self._var(exp)
        else:
            self._fail("expected coefficient or variable")
        while self._peek()[0] == "op" and self._peek()[1] == "*":
            self._next()
            self._var(exp)
        return Polynomial({tuple(exp): coeff}, self.n)

    def _var(self, exp):
        kind, val, pos = self._peek()
        if kind != "var":
            self._fail("expected variable")
        self._next()
        k = int(val[1:])
        if not 1 <= k <= self.n:
            raise PolynomialParseError(f"variable {val} outside x1..x{self.n}", self.text, pos)
        power = 1
        if self._peek()[0] == "op" and self._peek()[1] == "^":
            self._next()
            kind, val, _ = self._peek()
            if kind != "num" or not re.fullmatch(r"\d+", val):
                self._fail("expected integer exponent")
            self._next()
            power = int(val)
        exp[k - 1] += power
