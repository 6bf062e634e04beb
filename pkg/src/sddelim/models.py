"""Drift/diffusion model definitions with derived symbolic Jacobians."""

from __future__ import annotations

import numpy as np

from .expressions import compile_exprs, diff_expr, parse_expr, to_source


class Model:
    """An m-dimensional system dx = f(x) dt + g(x) eta dt with n noise channels.

    ``f`` holds the m drift expressions, ``g`` the m x n diffusion expressions.
    The Jacobians ``df[i][k] = d f_i / d x_k`` and ``dg[i][j][p] = d g_ij / d x_p``
    are derived symbolically at construction.
    """

    def __init__(self, f_exprs, g_exprs, m, n):
        self.m = int(m)
        self.n = int(n)
        self.f = tuple(f_exprs)
        self.g = tuple(tuple(row) for row in g_exprs)
        if len(self.f) != self.m:
            raise ValueError(f"expected {self.m} drift expressions, got {len(self.f)}")
        if len(self.g) != self.m or any(len(row) != self.n for row in self.g):
            raise ValueError(f"expected an {self.m}x{self.n} diffusion matrix")
        self.df = tuple(tuple(diff_expr(fi, k + 1) for k in range(self.m))
                        for fi in self.f)
        self.dg = tuple(tuple(tuple(diff_expr(gij, p + 1) for p in range(self.m))
                              for gij in row)
                        for row in self.g)
        flat = lambda rows: [e for row in rows for e in row]
        self._f = compile_exprs(self.f, self.m)
        self._g = compile_exprs(flat(self.g), self.m)
        self._df = compile_exprs(flat(self.df), self.m)
        self._dg = compile_exprs([e for row in self.dg for col in row for e in col],
                                 self.m)

    @classmethod
    def from_strings(cls, f_texts, g_texts):
        m = len(f_texts)
        n = len(g_texts[0]) if g_texts else 0
        f = [parse_expr(s, m) for s in f_texts]
        g = [[parse_expr(s, m) for s in row] for row in g_texts]
        return cls(f, g, m, n)

    def drift(self, x):
        """f(x) as an (m,) array."""
        return np.asarray(self._f(*x), dtype=float)

    def diffusion(self, x):
        """g(x) as an (m, n) array."""
        return np.asarray(self._g(*x), dtype=float).reshape(self.m, self.n)

    def drift_jacobian(self, x):
        """(m, m) array with entry [i, k] = d f_i / d x_k."""
        return np.asarray(self._df(*x), dtype=float).reshape(self.m, self.m)

    def diffusion_jacobian(self, x):
        """(m, n, m) array with entry [i, j, p] = d g_ij / d x_p."""
        return np.asarray(self._dg(*x), dtype=float).reshape(self.m, self.n, self.m)

    def sources(self):
        """Expression text for f and g; reparsing reproduces the model."""
        return ([to_source(e) for e in self.f],
                [[to_source(e) for e in row] for row in self.g])

    def __repr__(self):
        f_texts, g_texts = self.sources()
        return f"Model(m={self.m}, n={self.n}, f={f_texts}, g={g_texts})"


def _require(params, name, keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise ValueError(f"model {name!r} is missing parameters: {', '.join(missing)}")
    extra = [k for k in params if k not in keys]
    if extra:
        raise ValueError(f"model {name!r} got unknown parameters: {', '.join(extra)}")
    return (float(params[k]) for k in keys)


def builtin(name, params):
    """Construct one of the built-in models.

    - ``lotka_volterra`` (A, B, sigma): competitive two-species system with
      multiplicative diagonal noise sigma * x_i.
    - ``tanh1d`` (a, sigma): scalar system with bounded drift and bounded
      multiplicative noise sigma * tanh(x1).
    - ``additive1d`` (a, sigma): same drift with constant (additive) noise.
    """
    if name == "lotka_volterra":
        A, B, sigma = _require(params, name, ("A", "B", "sigma"))
        f = [f"{A!r}*x1*(1 - x1 - {B!r}*x2)",
             f"{A!r}*x2*(1 - x2 - {B!r}*x1)"]
        g = [[f"{sigma!r}*x1", "0"],
             ["0", f"{sigma!r}*x2"]]
        return Model.from_strings(f, g)
    if name == "tanh1d":
        a, sigma = _require(params, name, ("a", "sigma"))
        return Model.from_strings([f"-({a!r})*tanh(x1)"], [[f"{sigma!r}*tanh(x1)"]])
    if name == "additive1d":
        a, sigma = _require(params, name, ("a", "sigma"))
        return Model.from_strings([f"-({a!r})*tanh(x1)"], [[f"{sigma!r}"]])
    raise ValueError(f"unknown builtin model: {name!r}")
