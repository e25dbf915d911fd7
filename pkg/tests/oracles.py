"""Independent sympy oracles for the geometric quantities."""

import sympy as sp

LOCALS = {"ln": sp.log, "abs": sp.Abs, "sign": sp.sign, "exp": sp.exp, "sqrt": sp.sqrt,
          "sin": sp.sin, "cos": sp.cos}


def to_sympy(text, symbols):
    return sp.sympify(text.replace("^", "**"), locals={**LOCALS, **symbols})


class Geometry:
    """Christoffels, f from the Berwald condition, affine connection and its Ricci tensor."""

    def __init__(self, coords, metric, oneform, m, params=None):
        self.x = sp.symbols(list(coords), real=True)
        n = self.n = len(coords)
        syms = {str(s): s for s in self.x}
        syms.update({k: sp.nsimplify(v) for k, v in (params or {}).items()})
        a = sp.zeros(n, n)
        for (i, j), s in metric.items():
            a[i, j] = a[j, i] = to_sympy(s, syms)
        b = sp.zeros(n, 1)
        for i, s in oneform.items():
            b[i] = to_sympy(s, syms)
        self.a, self.b, self.m = a, b, sp.nsimplify(m)
        self.ainv = sp.simplify(a.inv())

    def christoffel(self):
        x, n, a, ai = self.x, self.n, self.a, self.ainv
        return [[[sp.simplify(sum(ai[k, l] * (sp.diff(a[j, l], x[i]) + sp.diff(a[i, l], x[j])
                                              - sp.diff(a[i, j], x[l])) for l in range(n)) / 2)
                  for j in range(n)] for i in range(n)] for k in range(n)]

    def nabla_b(self):
        """C[i][j] = ∇_j b_i for the Levi-Civita connection."""
        G = self.christoffel()
        x, n, b = self.x, self.n, self.b
        return sp.Matrix(n, n, lambda i, j: sp.simplify(sp.diff(b[i], x[j]) - sum(G[k][j][i] * b[k] for k in range(n))))

    def solve_f(self):
        """Unique f with C_ij = m(f·b♯)a_ij + b_i f_j − m f_i b_j, by linear solve."""
        n, m, a, b = self.n, self.m, self.a, self.b
        C = self.nabla_b()
        f = sp.symbols(f"f0:{n}")
        bu = self.ainv * b
        fb = sum(f[k] * bu[k] for k in range(n))
        eqs = [C[i, j] - (m * fb * a[i, j] + b[i] * f[j] - m * f[i] * b[j]) for i in range(n) for j in range(n)]
        sol = sp.solve(eqs, f, dict=True)
        assert len(sol) == 1
        return [sp.simplify(sol[0].get(fk, fk)) for fk in f]

    def affine_gamma(self, f):
        G = self.christoffel()
        n, m, a, ai = self.n, self.m, self.a, self.ainv
        low = lambda k, i, j: m * (a[i, j] * f[k] - a[j, k] * f[i] - a[k, i] * f[j])
        return [[[sp.simplify(G[l][i][j] + sum(ai[l, k] * low(k, i, j) for k in range(n)))
                  for j in range(n)] for i in range(n)] for l in range(n)]

    def ricci(self, G):
        """R_lk = R^i_lik with R^k_lij = ∂_i Γ^k_jl − ∂_j Γ^k_il + Γ^k_im Γ^m_jl − Γ^k_jm Γ^m_il."""
        x, n = self.x, self.n

        def riem(k, l, i, j):
            return (sp.diff(G[k][j][l], x[i]) - sp.diff(G[k][i][l], x[j])
                    + sum(G[k][i][p] * G[p][j][l] - G[k][j][p] * G[p][i][l] for p in range(n)))

        return sp.Matrix(n, n, lambda l, k: sp.simplify(sum(riem(i, l, i, k) for i in range(n))))

    def at(self, expr, point):
        return expr.subs(dict(zip(self.x, point)))


def geometry_of(entry):
    sf = entry.specfile
    return Geometry(sf.coords, sf.metric, sf.oneform, sf.m, sf.params)
