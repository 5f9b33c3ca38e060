"""Second-order cone program container used by the SCA subproblem builder.

A ConicProgram is a maximize-form program over named scalar variables with
four constraint families:

  linear rows          sum_i a_i x_i <= b
  second-order cones   ||A x + d||_2 <= p.x + q
  rotated cones        ||A x + d||_2^2 <= 2 (s1.x + q1) (s2.x + q2)
  variable bounds      lb <= x <= ub

Rotated-cone scalar expressions must be provably nonnegative (constant,
or a positively weighted bounded variable, or an explicit linear row);
validate() enforces that.  canonical_form() lowers everything to the
standard conic feasibility shape  h - G x  in  R+^l x Q^(k1) x ... used by
the interior-point solver, with rotated cones rewritten as plain cones via
||u||^2 <= 2 s t  <=>  ||[sqrt(2) u; s - t]|| <= s + t.

The module also owns the polynomial second-order-cone approximation of the
constraint  vartheta >= exp(zeta) - 1  (exp_cone_rows) together with its
closed-form tight value (exp_chain_min), which tests use as an independent
oracle for the emitted rows.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Aff:
    """Affine scalar expression: sum(terms[i] * x[i]) + const."""

    terms: dict
    const: float = 0.0

    def value(self, x):
        return sum(c * x[i] for i, c in self.terms.items()) + self.const

    def dense(self, n):
        row = np.zeros(n)
        for i, c in self.terms.items():
            row[i] = c
        return row


def aff(terms=None, const=0.0):
    return Aff(dict(terms) if terms else {}, float(const))


@dataclass(frozen=True)
class LinearRow:
    lhs: Aff  # lhs.value(x) <= rhs
    rhs: float
    name: str = ""


@dataclass(frozen=True)
class SocRow:
    vec: tuple  # of Aff
    scalar: Aff
    name: str = ""


@dataclass(frozen=True)
class RotatedSocRow:
    vec: tuple  # of Aff
    scalar1: Aff
    scalar2: Aff
    name: str = ""


class ConicProgram:
    """Growable maximize-form SOCP; see module docstring for the families."""

    def __init__(self):
        self.var_names = []
        self.lower = []
        self.upper = []
        self.objective = {}  # var index -> coefficient, sense = maximize
        self.linear_rows = []
        self.soc_rows = []
        self.rsoc_rows = []

    @property
    def num_vars(self):
        return len(self.var_names)

    def add_var(self, name, lb=-math.inf, ub=math.inf):
        if ub < lb:
            raise ValueError(f"variable {name}: upper bound below lower bound")
        self.var_names.append(name)
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        return len(self.var_names) - 1

    def set_objective(self, terms):
        self.objective = {int(i): float(c) for i, c in terms.items()}

    def add_linear(self, terms, rhs, name=""):
        self.linear_rows.append(LinearRow(aff(terms), float(rhs), name))

    def add_soc(self, vec, scalar, name=""):
        self.soc_rows.append(SocRow(tuple(vec), scalar, name))

    def add_rsoc(self, vec, scalar1, scalar2, name=""):
        self.rsoc_rows.append(RotatedSocRow(tuple(vec), scalar1, scalar2, name))

    # -- validation -------------------------------------------------------

    def _check_indices(self, expr, where):
        for i in expr.terms:
            if not 0 <= i < self.num_vars:
                raise ValueError(f"{where}: variable index {i} out of range")

    def _nonneg_witness(self, expr):
        """True if expr >= 0 can be established without solving.

        Accepts constants, c*x_i + b with c > 0 and lb[i] >= -b/c, or an
        explicit linear row -expr <= 0 added by the caller.
        """
        if not expr.terms:
            return expr.const >= 0.0
        if len(expr.terms) == 1:
            ((i, c),) = expr.terms.items()
            if c > 0.0 and self.lower[i] >= -expr.const / c:
                return True
        for row in self.linear_rows:
            neg = {i: -c for i, c in expr.terms.items()}
            if row.lhs.terms == neg and row.rhs >= expr.const:
                return True
        return False

    def validate(self):
        if len(self.lower) != self.num_vars or len(self.upper) != self.num_vars:
            raise ValueError("bound arrays out of sync with variables")
        self._check_indices(aff(self.objective), "objective")
        for row in self.linear_rows:
            self._check_indices(row.lhs, f"linear row {row.name!r}")
        for row in self.soc_rows:
            for e in row.vec:
                self._check_indices(e, f"soc row {row.name!r}")
            self._check_indices(row.scalar, f"soc row {row.name!r}")
            if not row.vec:
                raise ValueError(f"soc row {row.name!r}: empty vector part")
        for row in self.rsoc_rows:
            for e in row.vec:
                self._check_indices(e, f"rotated row {row.name!r}")
            if not row.vec:
                raise ValueError(f"rotated row {row.name!r}: empty vector part")
            for sc, tag in ((row.scalar1, "scalar1"), (row.scalar2, "scalar2")):
                self._check_indices(sc, f"rotated row {row.name!r}")
                if not self._nonneg_witness(sc):
                    raise ValueError(
                        f"rotated row {row.name!r}: {tag} has no nonnegativity "
                        "witness (constant, bounded variable, or explicit row)"
                    )
        return self


# -- canonical conic form -------------------------------------------------


@dataclass
class CanonicalForm:
    """h - G x in R+^l x Q^(d1) x ... with per-row/block violation scales."""

    G: np.ndarray
    h: np.ndarray
    l: int
    soc_dims: list
    orthant_scale: np.ndarray  # (l,)
    block_scale: list  # one per SOC block
    c: np.ndarray  # maximize c.x
    _block_groups: list | None = None  # lazy dim-grouped indices for feas checks


def canonical_form(prog):
    n = prog.num_vars
    rows, rhs = [], []

    for row in prog.linear_rows:
        rows.append(row.lhs.dense(n))
        rhs.append(row.rhs - row.lhs.const)
    for i in range(n):
        if math.isfinite(prog.upper[i]):
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e)
            rhs.append(prog.upper[i])
        if math.isfinite(prog.lower[i]):
            e = np.zeros(n)
            e[i] = -1.0
            rows.append(e)
            rhs.append(-prog.lower[i])

    l = len(rows)
    G_orth = np.array(rows).reshape(l, n)
    h_orth = np.array(rhs, dtype=float)
    orthant_scale = np.maximum(
        1.0,
        np.maximum(
            np.abs(G_orth).max(axis=1, initial=0.0) if l else np.zeros(0),
            np.abs(h_orth),
        ),
    )

    blocks_G, blocks_h, soc_dims, block_scale = [], [], [], []

    def push_block(exprs):
        # exprs[0] is the cone scalar: h - Gx stacks (scalar, vec...)
        Gb = -np.array([e.dense(n) for e in exprs])
        hb = np.array([e.const for e in exprs], dtype=float)
        blocks_G.append(Gb)
        blocks_h.append(hb)
        soc_dims.append(len(exprs))
        block_scale.append(max(1.0, np.abs(Gb).max(initial=0.0), np.abs(hb).max(initial=0.0)))

    for row in prog.soc_rows:
        push_block([row.scalar, *row.vec])
    for row in prog.rsoc_rows:
        s1, s2 = row.scalar1, row.scalar2
        plus = aff(
            {i: s1.terms.get(i, 0.0) + s2.terms.get(i, 0.0) for i in {*s1.terms, *s2.terms}},
            s1.const + s2.const,
        )
        minus = aff(
            {i: s1.terms.get(i, 0.0) - s2.terms.get(i, 0.0) for i in {*s1.terms, *s2.terms}},
            s1.const - s2.const,
        )
        root2 = math.sqrt(2.0)
        scaled = [Aff({i: root2 * c for i, c in e.terms.items()}, root2 * e.const) for e in row.vec]
        push_block([plus, *scaled, minus])

    G = np.vstack([G_orth, *blocks_G]) if blocks_G else G_orth
    h = np.concatenate([h_orth, *blocks_h]) if blocks_h else h_orth

    c = np.zeros(n)
    for i, coef in prog.objective.items():
        c[i] = coef
    return CanonicalForm(G, h, l, soc_dims, orthant_scale, block_scale, c)


def feas_violation(canon, x):
    """Max normalized constraint violation of x (0 when feasible).

    Each orthant row is normalized by max(1, row inf-norm); each cone block
    by max(1, block inf-norm), so the value is meaningful across the wildly
    different coefficient magnitudes the SCA builder produces.
    """
    s = canon.h - canon.G @ x
    worst = 0.0
    if canon.l:
        worst = float(np.max(-s[: canon.l] / canon.orthant_scale))
    if canon.soc_dims:
        if canon._block_groups is None:
            groups = {}
            at = canon.l
            for k, dim in enumerate(canon.soc_dims):
                groups.setdefault(dim, ([], []))
                groups[dim][0].append(at)
                groups[dim][1].append(canon.block_scale[k])
                at += dim
            canon._block_groups = [
                (np.array(starts)[:, None] + np.arange(dim)[None, :], np.array(scales))
                for dim, (starts, scales) in sorted(groups.items())
            ]
        for idx, scales in canon._block_groups:
            blk = s[idx]
            viol = (
                np.sqrt(np.einsum("bi,bi->b", blk[:, 1:], blk[:, 1:])) - blk[:, 0]
            ) / scales
            worst = max(worst, float(viol.max()))
    return max(worst, 0.0)


def max_violation(prog, x):
    return feas_violation(canonical_form(prog), x)


def format_program(prog):
    """Human-readable dump (objective, rows, bounds) for debugging."""

    def fmt(expr):
        parts = [f"{c:+.6g}*{prog.var_names[i]}" for i, c in sorted(expr.terms.items())]
        if expr.const or not parts:
            parts.append(f"{expr.const:+.6g}")
        return " ".join(parts)

    out = [f"maximize {fmt(aff(prog.objective))}"]
    out.append(f"vars ({prog.num_vars}):")
    for i, name in enumerate(prog.var_names):
        out.append(f"  {name}: [{prog.lower[i]:.6g}, {prog.upper[i]:.6g}]")
    for row in prog.linear_rows:
        out.append(f"  lin  {row.name}: {fmt(row.lhs)} <= {row.rhs:.6g}")
    for row in prog.soc_rows:
        vec = ", ".join(fmt(e) for e in row.vec)
        out.append(f"  soc  {row.name}: ||[{vec}]|| <= {fmt(row.scalar)}")
    for row in prog.rsoc_rows:
        vec = ", ".join(fmt(e) for e in row.vec)
        out.append(
            f"  rsoc {row.name}: ||[{vec}]||^2 <= 2 ({fmt(row.scalar1)}) ({fmt(row.scalar2)})"
        )
    return "\n".join(out)


# -- exponential-cone approximation ---------------------------------------


def exp_cone_rows(prog, zeta_idx, vartheta_idx, q=4):
    """Append SOC rows approximating vartheta >= exp(zeta) - 1.

    Introduces q+4 slack variables kappa_1..kappa_{q+4}.  kappa_4 collects a
    degree-4 polynomial minorant of exp(zeta / 2^q) via three cone rows and
    one linear row; q successive squaring rows raise it back to exp(zeta);
    the final linear row couples the chain to vartheta.  Each cone row is
    the standard square embedding  t^2 <= 4 kappa  <=>
    ||[1 - kappa, t]|| <= 1 + kappa.  Tightness is characterized by
    exp_chain_min, which tests compare against exp(zeta).

    Returns the list of kappa variable indices.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    k = [prog.add_var(f"kappa{i + 1}", lb=0.0) for i in range(q + 4)]

    def square_row(t_expr, kappa_idx, name):
        prog.add_soc(
            [aff({kappa_idx: -1.0}, 1.0), t_expr],
            aff({kappa_idx: 1.0}, 1.0),
            name=name,
        )

    square_row(aff({zeta_idx: 2.0 ** (1 - q)}, 2.0), k[0], "exp-k1")
    square_row(aff({zeta_idx: 2.0 ** (-q)}, 5.0 / 3.0), k[1], "exp-k2")
    square_row(aff({k[0]: 2.0}), k[2], "exp-k3")
    prog.add_linear(
        {k[1]: 1.0, k[2]: 1.0 / 24.0, k[3]: -1.0}, -19.0 / 72.0, name="exp-k4"
    )
    for idx in range(4, q + 4):
        square_row(aff({k[idx - 1]: 2.0}), k[idx], f"exp-k{idx + 1}")
    prog.add_linear({k[q + 3]: 1.0, vartheta_idx: -1.0}, 1.0, name="exp-cap")
    return k


def exp_chain_min(zeta, q=4):
    """Tight kappa values of the exp_cone_rows chain at fixed zeta.

    kappa_4 evaluates to the degree-4 Taylor polynomial of exp at
    zeta / 2^q; q squarings give kappa_{q+4} ~= exp(zeta).  Returns the
    array [kappa_1, ..., kappa_{q+4}].
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    x = float(zeta) / 2.0**q
    ks = [(1.0 + x) ** 2, (5.0 / 6.0 + x / 2.0) ** 2]
    ks.append(ks[0] ** 2)
    ks.append(ks[1] + ks[2] / 24.0 + 19.0 / 72.0)
    for _ in range(q):
        ks.append(ks[-1] ** 2)
    return np.array(ks)
