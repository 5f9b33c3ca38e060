"""Dense primal-dual interior-point method for small second-order cone programs.

Implements a homogeneous self-dual embedding with Nesterov-Todd scaling and
a Mehrotra predictor-corrector step, specialized for the subproblems this
package builds: tens of variables, a nonnegative-orthant block (linear rows
and bounds) plus a handful of small second-order cones.  Everything is
dense numpy; given identical inputs the solver is bit-for-bit deterministic.

Internally the program is lowered to

    minimize f.x   s.t.   G x + s = h,   s in K = R+^l x Q^(d_1) x ...

and embedded as the homogeneous system

    G x + s - h tau = 0,   G'z + f tau = 0,   f.x + h.z + kappa = 0,

whose strictly complementary solutions either recover an optimal pair
(x, z)/tau when tau > 0 or certify infeasibility/unboundedness when
kappa > 0.  Newton systems are solved in the scaled-slack form

    [ 0   (W^-1 G)' ] [dx ]   [ bx ]
    [ W^-1 G    -I  ] [dz~] = [ W^-1 bz ],      dz = W^-1 dz~,

which keeps the KKT matrix an order better conditioned near degenerate
optima than the W^2 normal form, with static regularization, iterative
refinement and a rescue refactorization on singularity.  Ruiz
equilibration (block-uniform on cone rows) tames the wide coefficient
ranges produced by channel gains; convergence is declared on the ORIGINAL
problem's normalized residuals and absolute duality gap, so a result
marked optimal satisfies the advertised tolerances regardless of scaling.

Cone blocks are grouped by dimension so every per-block operation
(margins, boundary steps, scalings, Jordan algebra) runs as a few
vectorized numpy calls per group instead of a Python loop over blocks, and
the KKT matrix is LU-factored once per iteration and reused across the
predictor, corrector, and refinement back-solves.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .conic import canonical_form, feas_violation


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_ipm_iters: int = 100
    step_fraction: float = 0.99
    kkt_reg: float = 1e-10
    refine_steps: int = 2
    equilibrate_passes: int = 3


@dataclass
class SolveResult:
    """Outcome of one solve.

    feas_residual is the max normalized violation of the original program's
    constraints at x (conic.feas_violation); gap is the absolute duality
    gap estimate in objective units.  status == OPTIMAL guarantees
    feas_residual <= feas_tol and gap <= gap_tol.
    """

    status: SolveStatus
    x: np.ndarray | None
    objective: float
    feas_residual: float
    gap: float
    iterations: int
    message: str = ""


# -- cone layout helpers ----------------------------------------------------


class _Cone:
    """Orthant of size l followed by SOC blocks, grouped by block size."""

    def __init__(self, l, soc_dims):
        self.l = l
        self.dims = list(soc_dims)
        self.m = l + sum(soc_dims)
        self.degree = l + len(soc_dims)
        by_dim = {}
        at = l
        for d in soc_dims:
            by_dim.setdefault(d, []).append(at)
            at += d
        # per distinct dim: (starts, gather/scatter index of shape (nb, d))
        self.groups = [
            (np.array(starts), np.array(starts)[:, None] + np.arange(d)[None, :])
            for d, starts in sorted(by_dim.items())
        ]

    def unit(self):
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for starts, _ in self.groups:
            e[starts] = 1.0
        return e

    def margin(self, v):
        worst = float(v[: self.l].min()) if self.l else math.inf
        for _, idx in self.groups:
            blk = v[idx]
            mg = blk[:, 0] - np.sqrt(np.einsum("bi,bi->b", blk[:, 1:], blk[:, 1:]))
            worst = min(worst, float(mg.min()))
        return worst

    def max_step(self, v, dv):
        """Largest t >= 0 with v + t*dv still in the cone (v interior)."""
        best = math.inf
        if self.l:
            vv, dd = v[: self.l], dv[: self.l]
            neg = dd < 0
            if np.any(neg):
                best = float(np.min(-vv[neg] / dd[neg]))
        for _, idx in self.groups:
            P, D = v[idx], dv[idx]
            a = D[:, 0] ** 2 - np.einsum("bi,bi->b", D[:, 1:], D[:, 1:])
            b = 2.0 * (P[:, 0] * D[:, 0] - np.einsum("bi,bi->b", P[:, 1:], D[:, 1:]))
            c = P[:, 0] ** 2 - np.einsum("bi,bi->b", P[:, 1:], P[:, 1:])
            disc = b * b - 4.0 * a * c
            sq = np.sqrt(np.maximum(disc, 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                r1 = (-b - sq) / (2.0 * a)
                r2 = (-b + sq) / (2.0 * a)
                rlin = -c / b
                lin_cap = np.where(D[:, 0] < 0.0, -P[:, 0] / D[:, 0], np.inf)
            quad = np.abs(a) > 1e-300
            ok = quad & (disc >= 0.0)
            step = np.minimum(
                np.where(ok & (r1 > 0.0), r1, np.inf),
                np.where(ok & (r2 > 0.0), r2, np.inf),
            )
            step = np.where(quad, step, np.where(b < 0.0, rlin, np.inf))
            # keep the linear part nonnegative as a numerical backstop
            step = np.minimum(step, lin_cap)
            best = min(best, float(step.min()))
        return best


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lam, batched per group.

    SOC blocks use the structured form W = eta * M(wbar) with
    M = [[w0, w1'], [w1, I + w1 w1'/(1+w0)]] and W^{-1} = J M J / eta, so
    applications never materialize per-block matrices.
    """

    def __init__(self, cone, s, z):
        l = cone.l
        self.cone = cone
        self.w_orth = np.sqrt(s[:l] / z[:l]) if l else np.zeros(0)
        self.lam = np.empty(cone.m)
        self.lam[:l] = np.sqrt(s[:l] * z[:l])
        self.gw = []  # per group: (idx, eta (nb,), wbar (nb, d))
        for _, idx in cone.groups:
            S, Z = s[idx], z[idx]
            aa2 = S[:, 0] ** 2 - np.einsum("bi,bi->b", S[:, 1:], S[:, 1:])
            bb2 = Z[:, 0] ** 2 - np.einsum("bi,bi->b", Z[:, 1:], Z[:, 1:])
            if aa2.min() <= 0.0 or bb2.min() <= 0.0:
                raise FloatingPointError("iterate left the cone interior")
            aa, bb = np.sqrt(aa2), np.sqrt(bb2)
            sbar, zbar = S / aa[:, None], Z / bb[:, None]
            gamma = np.sqrt((1.0 + np.einsum("bi,bi->b", sbar, zbar)) / 2.0)
            wbar = np.empty_like(sbar)
            wbar[:, 0] = sbar[:, 0] + zbar[:, 0]
            wbar[:, 1:] = sbar[:, 1:] - zbar[:, 1:]
            wbar /= 2.0 * gamma[:, None]
            eta = np.sqrt(aa / bb)
            self.gw.append((idx, eta, wbar))
            self.lam[idx] = eta[:, None] * self._m_apply(wbar, Z)

    @staticmethod
    def _m_apply(wbar, V):
        """M(wbar) @ V rowwise for stacked blocks V of shape (nb, d)."""
        out = np.empty_like(V)
        out[:, 0] = np.einsum("bi,bi->b", wbar, V)
        coef = V[:, 0] + np.einsum("bi,bi->b", wbar[:, 1:], V[:, 1:]) / (1.0 + wbar[:, 0])
        out[:, 1:] = V[:, 1:] + coef[:, None] * wbar[:, 1:]
        return out

    def apply_w(self, v):
        out = np.empty_like(v)
        l = self.cone.l
        out[:l] = self.w_orth * v[:l]
        for idx, eta, wbar in self.gw:
            out[idx] = eta[:, None] * self._m_apply(wbar, v[idx])
        return out

    def apply_winv(self, v):
        out = np.empty_like(v)
        l = self.cone.l
        out[:l] = v[:l] / self.w_orth
        for idx, eta, wbar in self.gw:
            V = v[idx].copy()
            V[:, 1:] *= -1.0
            R = self._m_apply(wbar, V)
            R[:, 1:] *= -1.0
            out[idx] = R / eta[:, None]
        return out

    def apply_winv_mat(self, A):
        """W^{-1} @ A for an (m, n) matrix, batched per group."""
        out = np.empty_like(A)
        l = self.cone.l
        out[:l] = A[:l] / self.w_orth[:, None]
        for idx, eta, wbar in self.gw:
            V = A[idx].copy()  # (nb, d, n)
            V[:, 1:, :] *= -1.0
            coef = V[:, 0, :] + np.einsum("bi,bin->bn", wbar[:, 1:], V[:, 1:, :]) / (
                1.0 + wbar[:, 0][:, None]
            )
            R = np.empty_like(V)
            R[:, 0, :] = np.einsum("bi,bin->bn", wbar, V)
            R[:, 1:, :] = -(V[:, 1:, :] + coef[:, None, :] * wbar[:, 1:, None])
            out[idx] = R / eta[:, None, None]
        return out


def _jordan_mul(cone, u, v):
    out = np.empty(cone.m)
    l = cone.l
    out[:l] = u[:l] * v[:l]
    for _, idx in cone.groups:
        U, V = u[idx], v[idx]
        blk = np.empty_like(U)
        blk[:, 0] = np.einsum("bi,bi->b", U, V)
        blk[:, 1:] = U[:, 0][:, None] * V[:, 1:] + V[:, 0][:, None] * U[:, 1:]
        out[idx] = blk
    return out


def _jordan_solve(cone, lam, d):
    """u with lam o u = d (lam strictly interior)."""
    out = np.empty(cone.m)
    l = cone.l
    out[:l] = d[:l] / lam[:l]
    for _, idx in cone.groups:
        L, D = lam[idx], d[idx]
        det = L[:, 0] ** 2 - np.einsum("bi,bi->b", L[:, 1:], L[:, 1:])
        u0 = (L[:, 0] * D[:, 0] - np.einsum("bi,bi->b", L[:, 1:], D[:, 1:])) / det
        blk = np.empty_like(D)
        blk[:, 0] = u0
        blk[:, 1:] = (D[:, 1:] - u0[:, None] * L[:, 1:]) / L[:, 0][:, None]
        out[idx] = blk
    return out


# -- equilibration ----------------------------------------------------------


def _equilibrate(G, h, cone, passes):
    """Ruiz scaling; SOC blocks get one uniform row factor to stay conic."""
    m, n = G.shape
    dcol = np.ones(n)
    drow = np.ones(m)
    Gw = G.copy()
    for _ in range(passes):
        cn = np.abs(Gw).max(axis=0)
        cn[cn == 0.0] = 1.0
        cs = 1.0 / np.sqrt(cn)
        Gw *= cs[None, :]
        dcol *= cs
        rn = np.abs(Gw).max(axis=1)
        scale = np.empty(m)
        scale[: cone.l] = rn[: cone.l]
        for _, idx in cone.groups:
            scale[idx] = rn[idx].max(axis=1)[:, None]
        scale[scale == 0.0] = 1.0
        rs = 1.0 / np.sqrt(scale)
        Gw *= rs[:, None]
        drow *= rs
    return Gw, drow * h, dcol, drow


# -- main solver ------------------------------------------------------------


def solve_socp(prog, settings=None):
    """Solve a validated ConicProgram; see SolveResult for the contract."""
    settings = settings or SolverSettings()
    prog.validate()
    canon = canonical_form(prog)
    n = prog.num_vars
    cone = _Cone(canon.l, canon.soc_dims)
    m = cone.m

    if n == 0:
        return SolveResult(SolveStatus.OPTIMAL, np.zeros(0), 0.0, 0.0, 0.0, 0)
    if m == 0:
        if not np.any(canon.c):
            return SolveResult(SolveStatus.OPTIMAL, np.zeros(n), 0.0, 0.0, 0.0, 0)
        return SolveResult(
            SolveStatus.NUMERICAL_FAILURE, None, math.nan, math.inf, math.inf, 0,
            "no constraints: problem unbounded",
        )

    Gw, hw, dcol, drow = _equilibrate(canon.G, canon.h, cone, settings.equilibrate_passes)
    f = dcol * (-canon.c)
    obj_scale = max(1.0, float(np.abs(f).max()))
    f = f / obj_scale

    e = cone.unit()
    deg = cone.degree

    # least-squares start, shifted into the cone interior
    x = np.linalg.lstsq(Gw, hw, rcond=None)[0]
    s = hw - Gw @ x
    mrg = cone.margin(s)
    if mrg < 1e-9:
        s = s + (1.0 - mrg) * e
    z = np.linalg.lstsq(Gw.T, -f, rcond=None)[0]
    mrg = cone.margin(z)
    if mrg < 1e-9:
        z = z + (1.0 - mrg) * e
    tau, kappa = 1.0, 1.0

    best = None  # (score, x, pres, gap, it) of the best candidate seen

    def candidate():
        x_cand = dcol * x / tau
        pres = feas_violation(canon, x_cand)
        dres = float(np.abs(Gw.T @ (z / tau) + f).max())
        gap = obj_scale * float(s @ z) / (tau * tau)
        return x_cand, pres, dres, gap

    def track(x_cand, pres, dres, gap, it):
        nonlocal best
        score = max(pres / settings.feas_tol, dres / settings.feas_tol, gap / settings.gap_tol)
        if best is None or score < best[0]:
            best = (score, x_cand, pres, gap, it)

    def finish(status, iters, message=""):
        """Terminal wrap-up: promote the best candidate if it already met
        the advertised tolerances, otherwise report it with status."""
        if best is not None:
            score, x_cand, pres, gap, _ = best
            if score <= 1.0:
                return SolveResult(
                    SolveStatus.OPTIMAL, x_cand, float(canon.c @ x_cand), pres, gap, iters
                )
            if status is not SolveStatus.INFEASIBLE:
                return SolveResult(
                    status, x_cand, float(canon.c @ x_cand), pres, gap, iters, message
                )
        return SolveResult(status, None, math.nan, math.inf, math.inf, iters, message)

    step = settings.step_fraction
    K = np.zeros((n + m, n + m))
    diag = np.arange(n + m)
    probe = np.ones(n + m)
    K0 = np.zeros((n + m, n + m))

    def factor_kkt():
        """LU of the regularized KKT matrix; one rescue refactorization with
        a much larger shift if the first factorization is unusable."""
        for boost in (1.0, 1e6):
            reg = settings.kkt_reg * boost
            K[diag[:n], diag[:n]] = reg
            K[diag[n:], diag[n:]] = -1.0 - reg
            try:
                lu = lu_factor(K, check_finite=False)
            except Exception:
                continue
            if np.all(np.isfinite(lu_solve(lu, probe, check_finite=False))):
                return lu
        raise FloatingPointError("singular KKT system")

    def kkt_solve(lu, rhs):
        sol = lu_solve(lu, rhs, check_finite=False)
        for _ in range(settings.refine_steps):
            sol = sol + lu_solve(lu, rhs - K0 @ sol, check_finite=False)
        if not np.all(np.isfinite(sol)):
            raise FloatingPointError("non-finite KKT solution")
        return sol

    for it in range(settings.max_ipm_iters):
        vals = np.concatenate([x, s, z, [tau, kappa]])
        if not np.all(np.isfinite(vals)):
            return finish(SolveStatus.NUMERICAL_FAILURE, it, "non-finite iterate")

        Rd = Gw.T @ z + f * tau
        Rp = Gw @ x + s - hw * tau
        Rt = float(f @ x + hw @ z) + kappa
        mu = (float(s @ z) + tau * kappa) / (deg + 1)

        x_cand, pres, dres, gap = candidate()
        track(x_cand, pres, dres, gap, it)
        if pres <= settings.feas_tol and dres <= settings.feas_tol and gap <= settings.gap_tol:
            return SolveResult(
                SolveStatus.OPTIMAL, x_cand, float(canon.c @ x_cand), pres, gap, it
            )

        hz = float(hw @ z)
        if hz < 0.0 and float(np.linalg.norm(Gw.T @ z)) <= settings.feas_tol * (-hz):
            return SolveResult(
                SolveStatus.INFEASIBLE, None, math.nan, math.inf, math.inf, it,
                "primal infeasibility certificate found",
            )
        fx = float(f @ x)
        if fx < 0.0 and float(np.linalg.norm(Gw @ x + s)) <= settings.feas_tol * (-fx):
            return SolveResult(
                SolveStatus.NUMERICAL_FAILURE, None, math.nan, math.inf, math.inf, it,
                "dual infeasibility certificate: problem unbounded",
            )

        try:
            scal = _Scaling(cone, s, z)
        except FloatingPointError as exc:
            return finish(SolveStatus.NUMERICAL_FAILURE, it, str(exc))
        lam = scal.lam

        Gt = scal.apply_winv_mat(Gw)  # W^{-1} G
        ht = scal.apply_winv(hw)
        Rpt = scal.apply_winv(Rp)
        K[:n, n:] = Gt.T
        K[n:, :n] = Gt
        try:
            lu = factor_kkt()
        except FloatingPointError as exc:
            return finish(SolveStatus.NUMERICAL_FAILURE, it, str(exc))
        K0[:, :] = K
        K0[diag[:n], diag[:n]] = 0.0
        K0[diag[n:], diag[n:]] = -1.0

        try:
            # affine predictor plus the constant tau-elimination column
            rhs = np.empty((n + m, 2))
            rhs[:n, 0] = -Rd
            rhs[n:, 0] = -Rpt + lam
            rhs[:n, 1] = -f
            rhs[n:, 1] = ht
            sol = kkt_solve(lu, rhs)
        except FloatingPointError as exc:
            return finish(SolveStatus.NUMERICAL_FAILURE, it, str(exc))
        px, pzt = sol[:n, 0], sol[n:, 0]
        qx, qzt = sol[:n, 1], sol[n:, 1]

        denom = float(f @ qx + ht @ qzt) - kappa / tau
        if abs(denom) < 1e-300:
            return finish(SolveStatus.NUMERICAL_FAILURE, it, "degenerate tau pivot")

        dtau_a = (-Rt + kappa - float(f @ px + ht @ pzt)) / denom
        dzt_a = pzt + dtau_a * qzt
        ds_a = -scal.apply_w(lam + dzt_a)
        dz_a = scal.apply_winv(dzt_a)
        dkap_a = -kappa - (kappa / tau) * dtau_a

        alpha = min(
            cone.max_step(s, ds_a),
            cone.max_step(z, dz_a),
            -tau / dtau_a if dtau_a < 0 else math.inf,
            -kappa / dkap_a if dkap_a < 0 else math.inf,
            1.0,
        )
        mu_aff = (
            float((s + alpha * ds_a) @ (z + alpha * dz_a))
            + (tau + alpha * dtau_a) * (kappa + alpha * dkap_a)
        ) / (deg + 1)
        sigma = min(max(mu_aff / mu, 0.0), 1.0) ** 3

        # combined corrector direction; in scaled space W^{-1}ds_a = -(lam + dzt_a)
        d_s = (
            _jordan_mul(cone, lam, lam)
            + _jordan_mul(cone, -(lam + dzt_a), dzt_a)
            - sigma * mu * e
        )
        d_kap = tau * kappa + dtau_a * dkap_a - sigma * mu
        lam_ds = _jordan_solve(cone, lam, d_s)
        try:
            rhs1 = np.empty(n + m)
            rhs1[:n] = -(1.0 - sigma) * Rd
            rhs1[n:] = -(1.0 - sigma) * Rpt + lam_ds
            sol1 = kkt_solve(lu, rhs1)
        except FloatingPointError as exc:
            return finish(SolveStatus.NUMERICAL_FAILURE, it, str(exc))
        bt = -(1.0 - sigma) * Rt + d_kap / tau
        dtau = (bt - float(f @ sol1[:n] + ht @ sol1[n:])) / denom
        dzt = sol1[n:] + dtau * qzt
        dx = sol1[:n] + dtau * qx
        ds = -scal.apply_w(lam_ds + dzt)
        dz = scal.apply_winv(dzt)
        dkap = -(d_kap + kappa * dtau) / tau

        alpha = min(
            cone.max_step(s, ds),
            cone.max_step(z, dz),
            -tau / dtau if dtau < 0 else math.inf,
            -kappa / dkap if dkap < 0 else math.inf,
        )
        alpha = min(1.0, step * alpha)
        if alpha < 1e-10:
            return finish(SolveStatus.NUMERICAL_FAILURE, it, "step size collapsed")

        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap

    return finish(SolveStatus.ITERATION_LIMIT, settings.max_ipm_iters, "iteration limit reached")
