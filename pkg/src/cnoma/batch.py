"""Lockstep batch variant of the max-min solver for sweep workloads.

Monte-Carlo sweeps solve the same two-user subproblem shape for thousands
of independent channel draws.  Solving them one at a time leaves numpy
dispatch overhead as the dominant cost, so this module advances a whole
batch of instances through the approximation rounds and interior-point
iterations in lockstep: every array carries a leading batch axis,
instances that converge (or fail) drop out of the active set, and the
per-iteration linear algebra runs as a few batched BLAS/LAPACK calls
instead of thousands of tiny ones.

The algorithms are the ones in `ipm` and `sca`; only the execution layout
changes.  Each instance's arithmetic never mixes with its neighbours'
(all reductions run per instance), so results are reproducible for a
fixed batch and agree with per-instance `sca_solve` up to solver
tolerances.  The canonical matrices are built from a structural template
extracted via the scalar builder, with the handful of gain- and
anchor-dependent entries patched in per instance; tests pin the patched
matrices to the scalar builder entry for entry.

Two deliberate deviations from the scalar path, neither affecting the
advertised tolerances: the starting point comes from batched normal
equations instead of an SVD least-squares solve (both are heuristic
initializations), and the Newton systems are solved via the n x n Schur
complement of the scaled-slack KKT matrix with iterative refinement
against the unregularized system, instead of an LU of the full matrix.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelGains
from .conic import canonical_form
from .rates import Allocation, DecodingOrder, PowerBudgets, achievable_rates, min_rate
from .sca import _FLOOR, ScaConfig, ScaState, ScaTermination, build_subproblem

_ROOT2 = math.sqrt(2.0)

# variable slots shared by both decoding orders (see sca.build_subproblem)
_IAN, _IAF, _IBF, _IZ, _IVTH, _IU, _IV, _IAUX = range(8)


# -- canonical template -------------------------------------------------------


class _Layout:
    """Canonical-form template for one decoding order and chain depth.

    Splits the subproblem matrix into a structural part (identical across
    instances) and the instance-dependent entries, whose positions follow
    from the fixed row layout: linear rows, bound rows, then cone blocks.
    Values are computed with the same expressions as the scalar builder so
    the patched matrices match it bit for bit.
    """

    def __init__(self, order, q):
        self.order = order
        self.q = q
        l = 21 + q  # 6 linear rows + 15+q bound rows
        ue = l + 9 + 3 * q  # first row of the u-epigraph block
        ve = ue + 4
        we = ve + 4  # product-cap block under FUDF, w-epigraph under NUDF
        self.l = l
        if order is DecodingOrder.FUDF:
            rows = [1, 1, 1, 2, 3, 3, 3, 3, ue + 1, ue + 2, ve + 1, ve + 2]
            cols = [_IBF, _IU, _IV, _IAN, _IV, _IAUX, _IAF, _IBF, _IAF, _IVTH, _IAN, _IVTH]
        else:
            rows = [1, 1, 1, 2, 2, 2, 3, 3, ue + 1, ue + 2, ve + 1, ve + 2, we + 1, we + 2]
            cols = [_IBF, _IU, _IV, _IU, _IAUX, _IAN, _IAF, _IBF, _IAF, _IVTH, _IAN, _IVTH, _IBF, _IVTH]
        self.slot_rows = np.array(rows)
        self.slot_cols = np.array(cols)

        probe_a = self._probe(1.1, 0.9, 1.2, 0.6, (1.3, 0.7, 2.1, 0.9), (2.5, 1.7))
        probe_b = self._probe(0.4, 2.3, 0.8, 0.3, (0.6, 1.9, 0.4, 1.6), (40.0, 9.0))
        Ga, ha, canon = probe_a
        Gb, hb, _ = probe_b
        if not (np.array_equal(Ga, Gb) and np.array_equal(ha, hb)):
            raise AssertionError("canonical template depends on instance data")
        self.G0 = Ga
        self.h0 = ha
        self.nv = Ga.shape[1]
        self.m = Ga.shape[0]
        self.cone = _BatchCone(canon.l, canon.soc_dims)
        if canon.l != l or self.m != ue + (11 if order is DecodingOrder.FUDF else 12):
            raise AssertionError("canonical layout drifted from the expected row map")

    def _probe(self, a, b, c, lam, gains, budgets):
        """Scalar-built canonical matrices with the varying entries blanked,
        after checking each expected entry against its value formula."""
        state = ScaState(
            alloc=Allocation(0.2, 0.7, 1.0),
            zeta=0.1,
            vartheta=0.4,
            a=a,
            b=b,
            c=c if self.order is DecodingOrder.NUDF else None,
            lam=lam if self.order is DecodingOrder.FUDF else None,
        )
        gn, gf, gnf, gsi = gains
        pn, pf = budgets
        prog = build_subproblem(
            state,
            ChannelGains(gamma_n=gn, gamma_f=gf, gamma_nf=gnf, gamma_si=gsi),
            PowerBudgets(p_n_max=pn, p_f_max=pf),
            self.order,
            ScaConfig(q=self.q),
        )
        canon = canonical_form(prog)
        G = canon.G.copy()
        h = canon.h.copy()
        want = self._slot_values(
            np.array([gn]), np.array([gf]), np.array([gnf]), np.array([gsi]),
            pn, pf,
            np.array([a]), np.array([b]),
            np.array([c if self.order is DecodingOrder.NUDF else lam]),
        )[:, 0]
        got = G[self.slot_rows, self.slot_cols]
        if not np.array_equal(got, want):
            raise AssertionError("varying-entry positions do not match the scalar builder")
        G[self.slot_rows, self.slot_cols] = 0.0
        if self.order is DecodingOrder.FUDF:
            cross = pn * pf * gn * gf
            if h[3] != -lam * lam * cross:
                raise AssertionError("far-rate right-hand side mismatch")
            h[3] = 0.0
        return G, h, canon

    def _slot_values(self, gn, gf, gnf, gsi, pn, pf, a, b, aux):
        """Instance-dependent matrix entries, one column per instance.

        `aux` is the product-underestimate reference under FUDF and the
        beta_f/vartheta ratio root under NUDF.  Expressions deliberately
        mirror the scalar builder token for token.
        """
        if self.order is DecodingOrder.FUDF:
            cross = pn * pf * gn * gf
            vals = [
                -pf * gnf, pn * gsi, pn * gsi, -pn * gn,
                pn * gn, -2.0 * aux * cross, -pn * gn, -pf * gf,
                -(_ROOT2 * (1.0 / a)), -(_ROOT2 * a), -(_ROOT2 * (1.0 / b)), -(_ROOT2 * b),
            ]
        else:
            vals = [
                -pf * gnf, pn * gsi, pn * gsi,
                pn * gn, pf * gf, -pn * gn, -pn * gn, -pf * gf,
                -(_ROOT2 * (1.0 / a)), -(_ROOT2 * a), -(_ROOT2 * (1.0 / b)), -(_ROOT2 * b),
                -(_ROOT2 * (1.0 / aux)), -(_ROOT2 * aux),
            ]
        return np.stack(np.broadcast_arrays(*vals))

    def fill(self, gains, budgets, a, b, aux):
        """Materialize canonical matrices for a batch of instances.

        Returns (G, h, orthant_scale, block_scales) where the scales are
        the feasibility normalizers of `conic.canonical_form`.
        """
        gn, gf, gnf, gsi = gains
        T = gn.shape[0]
        pn, pf = budgets.p_n_max, budgets.p_f_max
        G = np.repeat(self.G0[None, :, :], T, axis=0)
        h = np.repeat(self.h0[None, :], T, axis=0)
        G[:, self.slot_rows, self.slot_cols] = self._slot_values(
            gn, gf, gnf, gsi, pn, pf, a, b, aux
        ).T
        if self.order is DecodingOrder.FUDF:
            cross = pn * pf * gn * gf
            h[:, 3] = -aux * aux * cross
        l = self.l
        orth = np.maximum(
            1.0, np.maximum(np.abs(G[:, :l, :]).max(axis=2), np.abs(h[:, :l]))
        )
        blocks = []
        for _, idx in self.cone.groups:
            gmax = np.abs(G[:, idx, :]).max(axis=(2, 3))
            hmax = np.abs(h[:, idx]).max(axis=2)
            blocks.append(np.maximum(1.0, np.maximum(gmax, hmax)))
        return G, h, orth, blocks


_LAYOUTS = {}


def _layout_for(order, q):
    key = (order, q)
    if key not in _LAYOUTS:
        _LAYOUTS[key] = _Layout(order, q)
    return _LAYOUTS[key]


# -- batched cone operations --------------------------------------------------


class _BatchCone:
    """Orthant of size l plus SOC blocks; operands carry a leading batch axis."""

    def __init__(self, l, soc_dims):
        self.l = l
        self.m = l + sum(soc_dims)
        self.degree = l + len(soc_dims)
        by_dim = {}
        at = l
        for d in soc_dims:
            by_dim.setdefault(d, []).append(at)
            at += d
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
        worst = v[:, : self.l].min(axis=1)
        for _, idx in self.groups:
            blk = v[:, idx]
            mg = blk[..., 0] - np.sqrt((blk[..., 1:] ** 2).sum(axis=-1))
            worst = np.minimum(worst, mg.min(axis=1))
        return worst

    def max_step(self, v, dv):
        """Per-instance largest t >= 0 with v + t*dv still in the cone."""
        vv, dd = v[:, : self.l], dv[:, : self.l]
        best = np.where(dd < 0.0, -vv / dd, np.inf).min(axis=1)
        for _, idx in self.groups:
            P, D = v[:, idx], dv[:, idx]
            a = D[..., 0] ** 2 - (D[..., 1:] ** 2).sum(axis=-1)
            b = 2.0 * (P[..., 0] * D[..., 0] - (P[..., 1:] * D[..., 1:]).sum(axis=-1))
            c = P[..., 0] ** 2 - (P[..., 1:] ** 2).sum(axis=-1)
            disc = b * b - 4.0 * a * c
            sq = np.sqrt(np.maximum(disc, 0.0))
            r1 = (-b - sq) / (2.0 * a)
            r2 = (-b + sq) / (2.0 * a)
            rlin = -c / b
            lin_cap = np.where(D[..., 0] < 0.0, -P[..., 0] / D[..., 0], np.inf)
            quad = np.abs(a) > 1e-300
            ok = quad & (disc >= 0.0)
            step = np.minimum(
                np.where(ok & (r1 > 0.0), r1, np.inf),
                np.where(ok & (r2 > 0.0), r2, np.inf),
            )
            step = np.where(quad, step, np.where(b < 0.0, rlin, np.inf))
            step = np.minimum(step, lin_cap)
            best = np.minimum(best, step.min(axis=1))
        return best


class _BatchScaling:
    """Nesterov-Todd scaling per instance; see ipm._Scaling for the algebra.

    Instances whose (s, z) pair has left the cone interior are flagged in
    `bad` instead of raising; their rows carry NaNs and must be retired by
    the caller before the next iteration.
    """

    def __init__(self, cone, s, z):
        l = cone.l
        self.cone = cone
        self.w_orth = np.sqrt(s[:, :l] / z[:, :l])
        self.lam = np.empty_like(s)
        self.lam[:, :l] = np.sqrt(s[:, :l] * z[:, :l])
        self.gw = []
        bad = np.zeros(s.shape[0], dtype=bool)
        for _, idx in cone.groups:
            S, Z = s[:, idx], z[:, idx]
            aa2 = S[..., 0] ** 2 - (S[..., 1:] ** 2).sum(axis=-1)
            bb2 = Z[..., 0] ** 2 - (Z[..., 1:] ** 2).sum(axis=-1)
            bad |= (aa2 <= 0.0).any(axis=1) | (bb2 <= 0.0).any(axis=1)
            aa, bb = np.sqrt(aa2), np.sqrt(bb2)
            sbar, zbar = S / aa[..., None], Z / bb[..., None]
            gamma = np.sqrt((1.0 + (sbar * zbar).sum(axis=-1)) / 2.0)
            wbar = np.empty_like(sbar)
            wbar[..., 0] = sbar[..., 0] + zbar[..., 0]
            wbar[..., 1:] = sbar[..., 1:] - zbar[..., 1:]
            wbar /= 2.0 * gamma[..., None]
            eta = np.sqrt(aa / bb)
            self.gw.append((idx, eta, wbar))
            self.lam[:, idx] = eta[..., None] * self._m_apply(wbar, Z)
        self.bad = bad

    @staticmethod
    def _m_apply(wbar, V):
        out = np.empty_like(V)
        out[..., 0] = (wbar * V).sum(axis=-1)
        coef = V[..., 0] + (wbar[..., 1:] * V[..., 1:]).sum(axis=-1) / (1.0 + wbar[..., 0])
        out[..., 1:] = V[..., 1:] + coef[..., None] * wbar[..., 1:]
        return out

    def apply_w(self, v):
        out = np.empty_like(v)
        l = self.cone.l
        out[:, :l] = self.w_orth * v[:, :l]
        for idx, eta, wbar in self.gw:
            out[:, idx] = eta[..., None] * self._m_apply(wbar, v[:, idx])
        return out

    def apply_winv(self, v):
        out = np.empty_like(v)
        l = self.cone.l
        out[:, :l] = v[:, :l] / self.w_orth
        for idx, eta, wbar in self.gw:
            V = v[:, idx].copy()
            V[..., 1:] *= -1.0
            R = self._m_apply(wbar, V)
            R[..., 1:] *= -1.0
            out[:, idx] = R / eta[..., None]
        return out

    def apply_winv_mat(self, A):
        """W^{-1} @ A for stacked (T, m, n) matrices."""
        out = np.empty_like(A)
        l = self.cone.l
        out[:, :l, :] = A[:, :l, :] / self.w_orth[:, :, None]
        for idx, eta, wbar in self.gw:
            V = A[:, idx, :].copy()  # (T, nb, d, n)
            V[:, :, 1:, :] *= -1.0
            coef = V[:, :, 0, :] + np.einsum("tbi,tbin->tbn", wbar[..., 1:], V[:, :, 1:, :]) / (
                1.0 + wbar[..., 0]
            )[..., None]
            R = np.empty_like(V)
            R[:, :, 0, :] = np.einsum("tbi,tbin->tbn", wbar, V)
            R[:, :, 1:, :] = -(V[:, :, 1:, :] + coef[:, :, None, :] * wbar[..., 1:, None])
            out[:, idx, :] = R / eta[..., None, None]
        return out


def _jordan_mul(cone, u, v):
    out = np.empty_like(u)
    l = cone.l
    out[:, :l] = u[:, :l] * v[:, :l]
    for _, idx in cone.groups:
        U, V = u[:, idx], v[:, idx]
        blk = np.empty_like(U)
        blk[..., 0] = (U * V).sum(axis=-1)
        blk[..., 1:] = U[..., 0, None] * V[..., 1:] + V[..., 0, None] * U[..., 1:]
        out[:, idx] = blk
    return out


def _jordan_solve(cone, lam, d):
    out = np.empty_like(d)
    l = cone.l
    out[:, :l] = d[:, :l] / lam[:, :l]
    for _, idx in cone.groups:
        L, D = lam[:, idx], d[:, idx]
        det = L[..., 0] ** 2 - (L[..., 1:] ** 2).sum(axis=-1)
        u0 = (L[..., 0] * D[..., 0] - (L[..., 1:] * D[..., 1:]).sum(axis=-1)) / det
        blk = np.empty_like(D)
        blk[..., 0] = u0
        blk[..., 1:] = (D[..., 1:] - u0[..., None] * L[..., 1:]) / L[..., 0, None]
        out[:, idx] = blk
    return out


def _equilibrate(G, h, cone, passes):
    """Batched Ruiz scaling, block-uniform on cone rows (see ipm._equilibrate)."""
    T, m, n = G.shape
    dcol = np.ones((T, n))
    drow = np.ones((T, m))
    Gw = G.copy()
    for _ in range(passes):
        cn = np.abs(Gw).max(axis=1)
        cn[cn == 0.0] = 1.0
        cs = 1.0 / np.sqrt(cn)
        Gw *= cs[:, None, :]
        dcol *= cs
        rn = np.abs(Gw).max(axis=2)
        scale = rn.copy()
        for _, idx in cone.groups:
            scale[:, idx] = rn[:, idx].max(axis=2)[:, :, None]
        scale[scale == 0.0] = 1.0
        rs = 1.0 / np.sqrt(scale)
        Gw *= rs[:, :, None]
        drow *= rs
    return Gw, drow * h, dcol, drow


def _feas(G, h, orth_scale, blk_scales, cone, x):
    """Batched mirror of conic.feas_violation at the candidate points x."""
    s = h - np.matmul(G, x[:, :, None])[:, :, 0]
    worst = (-s[:, : cone.l] / orth_scale).max(axis=1)
    for (_, idx), bs in zip(cone.groups, blk_scales):
        blk = s[:, idx]
        viol = (np.sqrt((blk[..., 1:] ** 2).sum(axis=-1)) - blk[..., 0]) / bs
        worst = np.maximum(worst, viol.max(axis=1))
    return np.maximum(worst, 0.0)


# -- batched interior-point solver --------------------------------------------


def _matvec(A, v):
    return np.matmul(A, v[:, :, None])[:, :, 0]


def _matvec_t(A, v):
    return np.matmul(A.swapaxes(1, 2), v[:, :, None])[:, :, 0]


def _dot(u, v):
    return (u * v).sum(axis=1)


def _solve_lockstep(G, h, c_obj, cone, orth_scale, blk_scales, settings):
    """Drive every instance of the batch to a terminal state.

    Mirrors ipm.solve_socp decision for decision (residual definitions,
    certificate tests, best-candidate promotion); returns (ok, x) where
    ok marks instances solved to the advertised tolerances and x holds
    their solutions in original variable units.
    """
    T, m, n = G.shape
    out_ok = np.zeros(T, dtype=bool)
    out_x = np.full((T, n), np.nan)
    if T == 0:
        return out_ok, out_x
    ftol, gtol = settings.feas_tol, settings.gap_tol
    reg0 = settings.kkt_reg
    dn = np.arange(n)
    e = cone.unit()
    deg = cone.degree

    best_score = np.full(T, np.inf)
    best_x = np.full((T, n), np.nan)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        Gw, hw, dcol, _ = _equilibrate(G, h, cone, settings.equilibrate_passes)
        f = dcol * (-c_obj)[None, :]
        obj_scale = np.maximum(1.0, np.abs(f).max(axis=1))
        f = f / obj_scale[:, None]

        # normal-equation starting point, shifted into the cone interior
        GtG = np.matmul(Gw.swapaxes(1, 2), Gw)
        GtG[:, dn, dn] += 1e-12
        try:
            sol0 = np.linalg.solve(GtG, np.stack([_matvec_t(Gw, hw), -f], axis=2))
            x = sol0[:, :, 0]
            z = _matvec(Gw, sol0[:, :, 1])
        except np.linalg.LinAlgError:
            x = np.zeros((T, n))
            z = np.zeros((T, m))
        s = hw - _matvec(Gw, x)
        mrg = cone.margin(s)
        s += np.where(mrg < 1e-9, 1.0 - mrg, 0.0)[:, None] * e[None, :]
        mrg = cone.margin(z)
        z += np.where(mrg < 1e-9, 1.0 - mrg, 0.0)[:, None] * e[None, :]
        tau = np.ones(T)
        kap = np.ones(T)
        act = np.arange(T)

        for _ in range(settings.max_ipm_iters):
            finite = (
                np.isfinite(x).all(axis=1)
                & np.isfinite(s).all(axis=1)
                & np.isfinite(z).all(axis=1)
                & np.isfinite(tau)
                & np.isfinite(kap)
            )

            Gtz = _matvec_t(Gw, z)
            Gx = _matvec(Gw, x)

            x_cand = dcol * x / tau[:, None]
            pres = _feas(G, h, orth_scale, blk_scales, cone, x_cand)
            dres = np.abs(Gtz / tau[:, None] + f).max(axis=1)
            gap = obj_scale * _dot(s, z) / (tau * tau)
            score = np.maximum(pres / ftol, np.maximum(dres / ftol, gap / gtol))
            upd = finite & (score < best_score[act])
            gidx = act[upd]
            best_score[gidx] = score[upd]
            best_x[gidx] = x_cand[upd]

            conv = finite & (pres <= ftol) & (dres <= ftol) & (gap <= gtol)
            out_ok[act[conv]] = True
            out_x[act[conv]] = x_cand[conv]

            hz = _dot(hw, z)
            gtz = np.linalg.norm(Gtz, axis=1)
            infeas = finite & ~conv & (hz < 0.0) & (gtz <= ftol * (-hz))
            fx = _dot(f, x)
            gxs = np.linalg.norm(Gx + s, axis=1)
            unbnd = finite & ~conv & ~infeas & (fx < 0.0) & (gxs <= ftol * (-fx))
            hardfail = ~finite

            scal = _BatchScaling(cone, s, z)
            hardfail |= scal.bad
            lam = scal.lam
            Gt = scal.apply_winv_mat(Gw)
            ht = scal.apply_winv(hw)

            Rd = Gtz + f * tau[:, None]
            Rp = Gx + s - hw * tau[:, None]
            Rt = _dot(f, x) + _dot(hw, z) + kap
            mu = (_dot(s, z) + tau * kap) / (deg + 1)
            Rpt = scal.apply_winv(Rp)

            # Schur complement of the scaled-slack KKT system in x-space
            S = np.matmul(Gt.swapaxes(1, 2), Gt)
            S_diag = S[:, dn, dn].copy()
            reg = np.full(act.size, reg0)
            S[:, dn, dn] = S_diag + reg0 * (1.0 + reg0)
            settled = conv | infeas | unbnd | hardfail
            S[settled] = np.eye(n)[None, :, :]
            try:
                Sinv = np.linalg.inv(S)
            except np.linalg.LinAlgError:
                Sinv = np.empty_like(S)
                for i in range(act.size):
                    try:
                        Sinv[i] = np.linalg.inv(S[i])
                    except np.linalg.LinAlgError:
                        Sinv[i] = np.nan
            bad = ~np.isfinite(Sinv).all(axis=(1, 2)) & ~settled
            for i in np.flatnonzero(bad):
                boosted = reg0 * 1e6
                Si = np.matmul(Gt[i].T, Gt[i])
                Si[dn, dn] += boosted * (1.0 + boosted)
                try:
                    inv_i = np.linalg.inv(Si)
                except np.linalg.LinAlgError:
                    continue
                if np.isfinite(inv_i).all():
                    Sinv[i] = inv_i
                    reg[i] = boosted
                    bad[i] = False
            hardfail |= bad

            def kkt_solve(bx, bz):
                """Solve the scaled-slack KKT system for stacked right-hand
                sides (T, n, k)/(T, m, k), refining against the
                unregularized matrix."""
                rx = (1.0 + reg)[:, None, None] * bx + np.matmul(Gt.swapaxes(1, 2), bz)
                dx = np.matmul(Sinv, rx)
                dz = (np.matmul(Gt, dx) - bz) / (1.0 + reg)[:, None, None]
                for _ in range(settings.refine_steps):
                    ex = bx - np.matmul(Gt.swapaxes(1, 2), dz)
                    ez = bz - np.matmul(Gt, dx) + dz
                    cx = np.matmul(Sinv, (1.0 + reg)[:, None, None] * ex + np.matmul(Gt.swapaxes(1, 2), ez))
                    cz = (np.matmul(Gt, cx) - ez) / (1.0 + reg)[:, None, None]
                    dx = dx + cx
                    dz = dz + cz
                return dx, dz

            bx = np.stack([-Rd, -f], axis=2)
            bz = np.stack([-Rpt + lam, ht], axis=2)
            sx, sz = kkt_solve(bx, bz)
            px, pzt = sx[:, :, 0], sz[:, :, 0]
            qx, qzt = sx[:, :, 1], sz[:, :, 1]

            denom = _dot(f, qx) + _dot(ht, qzt) - kap / tau
            dgn = np.abs(denom) < 1e-300
            hardfail |= dgn
            denom = np.where(dgn, 1.0, denom)

            dtau_a = (-Rt + kap - (_dot(f, px) + _dot(ht, pzt))) / denom
            dzt_a = pzt + dtau_a[:, None] * qzt
            ds_a = -scal.apply_w(lam + dzt_a)
            dz_a = scal.apply_winv(dzt_a)
            dkap_a = -kap - (kap / tau) * dtau_a

            alpha = np.minimum(
                np.minimum(cone.max_step(s, ds_a), cone.max_step(z, dz_a)),
                np.minimum(
                    np.where(dtau_a < 0.0, -tau / dtau_a, np.inf),
                    np.where(dkap_a < 0.0, -kap / dkap_a, np.inf),
                ),
            )
            alpha = np.minimum(alpha, 1.0)
            mu_aff = (
                _dot(s + alpha[:, None] * ds_a, z + alpha[:, None] * dz_a)
                + (tau + alpha * dtau_a) * (kap + alpha * dkap_a)
            ) / (deg + 1)
            sigma = np.clip(mu_aff / mu, 0.0, 1.0) ** 3

            d_s = (
                _jordan_mul(cone, lam, lam)
                + _jordan_mul(cone, -(lam + dzt_a), dzt_a)
                - (sigma * mu)[:, None] * e[None, :]
            )
            d_kap = tau * kap + dtau_a * dkap_a - sigma * mu
            lam_ds = _jordan_solve(cone, lam, d_s)
            bx1 = (-(1.0 - sigma))[:, None] * Rd
            bz1 = (-(1.0 - sigma))[:, None] * Rpt + lam_ds
            s1x, s1z = kkt_solve(bx1[:, :, None], bz1[:, :, None])
            s1x, s1z = s1x[:, :, 0], s1z[:, :, 0]
            bt = -(1.0 - sigma) * Rt + d_kap / tau
            dtau = (bt - (_dot(f, s1x) + _dot(ht, s1z))) / denom
            dzt = s1z + dtau[:, None] * qzt
            dx = s1x + dtau[:, None] * qx
            ds = -scal.apply_w(lam_ds + dzt)
            dz = scal.apply_winv(dzt)
            dkap = -(d_kap + kap * dtau) / tau

            alpha = np.minimum(
                np.minimum(cone.max_step(s, ds), cone.max_step(z, dz)),
                np.minimum(
                    np.where(dtau < 0.0, -tau / dtau, np.inf),
                    np.where(dkap < 0.0, -kap / dkap, np.inf),
                ),
            )
            alpha = np.minimum(1.0, settings.step_fraction * alpha)
            hardfail |= np.less(alpha, 1e-10)

            hf = hardfail & ~conv & ~infeas & ~unbnd
            hidx = act[hf]
            promote = best_score[hidx] <= 1.0
            out_ok[hidx[promote]] = True
            out_x[hidx] = best_x[hidx]
            out_x[hidx[~promote]] = np.nan

            keep = ~(conv | infeas | unbnd | hf)
            x = x + alpha[:, None] * dx
            s = s + alpha[:, None] * ds
            z = z + alpha[:, None] * dz
            tau = tau + alpha * dtau
            kap = kap + alpha * dkap

            if not keep.all():
                act = act[keep]
                if act.size == 0:
                    break
                G, h, Gw, hw = G[keep], h[keep], Gw[keep], hw[keep]
                dcol, f, obj_scale = dcol[keep], f[keep], obj_scale[keep]
                orth_scale = orth_scale[keep]
                blk_scales = [bs[keep] for bs in blk_scales]
                x, s, z, tau, kap = x[keep], s[keep], z[keep], tau[keep], kap[keep]

        # iteration cap: promote whichever candidates already met tolerance
        promote = best_score[act] <= 1.0
        out_ok[act[promote]] = True
        out_x[act[promote]] = best_x[act[promote]]
    return out_ok, out_x


# -- batched approximation loop -----------------------------------------------


@dataclass
class ScaBatchOutcome:
    """Per-instance results of a lockstep run; arrays share one batch axis.

    allocation holds array fields; termination holds ScaTermination values;
    feasible/margin_min summarize the recomputed-rate check that
    sca.verify_feasibility performs per instance (tolerance 1e-3).
    """

    allocation: Allocation
    zeta: np.ndarray
    min_rate: np.ndarray
    iterations: np.ndarray
    termination: np.ndarray
    feasible: np.ndarray
    margin_min: np.ndarray


def _project_batch(an, af, bf):
    """Vectorized mirror of rates.project_allocation."""
    an = np.clip(an, 0.0, 1.0)
    af = np.clip(af, 0.0, 1.0)
    ssum = an + af
    over = ssum > 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        an_s = np.where(over, an / ssum, an)
        af_s = np.where(over, af / ssum, af)
    af_s = np.where(over, np.minimum(af_s, 1.0 - an_s), af_s)
    return an_s, af_s, np.clip(bf, 0.0, 1.0)


def _anchor_params(an, af, bf, vth, order):
    an = np.maximum(an, _FLOOR)
    af = np.maximum(af, _FLOOR)
    bf = np.maximum(bf, _FLOOR)
    a = np.sqrt(af / vth)
    b = np.sqrt(an / vth)
    if order is DecodingOrder.NUDF:
        return a, b, np.sqrt(bf / vth)
    return a, b, np.sqrt(an * bf)


def _log_params(a, b, aux, order):
    cols = np.zeros((a.shape[0], 4))
    cols[:, 0] = np.log(a)
    cols[:, 1] = np.log(b)
    if order is DecodingOrder.NUDF:
        cols[:, 2] = np.log(aux)
    else:
        cols[:, 3] = np.log(np.maximum(aux, 1e-12))
    return cols


def sca_solve_batch(gains, budgets, order, config=None):
    """Lockstep equivalent of sca.sca_solve over a batch of channel draws.

    gains is a ChannelGains whose fields are one-dimensional arrays of a
    common length T; budgets apply to every instance.  Returns a
    ScaBatchOutcome whose arrays line up with the gains axis.  Instances
    follow the exact decision sequence of the scalar loop: guarded
    momentum extrapolation with same-round fallback to the plain anchor,
    bound-increment convergence declared only on plain-anchor rounds, and
    best-iterate tracking by exactly recomputed min rate.
    """
    config = config or ScaConfig()
    gn = np.asarray(gains.gamma_n, dtype=float)
    gf = np.asarray(gains.gamma_f, dtype=float)
    gnf = np.asarray(gains.gamma_nf, dtype=float)
    gsi = np.asarray(gains.gamma_si, dtype=float)
    T = gn.shape[0]
    layout = _layout_for(order, config.q)
    c_obj = np.zeros(layout.nv)
    c_obj[_IZ] = 1.0

    def exact_of(an, af, bf, idx):
        alloc = Allocation(alpha_n=an, alpha_f=af, beta_f=bf)
        sub = ChannelGains(
            gamma_n=gn[idx], gamma_f=gf[idx], gamma_nf=gnf[idx], gamma_si=gsi[idx]
        )
        return np.asarray(min_rate(alloc, budgets, sub, order), dtype=float)

    # fixed interior starting allocation; bound starts at its exact min rate
    ones = np.ones(T)
    an0, af0, bf0 = 0.2 * ones, 0.8 * ones, ones.copy()
    zeta0 = exact_of(an0, af0, bf0, slice(None))
    vth0 = np.maximum(np.expm1(zeta0), config.vartheta_floor)
    a_pl, b_pl, x_pl = _anchor_params(an0, af0, bf0, vth0, order)

    best_an, best_af, best_bf = an0.copy(), af0.copy(), bf0.copy()
    best_exact = zeta0.copy()
    best_zeta = zeta0.copy()

    a_use, b_use, x_use = a_pl.copy(), b_pl.copy(), x_pl.copy()
    extrapolated = np.zeros(T, dtype=bool)
    prev_log = np.zeros((T, 4))
    prev_log_set = np.zeros(T, dtype=bool)
    prev_bound = np.zeros(T)
    prev_bound_set = np.zeros(T, dtype=bool)

    iterations = np.zeros(T, dtype=int)
    term = np.full(T, ScaTermination.MAX_ITERS, dtype=object)
    active = np.ones(T, dtype=bool)

    for it in range(config.max_iters):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        G, h, orth, blocks = layout.fill(
            (gn[act], gf[act], gnf[act], gsi[act]), budgets, a_use[act], b_use[act], x_use[act]
        )
        ok, xs = _solve_lockstep(G, h, c_obj, layout.cone, orth, blocks, config.solver)

        # extrapolated anchors that failed or did not clearly beat the
        # previous bound fall back to the plain anchor within the round
        gain = xs[:, _IZ] - prev_bound[act]
        fb = extrapolated[act] & (~ok | ~(gain > config.epsilon))
        if fb.any():
            ridx = act[fb]
            G2, h2, orth2, blocks2 = layout.fill(
                (gn[ridx], gf[ridx], gnf[ridx], gsi[ridx]),
                budgets,
                a_pl[ridx],
                b_pl[ridx],
                x_pl[ridx],
            )
            ok2, xs2 = _solve_lockstep(
                G2, h2, c_obj, layout.cone, orth2, blocks2, config.solver
            )
            ok[fb] = ok2
            xs[fb] = xs2
            extrapolated[ridx] = False

        fail = ~ok
        if fail.any():
            fidx = act[fail]
            term[fidx] = ScaTermination.SUBPROBLEM_FAILURE
            active[fidx] = False
        live = act[ok]
        if live.size == 0:
            continue
        xs = xs[ok]
        iterations[live] = it + 1

        bound = xs[:, _IZ]
        an, af, bf = _project_batch(xs[:, _IAN], xs[:, _IAF], xs[:, _IBF])
        exact = exact_of(an, af, bf, live)
        upd = exact > best_exact[live]
        uidx = live[upd]
        best_an[uidx], best_af[uidx], best_bf[uidx] = an[upd], af[upd], bf[upd]
        best_exact[uidx] = exact[upd]
        best_zeta[uidx] = bound[upd]

        conv = (
            ~extrapolated[live]
            & prev_bound_set[live]
            & (bound - prev_bound[live] <= config.epsilon)
        )
        cidx = live[conv]
        term[cidx] = ScaTermination.CONVERGED
        active[cidx] = False

        surv = live[~conv]
        if surv.size == 0:
            continue
        ks = ~conv
        vth = np.maximum(xs[ks, _IVTH], config.vartheta_floor)
        a_new, b_new, x_new = _anchor_params(an[ks], af[ks], bf[ks], vth, order)
        a_pl[surv], b_pl[surv], x_pl[surv] = a_new, b_new, x_new
        cur_log = _log_params(a_new, b_new, x_new, order)

        momentum_on = prev_log_set[surv] & (config.momentum > 0.0)
        ext = np.clip(
            cur_log + config.momentum * (cur_log - prev_log[surv]),
            -config.momentum_clip,
            config.momentum_clip,
        )
        a_ext, b_ext = np.exp(ext[:, 0]), np.exp(ext[:, 1])
        if order is DecodingOrder.NUDF:
            x_ext = np.exp(ext[:, 2])
        else:
            x_ext = np.minimum(np.exp(ext[:, 3]), 1.0)
        a_use[surv] = np.where(momentum_on, a_ext, a_new)
        b_use[surv] = np.where(momentum_on, b_ext, b_new)
        x_use[surv] = np.where(momentum_on, x_ext, x_new)
        extrapolated[surv] = momentum_on

        prev_log[surv] = cur_log
        prev_log_set[surv] = True
        prev_bound[surv] = bound[ks]
        prev_bound_set[surv] = True

    allocation = Allocation(alpha_n=best_an, alpha_f=best_af, beta_f=best_bf)
    pair = achievable_rates(allocation, budgets, gains, order)
    margin_min = np.minimum(
        np.asarray(pair.rate_n, dtype=float),
        np.minimum(
            np.asarray(pair.rate_relay, dtype=float),
            np.asarray(pair.rate_combined, dtype=float),
        ),
    ) - best_zeta
    return ScaBatchOutcome(
        allocation=allocation,
        zeta=best_zeta,
        min_rate=best_exact,
        iterations=iterations,
        termination=term,
        feasible=margin_min >= -1e-3,
        margin_min=margin_min,
    )
