"""Second-order cone programs and a dense primal-dual interior-point solver.

Problem form:

    maximize    objective @ x
    subject to  a @ x <= b                 for (a, b) in affine_ineqs
                ||A x + b|| <= c @ x + d   for (A, b, c, d) in soc_constraints

The solver works on the homogeneous self-dual embedding of the conic pair
min c'x s.t. Gx + s = h, s in K, with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step, so it returns either a solution meeting the
requested KKT tolerance, a certificate of infeasibility, or an iteration
limit. Everything is deterministic.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_ITERATION_LIMIT = "iteration_limit"


@dataclass
class ConeProgram:
    num_vars: int
    objective: np.ndarray
    affine_ineqs: list = field(default_factory=list)
    soc_constraints: list = field(default_factory=list)


@dataclass
class ConeSolution:
    status: str
    x: np.ndarray
    objective_value: float
    iterations: int = 0
    gap: float = np.nan
    residuals: dict = field(default_factory=dict)
    certificate: np.ndarray = None


def lift_quadratic_bound(m_mat, m_vec, t_row, t_offset):
    """Rewrite ||M x + m||^2 <= t (t affine: t_row @ x + t_offset) as a
    second-order cone tuple: ||[2(Mx+m); t-1]|| <= t+1."""
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    t_row = np.asarray(t_row, dtype=float)
    a = np.vstack([2.0 * m_mat, t_row[None, :]])
    b = np.concatenate([2.0 * np.asarray(m_vec, dtype=float).ravel(), [t_offset - 1.0]])
    return (a, b, t_row.copy(), t_offset + 1.0)


def dump_program(prog, fh):
    """One constraint per line, for eyeballing small programs."""

    def fmt(v):
        return np.array2string(np.asarray(v), precision=6, max_line_width=10**9)

    fh.write("vars %d\n" % prog.num_vars)
    fh.write("maximize %s . x\n" % fmt(prog.objective))
    for a, b in prog.affine_ineqs:
        fh.write("affine %s . x <= %.9g\n" % (fmt(a), b))
    for a, b, c, d in prog.soc_constraints:
        fh.write(
            "soc ||%s x + %s|| <= %s . x + %.9g\n" % (fmt(a), fmt(b), fmt(c), d)
        )


def _stack(prog):
    """Convert to min c'x s.t. Gx + s = h, s in R+^l x SOC(d1) x ..."""
    n = prog.num_vars
    rows_g, rows_h = [], []
    for a, b in prog.affine_ineqs:
        rows_g.append(np.asarray(a, dtype=float).reshape(1, n))
        rows_h.append(np.atleast_1d(float(b)))
    soc_dims = []
    for a, b, c, d in prog.soc_constraints:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        c = np.asarray(c, dtype=float).ravel()
        rows_g.append(-c.reshape(1, n))
        rows_h.append(np.atleast_1d(float(d)))
        rows_g.append(-a)
        rows_h.append(b)
        soc_dims.append(a.shape[0] + 1)
    l = len(prog.affine_ineqs)
    if rows_g:
        g = np.vstack(rows_g)
        h = np.concatenate(rows_h)
    else:
        g = np.zeros((0, n))
        h = np.zeros(0)
    return g, h, l, soc_dims


def _blocks(l, soc_dims):
    out = []
    if l:
        out.append(("lp", 0, l))
    p = l
    for d in soc_dims:
        out.append(("soc", p, p + d))
        p += d
    return out


def _interior_shift(v, blocks):
    """Push a point strictly inside the cone (per-block shift along e)."""
    v = v.copy()
    for kind, i, j in blocks:
        if kind == "lp":
            m = v[i:j].min() if j > i else 1.0
            if m <= 1e-10:
                v[i:j] += 1.0 - m
        else:
            margin = v[i] - np.linalg.norm(v[i + 1 : j])
            if margin <= 1e-10:
                v[i] += 1.0 - margin
    return v


def _strictly_interior(v, blocks):
    for kind, i, j in blocks:
        if kind == "lp":
            if j > i and v[i:j].min() <= 0.0:
                return False
        else:
            if v[i] <= np.linalg.norm(v[i + 1 : j]):
                return False
    return True


def _mat_w(w, u):
    """Apply the SOC scaling kernel M(w) (symmetric, w'Jw = 1) to u."""
    w0, w1 = w[0], w[1:]
    dot = w1 @ u[1:]
    out = np.empty_like(u)
    out[0] = w0 * u[0] + dot
    out[1:] = u[0] * w1 + u[1:] + (dot / (1.0 + w0)) * w1
    return out


class _Scaling:
    """Nesterov-Todd scaling point per cone block."""

    def __init__(self, s, z, blocks):
        self.blocks = blocks
        self.lp_d2 = None  # d^2 = s/z on the LP block
        self.soc = []  # (eta, wbar, v=J wbar)
        lam = np.empty_like(s)
        for kind, i, j in blocks:
            if kind == "lp":
                self.lp_d2 = s[i:j] / z[i:j]
                lam[i:j] = np.sqrt(s[i:j] * z[i:j])
            else:
                sb, zb = s[i:j], z[i:j]
                ns, nz = np.linalg.norm(sb[1:]), np.linalg.norm(zb[1:])
                rs = np.sqrt((sb[0] - ns) * (sb[0] + ns))
                rz = np.sqrt((zb[0] - nz) * (zb[0] + nz))
                sn, zn = sb / rs, zb / rz
                gam = np.sqrt((1.0 + sn @ zn) / 2.0)
                wbar = np.empty_like(sb)
                wbar[0] = (sn[0] + zn[0]) / (2.0 * gam)
                wbar[1:] = (sn[1:] - zn[1:]) / (2.0 * gam)
                eta = np.sqrt(rs / rz)
                v = wbar.copy()
                v[1:] = -v[1:]
                self.soc.append((eta, wbar, v))
                lam[i:j] = self.apply_w_block(len(self.soc) - 1, zb)
        self.lam = lam

    def apply_w_block(self, idx, u):
        eta, wbar, _ = self.soc[idx]
        return eta * _mat_w(wbar, u)

    def apply_w(self, u):
        out = np.empty_like(u)
        si = 0
        for kind, i, j in self.blocks:
            if kind == "lp":
                out[i:j] = np.sqrt(self.lp_d2) * u[i:j]
            else:
                out[i:j] = self.apply_w_block(si, u[i:j])
                si += 1
        return out

    def apply_winv(self, u):
        out = np.empty_like(u)
        si = 0
        for kind, i, j in self.blocks:
            if kind == "lp":
                out[i:j] = u[i:j] / np.sqrt(self.lp_d2)
            else:
                eta, _, v = self.soc[si]
                out[i:j] = _mat_w(v, u[i:j]) / eta
                si += 1
        return out

    def apply_winv2(self, u):
        """W^-2 u, using M(Jw)^2 = 2 (Jw)(Jw)' - J."""
        out = np.empty_like(u)
        si = 0
        for kind, i, j in self.blocks:
            if kind == "lp":
                out[i:j] = u[i:j] / self.lp_d2
            else:
                eta, _, v = self.soc[si]
                ju = u[i:j].copy()
                ju[1:] = -ju[1:]
                out[i:j] = (2.0 * (v @ u[i:j]) * v - ju) / eta**2
                si += 1
        return out


def _jordan_prod(a, b, blocks):
    out = np.empty_like(a)
    for kind, i, j in blocks:
        if kind == "lp":
            out[i:j] = a[i:j] * b[i:j]
        else:
            out[i] = a[i:j] @ b[i:j]
            out[i + 1 : j] = a[i] * b[i + 1 : j] + b[i] * a[i + 1 : j]
    return out


def _jordan_div(lam, d, blocks):
    """Solve lam o t = d block-wise."""
    out = np.empty_like(d)
    for kind, i, j in blocks:
        if kind == "lp":
            out[i:j] = d[i:j] / lam[i:j]
        else:
            l0, l1 = lam[i], lam[i + 1 : j]
            det = l0**2 - l1 @ l1
            t0 = (l0 * d[i] - l1 @ d[i + 1 : j]) / det
            out[i] = t0
            out[i + 1 : j] = (d[i + 1 : j] - t0 * l1) / l0
    return out


def _identity(blocks, m):
    e = np.zeros(m)
    for kind, i, j in blocks:
        if kind == "lp":
            e[i:j] = 1.0
        else:
            e[i] = 1.0
    return e


def _max_step(v, dv, blocks):
    """Largest alpha in (0, 1] keeping v + alpha dv in the cone."""
    alpha = 1.0
    for kind, i, j in blocks:
        if kind == "lp":
            neg = dv[i:j] < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-v[i:j][neg] / dv[i:j][neg]))
        else:
            vb, db = v[i:j], dv[i:j]
            a = db[0] ** 2 - db[1:] @ db[1:]
            b = 2.0 * (vb[0] * db[0] - vb[1:] @ db[1:])
            nv = np.linalg.norm(vb[1:])
            c = (vb[0] - nv) * (vb[0] + nv)
            roots = []
            if abs(a) < 1e-300:
                if b < 0:
                    roots.append(-c / b)
            else:
                disc = b * b - 4.0 * a * c
                if disc >= 0:
                    sq = np.sqrt(disc)
                    roots.extend(r for r in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)) if r > 0)
            if roots:
                alpha = min(alpha, min(roots))
    return alpha


def _violations(prog, x):
    worst = 0.0
    for a, b in prog.affine_ineqs:
        worst = max(worst, float(np.asarray(a) @ x - b))
    for a, b, c, d in prog.soc_constraints:
        worst = max(
            worst,
            float(np.linalg.norm(np.atleast_2d(a) @ x + np.ravel(b)) - (np.ravel(c) @ x + d)),
        )
    return worst


def solve(prog, tol=1e-7, max_iter=200, callback=None, tol_stalled=1e-5):
    """Solve a ConeProgram to the requested KKT tolerance.

    Returns ConeSolution with status optimal / infeasible / unbounded /
    iteration_limit. For optimal solutions residuals carry the relative
    primal/dual residuals, the duality gap, and the worst constraint
    violation of the returned point. callback, when given, receives a
    dict of iteration diagnostics (for tests and debugging).

    Near machine precision the KKT solves stop improving the iterate;
    when that stall is detected, the best iterate seen is still accepted
    as optimal if it meets the looser tol_stalled, with its achieved
    residuals reported.
    """
    c = -np.asarray(prog.objective, dtype=float).ravel()
    n = prog.num_vars
    if c.shape != (n,):
        raise ValueError("objective length does not match num_vars")
    g, h, l, soc_dims = _stack(prog)
    m = g.shape[0]
    if m == 0:
        if np.allclose(c, 0.0):
            return ConeSolution(STATUS_OPTIMAL, np.zeros(n), 0.0)
        return ConeSolution(STATUS_UNBOUNDED, None, np.inf)
    blocks = _blocks(l, soc_dims)
    deg = l + len(soc_dims) + 1

    # per-SOC constant pieces of G' W^-2 G: the G'JG matrix never changes
    soc_rows = [(i, j) for kind, i, j in blocks if kind == "soc"]
    soc_const = []
    for i, j in soc_rows:
        gb = g[i:j]
        soc_const.append(gb[0:1].T @ gb[0:1] - gb[1:].T @ gb[1:])
    lp_g = g[:l]

    # strictly feasible-in-cone start from least-squares points
    gtg = g.T @ g + 1e-12 * np.eye(n)
    try:
        f0 = cho_factor(gtg)
        x = cho_solve(f0, g.T @ h)
        z0 = -g @ cho_solve(f0, c)
    except np.linalg.LinAlgError:
        x = np.zeros(n)
        z0 = np.zeros(m)
    s = _interior_shift(h - g @ x, blocks)
    z = _interior_shift(z0, blocks)
    tau, kappa = 1.0, 1.0

    norm_c = max(1.0, np.linalg.norm(c))
    norm_h = max(1.0, np.linalg.norm(h))
    best = None
    since_best = 0
    it = -1

    for it in range(max_iter):
        rx = g.T @ z + c * tau
        rz = g @ x + s - h * tau
        rt = c @ x + h @ z + kappa
        mu = (s @ z + tau * kappa) / deg

        pcost = (c @ x) / tau
        dcost = -(h @ z) / tau
        pres = np.linalg.norm(rz) / tau / norm_h
        dres = np.linalg.norm(rx) / tau / norm_c
        gap = (s @ z) / tau**2
        relgap = gap / max(1.0, abs(pcost), abs(dcost))
        if callback is not None:
            callback({"it": it, "pres": pres, "dres": dres, "gap": gap,
                      "relgap": relgap, "mu": mu, "tau": tau, "kappa": kappa})

        if pres <= tol and dres <= tol and (relgap <= tol or gap <= tol):
            xf = x / tau
            sol = ConeSolution(
                STATUS_OPTIMAL,
                xf,
                float(-pcost),
                iterations=it,
                gap=float(gap),
                residuals={
                    "primal": float(pres),
                    "dual": float(dres),
                    "relgap": float(relgap),
                    "worst_violation": _violations(prog, xf),
                    "dual_objective": float(-dcost),
                },
            )
            return sol

        score = max(pres, dres, min(relgap, gap))
        if best is None or score < 0.9 * best[0]:
            best = (score, x / tau, pres, dres, relgap, gap, dcost)
            since_best = 0
        else:
            # KKT accuracy has bottomed out; further sweeps only churn
            since_best += 1
            if since_best >= 8:
                break

        hz = h @ z
        if hz < 0:
            cert = z / (-hz)
            if np.linalg.norm(g.T @ cert) / norm_c <= tol:
                return ConeSolution(
                    STATUS_INFEASIBLE, None, np.nan, iterations=it, certificate=cert
                )
        cx = c @ x
        if cx < 0:
            ray = x / (-cx)
            if np.linalg.norm(g @ ray + s / (-cx)) / norm_h <= tol:
                return ConeSolution(
                    STATUS_UNBOUNDED, None, np.inf, iterations=it, certificate=ray
                )

        scal = _Scaling(s, z, blocks)
        lam = scal.lam

        # KKT matrix G' W^-2 G assembled from cached pieces
        kmat = np.zeros((n, n))
        if l:
            kmat += lp_g.T @ (lp_g / scal.lp_d2[:, None])
        for idx, (i, j) in enumerate(soc_rows):
            eta, _, v = scal.soc[idx]
            gv = g[i:j].T @ v
            kmat += (2.0 * np.outer(gv, gv) - soc_const[idx]) / eta**2
        reg = 1e-12 * (1.0 + np.abs(np.diag(kmat)).max())
        fac = None
        for _ in range(4):
            try:
                fac = cho_factor(kmat + reg * np.eye(n))
                break
            except np.linalg.LinAlgError:
                reg *= 1e3
        if fac is None:
            break

        def kkt(bx, bz):
            xx = cho_solve(fac, bx + g.T @ scal.apply_winv2(bz))
            zz = scal.apply_winv2(g @ xx - bz)
            return xx, zz

        x1, z1 = kkt(-c, h)
        denom = kappa - tau * (c @ x1 + h @ z1)
        if abs(denom) < 1e-14:
            break

        def direction(sigma, ds_corr, dk_corr):
            one = 1.0 - sigma
            d_s = -_jordan_prod(lam, lam, blocks) + sigma * mu * _identity(blocks, m)
            if ds_corr is not None:
                d_s -= ds_corr
            d_kt = -tau * kappa + sigma * mu - dk_corr
            w_div = scal.apply_w(_jordan_div(lam, d_s, blocks))
            x2, z2 = kkt(-one * rx, -one * rz - w_div)
            dtau = (d_kt + tau * one * rt + tau * (c @ x2 + h @ z2)) / denom
            dx = x2 + dtau * x1
            dz = z2 + dtau * z1
            ds = w_div - scal.apply_w(scal.apply_w(dz))
            dkappa = -one * rt - c @ dx - h @ dz
            return dx, ds, dz, dtau, dkappa

        # predictor
        dx, ds, dz, dtau, dkappa = direction(0.0, None, 0.0)
        alpha = min(_max_step(s, ds, blocks), _max_step(z, dz, blocks))
        if dtau < 0:
            alpha = min(alpha, -tau / dtau)
        if dkappa < 0:
            alpha = min(alpha, -kappa / dkappa)
        sigma = min(1.0, max(0.0, (1.0 - alpha))) ** 3

        # corrector with Mehrotra second-order term
        corr = _jordan_prod(scal.apply_winv(ds), scal.apply_w(dz), blocks)
        dx, ds, dz, dtau, dkappa = direction(sigma, corr, dtau * dkappa)
        alpha = min(_max_step(s, ds, blocks), _max_step(z, dz, blocks))
        if dtau < 0:
            alpha = min(alpha, -tau / dtau)
        if dkappa < 0:
            alpha = min(alpha, -kappa / dkappa)
        alpha *= 0.99
        # the quadratic step bound can overshoot by rounding; back off until
        # the new point is strictly inside every cone
        while alpha >= 1e-13 and not (
            _strictly_interior(s + alpha * ds, blocks)
            and _strictly_interior(z + alpha * dz, blocks)
            and tau + alpha * dtau > 0
            and kappa + alpha * dkappa > 0
        ):
            alpha *= 0.5
        if alpha < 1e-13:
            break

        x += alpha * dx
        s += alpha * ds
        z += alpha * dz
        tau += alpha * dtau
        kappa += alpha * dkappa

    if best is not None and best[0] <= tol_stalled:
        score, xf, pres, dres, relgap, gap, dcost = best
        return ConeSolution(
            STATUS_OPTIMAL,
            xf,
            float(prog.objective @ xf),
            iterations=it + 1,
            gap=float(gap),
            residuals={
                "primal": float(pres),
                "dual": float(dres),
                "relgap": float(relgap),
                "worst_violation": _violations(prog, xf),
                "dual_objective": float(-dcost),
                "stalled": True,
            },
        )
    xf = best[1] if best is not None else x / tau
    return ConeSolution(
        STATUS_ITERATION_LIMIT,
        xf,
        float(prog.objective @ xf),
        iterations=it + 1,
        gap=float((s @ z) / tau**2),
        residuals={"worst_violation": _violations(prog, xf)},
    )
