"""Joint sensing/communication precoder design.

Alternating convexified subproblems: the sensing SINR splits into per-AP
self terms (linearized around the previous iterate) and cross terms
(affine once the other APs are frozen), each maximized under per-link
communication SINR constraints and a per-AP power ball. Both subproblems
decompose across transmit APs, so the builders accept an AP subset and
the driver solves one small cone program per AP.

Variable layout of a subproblem block for AP k (vec in column order):

    [Re vec(W_k), Im vec(W_k), tau_1..tau_nue, mu_1..mu_nue]

Precoders inside programs are expressed in units of sqrt(P_T) and slack
pairs in units of the anchor numerator scale, which keeps every row O(1);
decode_precoders undoes this.
"""

from dataclasses import dataclass, field

import numpy as np

from . import socp
from .airlink import expected_sensing_sinr, sensing_sinr
from .channel import complex_normal, steering_vector

FEAS_RTOL = 1e-4  # accepted iterates satisfy gamma_ik >= Gamma (1 - FEAS_RTOL)
MAX_INIT_ATTEMPTS = 20


@dataclass
class CccpState:
    """Result of the alternating optimization."""

    w: np.ndarray
    u: np.ndarray
    iterations: int
    gamma_t_history: list
    status: str = "converged"  # converged | max_iter | flagged
    flag_cause: str = None
    slack_tau: np.ndarray = None
    slack_mu: np.ndarray = None
    rel_w: float = np.nan
    rel_u: float = np.nan
    gamma_t_final: float = np.nan
    comm_sinr_final: np.ndarray = None
    from_checkpoint: bool = False
    trace: list = field(default_factory=list)


def init_precoders(channels, scn, rng, sensing_share=None):
    """Random start: complex gaussian columns, per-AP power exactly P_T.

    sensing_share sets the fraction of AP power on the sensing column
    (default: equal split with the UE streams).
    """
    cfg = scn.cfg
    if sensing_share is None:
        sensing_share = 1.0 / (cfg.n_ue + 1)
    w = complex_normal(rng, (cfg.n_tx, cfg.m_ap, cfg.n_ue + 1))
    col_pow = np.sum(np.abs(w) ** 2, axis=1)
    w = w / np.sqrt(col_pow)[:, None, :]
    shares = np.full(cfg.n_ue + 1, (1.0 - sensing_share) / cfg.n_ue)
    shares[-1] = sensing_share
    w = w * np.sqrt(scn.p_t * shares)[None, None, :]
    u = complex_normal(rng, (cfg.n_ue, cfg.m_ue))
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    return w, u


def variable_layout(cfg, aps):
    """Index bookkeeping for subproblem vectors over the given AP subset."""
    nw = cfg.m_ap * (cfg.n_ue + 1)
    nb = 2 * nw + 2 * cfg.n_ue
    out = {}
    for pos, k in enumerate(aps):
        base = pos * nb
        out[k] = {
            "re": slice(base, base + nw),
            "im": slice(base + nw, base + 2 * nw),
            "tau": slice(base + 2 * nw, base + 2 * nw + cfg.n_ue),
            "mu": slice(base + 2 * nw + cfg.n_ue, base + nb),
        }
    return out, nb * len(aps), nw


def encode_precoders(w, scn, aps=None):
    """Anchor encoding of physical precoders into a subproblem vector
    (slack entries zero); inverse of decode_precoders on the w part."""
    cfg = scn.cfg
    if aps is None:
        aps = range(cfg.n_tx)
    aps = list(aps)
    layout, n, _ = variable_layout(cfg, aps)
    x = np.zeros(n)
    root_p = np.sqrt(scn.p_t)
    for k in aps:
        wt = w[k] / root_p
        x[layout[k]["re"]] = wt.real.ravel(order="F")
        x[layout[k]["im"]] = wt.imag.ravel(order="F")
    return x


def decode_precoders(x, scn, aps=None, slack_scale=None):
    """Physical precoders (and slacks, if their scale is given) from a
    subproblem solution vector."""
    cfg = scn.cfg
    if aps is None:
        aps = range(cfg.n_tx)
    aps = list(aps)
    layout, _, _ = variable_layout(cfg, aps)
    root_p = np.sqrt(scn.p_t)
    shape = (cfg.m_ap, cfg.n_ue + 1)
    w = np.zeros((len(aps),) + shape, dtype=complex)
    tau = np.zeros((len(aps), cfg.n_ue))
    mu = np.zeros((len(aps), cfg.n_ue))
    for pos, k in enumerate(aps):
        lay = layout[k]
        wr = x[lay["re"]].reshape(shape, order="F")
        wi = x[lay["im"]].reshape(shape, order="F")
        w[pos] = root_p * (wr + 1j * wi)
        tau[pos] = x[lay["tau"]]
        mu[pos] = x[lay["mu"]]
    if slack_scale is not None:
        tau = tau * slack_scale
        mu = mu * slack_scale
    return w, tau, mu


def _cross_weights(geom, rcs_cov, scn):
    """Phi[k, j] = m_ap * cov_kj * sum_r sqrt(beta_rk beta_rj)."""
    root_beta = np.sqrt(geom.beta)
    return scn.cfg.m_ap * rcs_cov * (root_beta.T @ root_beta)


def _sensing_scale(scn):
    """Expected-symbol objective scale: block_len * zeta."""
    cfg = scn.cfg
    zeta = 1.0 / ((cfg.block_len - 1) * cfg.m_ap * cfg.n_rx * scn.sigma_n2)
    return cfg.block_len * zeta


def expected_self_terms(geom, rcs_cov, scn, w):
    """Per-AP symbol-averaged self contribution to the sensing SINR."""
    cfg = scn.cfg
    a_tx = np.stack([steering_vector(p, cfg.m_ap) for p in geom.phi_tx])
    b = np.einsum("km,kml->kl", a_tx, w)
    phi = _cross_weights(geom, rcs_cov, scn)
    return _sensing_scale(scn) * np.diag(phi) * np.sum(np.abs(b) ** 2, axis=1)


def _build_subproblem(kind, channels, geom, rcs_cov, scn, w_prev, u, aps):
    cfg = scn.cfg
    aps = list(aps)
    layout, n, nw = variable_layout(cfg, aps)
    root_p = np.sqrt(scn.p_t)
    a_tx = np.stack([steering_vector(p, cfg.m_ap) for p in geom.phi_tx])
    b_prev = np.einsum("km,kml->kl", a_tx, w_prev)
    phi = _cross_weights(geom, rcs_cov, scn)
    scale = _sensing_scale(scn)

    obj = np.zeros(n)
    affine = []
    socs = []
    for k in aps:
        lay = layout[k]
        if kind == "self":
            coef = 2.0 * scale * phi[k, k] * np.outer(a_tx[k].conj(), b_prev[k])
        else:
            mix = phi[k] @ b_prev - phi[k, k] * b_prev[k]
            coef = 2.0 * scale * np.outer(a_tx[k].conj(), mix)
        coef = coef * root_p
        obj[lay["re"]] = coef.real.ravel(order="F")
        obj[lay["im"]] = coef.imag.ravel(order="F")

        # per-AP power ball in sqrt(P_T) units
        a8 = np.zeros((2 * nw, n))
        a8[:nw, lay["re"]] = np.eye(nw)
        a8[nw:, lay["im"]] = np.eye(nw)
        socs.append((a8, np.zeros(2 * nw), np.zeros(n), 1.0))

        for i in range(cfg.n_ue):
            g = root_p * (channels.h[i, k].conj().T @ u[i])  # scaled effective channel
            c0 = (g.conj() @ w_prev[k][:, i]) / root_p
            noise = scn.sigma_i2 * float(np.real(u[i].conj() @ u[i]))
            s_ik = abs(c0) ** 2 + noise

            # linearized numerator >= tau
            v = 2.0 * c0 * g
            row = np.zeros(n)
            vr = np.zeros((cfg.m_ap, cfg.n_ue + 1))
            vi = np.zeros((cfg.m_ap, cfg.n_ue + 1))
            vr[:, i] = v.real
            vi[:, i] = v.imag
            row[lay["re"]] = -vr.ravel(order="F")
            row[lay["im"]] = -vi.ravel(order="F")
            row[lay["tau"].start + i] = s_ik
            rhs = -abs(c0) ** 2
            nrm = np.linalg.norm(row)
            affine.append((row / nrm, rhs / nrm))

            # interference power (other streams + sensing) <= mu, via the
            # rotated-cone lift of ||q||^2 <= t
            others = [l for l in range(cfg.n_ue + 1) if l != i]
            q = np.zeros((2 * cfg.n_ue, n))
            rs = 1.0 / np.sqrt(s_ik)
            for r_idx, l in enumerate(others):
                re_row = np.zeros((cfg.m_ap, cfg.n_ue + 1))
                im_row = np.zeros((cfg.m_ap, cfg.n_ue + 1))
                re_row[:, l] = g.real
                im_row[:, l] = g.imag
                q[2 * r_idx, lay["re"]] = rs * re_row.ravel(order="F")
                q[2 * r_idx, lay["im"]] = rs * im_row.ravel(order="F")
                q[2 * r_idx + 1, lay["re"]] = -rs * im_row.ravel(order="F")
                q[2 * r_idx + 1, lay["im"]] = rs * re_row.ravel(order="F")
            t_row = np.zeros(n)
            t_row[lay["mu"].start + i] = 1.0
            socs.append(
                socp.lift_quadratic_bound(q, np.zeros(2 * cfg.n_ue), t_row, -noise / s_ik)
            )

            # tau >= Gamma mu (slack scale cancels)
            row = np.zeros(n)
            row[lay["tau"].start + i] = -1.0
            row[lay["mu"].start + i] = scn.gamma
            nrm = np.linalg.norm([1.0, scn.gamma])
            affine.append((row / nrm, 0.0))

    return socp.ConeProgram(n, obj, affine_ineqs=affine, soc_constraints=socs)


def build_p1(channels, geom, rcs_cov, scn, w_prev, u, aps=None):
    """Self-term subproblem: linearized per-AP sensing objective under the
    communication SINR and power constraints."""
    if aps is None:
        aps = range(scn.cfg.n_tx)
    return _build_subproblem("self", channels, geom, rcs_cov, scn, w_prev, u, aps)


def build_p2(channels, geom, rcs_cov, scn, w_prev, u, aps=None):
    """Cross-term subproblem: each AP maximizes its affine coupling with
    the frozen other APs under the same constraints."""
    if aps is None:
        aps = range(scn.cfg.n_tx)
    return _build_subproblem("cross", channels, geom, rcs_cov, scn, w_prev, u, aps)


def p1_objective_constant(geom, rcs_cov, scn, w_prev, aps=None):
    """Constant completing the linearized self objective, so that
    objective(x_anchor) + constant equals the exact self term."""
    if aps is None:
        aps = range(scn.cfg.n_tx)
    terms = expected_self_terms(geom, rcs_cov, scn, w_prev)
    return float(-np.sum(terms[list(aps)]))


def combine_solutions(w1, w2, scn):
    """Sum the two subproblem precoders and rescale any AP exceeding the
    power budget back onto the ball."""
    w = w1 + w2
    pw = np.sum(np.abs(w) ** 2, axis=(1, 2))
    fix = np.sqrt(np.minimum(1.0, scn.p_t / pw))
    return w * fix[:, None, None]


def mmse_update(channels, w, scn, i=None):
    """Linear receiver per UE: per-AP interference-plus-noise whitened
    matched filters, summed over APs. The own stream and the sensing
    stream are left out of the whitening term."""
    cfg = scn.cfg
    if i is None:
        return np.stack([mmse_update(channels, w, scn, i) for i in range(cfg.n_ue)])
    u = np.zeros(cfg.m_ue, dtype=complex)
    for k in range(cfg.n_tx):
        hw = channels.h[i, k] @ w[k][:, : cfg.n_ue]  # (m_ue, n_ue) stream responses
        interf = np.delete(hw, i, axis=1)
        cov = interf @ interf.conj().T + scn.sigma_i2 * np.eye(cfg.m_ue)
        u += np.linalg.solve(cov, hw[:, i])
    return u


def comm_sinr_matrix(channels, w, u, scn):
    """gamma[i, k] for every UE/AP pair (same quantity as airlink.comm_sinr,
    vectorized for the feasibility checks)."""
    cfg = scn.cfg
    gam = np.zeros((cfg.n_ue, cfg.n_tx))
    for i in range(cfg.n_ue):
        for k in range(cfg.n_tx):
            proj = (channels.h[i, k].conj().T @ u[i]).conj() @ w[k]
            sig = np.abs(proj[i]) ** 2
            interf = np.sum(np.abs(proj) ** 2) - sig
            gam[i, k] = sig / (interf + scn.sigma_i2 * np.real(u[i].conj() @ u[i]))
    return gam


def _is_feasible(channels, w, u, scn):
    gam = comm_sinr_matrix(channels, w, u, scn)
    pw = np.sum(np.abs(w) ** 2, axis=(1, 2))
    ok = np.all(gam >= scn.gamma * (1.0 - FEAS_RTOL)) and np.all(
        pw <= scn.p_t * (1.0 + 1e-6)
    )
    return ok, gam


def _solve_per_ap(builder, channels, geom, rcs_cov, scn, w_prev, u):
    sols = []
    for k in range(scn.cfg.n_tx):
        prog = builder(channels, geom, rcs_cov, scn, w_prev, u, aps=[k])
        sols.append(socp.solve(prog, tol=1e-7))
    return sols


def _gather(sols, scn):
    cfg = scn.cfg
    w = np.zeros((cfg.n_tx, cfg.m_ap, cfg.n_ue + 1), dtype=complex)
    tau = np.zeros((cfg.n_ue, cfg.n_tx))
    mu = np.zeros((cfg.n_ue, cfg.n_tx))
    worst = 0.0
    for k, sol in enumerate(sols):
        wk, tk, mk = decode_precoders(sol.x, scn, aps=[k])
        w[k] = wk[0]
        tau[:, k] = tk[0]
        mu[:, k] = mk[0]
        worst = max(worst, sol.residuals.get("worst_violation", np.nan))
    return w, tau, mu, worst


def run_algorithm1(channels, geom, rcs_cov, scn, s, rng):
    """Full alternating design loop.

    Draw random precoders/combiners, repair the draw until the first
    convexified subproblem is solvable, then iterate: solve both
    subproblems, sum and project the precoders, update the receivers,
    stop when both relative changes drop below eps_cccp or i_max hits.
    Returns the last pair that meets the communication constraints.
    """
    cfg = scn.cfg

    w_prev = u = p1_sols = None
    for attempt in range(MAX_INIT_ATTEMPTS):
        share = (1.0 / (cfg.n_ue + 1)) * 0.5**attempt
        w0, u0 = init_precoders(channels, scn, rng, sensing_share=share)
        sols = _solve_per_ap(build_p1, channels, geom, rcs_cov, scn, w0, u0)
        if all(s_.status == socp.STATUS_OPTIMAL for s_ in sols):
            w_prev, u, p1_sols = w0, u0, sols
            break
    if w_prev is None:
        return CccpState(
            w=None, u=None, iterations=0, gamma_t_history=[],
            status="flagged", flag_cause="infeasible_init",
        )

    gamma_hist = [sensing_sinr(geom, rcs_cov, w_prev, s, scn)]
    checkpoint = None
    trace = []
    slack_tau = slack_mu = None
    status = "max_iter"
    rel_w = rel_u = np.nan

    for p in range(1, cfg.i_max + 1):
        if p1_sols is None:
            p1_sols = _solve_per_ap(build_p1, channels, geom, rcs_cov, scn, w_prev, u)
        p2_sols = _solve_per_ap(build_p2, channels, geom, rcs_cov, scn, w_prev, u)
        bad = [
            s_.status for s_ in p1_sols + p2_sols if s_.status != socp.STATUS_OPTIMAL
        ]
        if bad:
            cause = "infeasible_subproblem" if "infeasible" in bad else "solver_limit"
            if checkpoint is None:
                return CccpState(
                    w=None, u=None, iterations=p, gamma_t_history=gamma_hist,
                    status="flagged", flag_cause=cause, trace=trace,
                )
            break

        w1, tau1, mu1, viol1 = _gather(p1_sols, scn)
        w2, slack_tau, slack_mu, viol2 = _gather(p2_sols, scn)
        w_new = combine_solutions(w1, w2, scn)

        # the summed precoder can lose the SINR guarantee each summand has;
        # fall back to the better single-subproblem precoder if it does
        ok, _ = _is_feasible(channels, w_new, u, scn)
        if not ok:
            cand = max(
                (w1, w2),
                key=lambda wc: expected_sensing_sinr(geom, rcs_cov, wc, scn),
            )
            ok_c, _ = _is_feasible(channels, cand, u, scn)
            if ok_c:
                w_new = cand
        ok, _ = _is_feasible(channels, w_new, u, scn)
        if ok:
            checkpoint = (w_new.copy(), u.copy(), p)

        u_new = mmse_update(channels, w_new, scn)
        gamma_hist.append(sensing_sinr(geom, rcs_cov, w_new, s, scn))
        rel_w = np.linalg.norm(w_new - w_prev) / max(np.linalg.norm(w_new), 1e-300)
        du = np.linalg.norm(u_new - u, axis=1)
        rel_u = float(np.max(du / np.maximum(np.linalg.norm(u_new, axis=1), 1e-300)))
        trace.append(
            {
                "iteration": p,
                "gamma_t": gamma_hist[-1],
                "max_violation": max(viol1, viol2),
                "p1_status": "optimal",
                "p2_status": "optimal",
                "rel_w": float(rel_w),
                "rel_u": float(rel_u),
            }
        )
        w_prev, u = w_new, u_new
        p1_sols = None
        if rel_w <= cfg.eps_cccp and rel_u <= cfg.eps_cccp:
            status = "converged"
            break

    iterations = len(trace)
    ok, gam = _is_feasible(channels, w_prev, u, scn)
    from_checkpoint = False
    if not ok:
        if checkpoint is None:
            return CccpState(
                w=None, u=None, iterations=iterations, gamma_t_history=gamma_hist,
                status="flagged", flag_cause="infeasible_final", trace=trace,
            )
        w_prev, u, _ = checkpoint
        _, gam = _is_feasible(channels, w_prev, u, scn)
        from_checkpoint = True

    return CccpState(
        w=w_prev,
        u=u,
        iterations=iterations,
        gamma_t_history=gamma_hist,
        status=status,
        slack_tau=slack_tau,
        slack_mu=slack_mu,
        rel_w=float(rel_w),
        rel_u=float(rel_u),
        gamma_t_final=sensing_sinr(geom, rcs_cov, w_prev, s, scn),
        comm_sinr_final=gam,
        from_checkpoint=from_checkpoint,
        trace=trace,
    )
