"""Internal-adversary attack on the sensing privacy of the network.

The adversary UE knows a subset of Tx AP positions and its own downlink
channels to them. Per known AP it strips its own data stream from the
received block, recovers the remaining transmit signal with a robust EM
estimator (Student-t likelihood with a latent precision, gaussian channel
uncertainty), forms the transmit beampattern replica from the recovered
signal covariance, and casts a search ray along the strongest direction.
Cells hit by the most rays win the vote.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import complex_normal, steering_vector
from .scenario import boresight, cell_of, wrap_angle


@dataclass
class ChannelEstimate:
    h_hat: np.ndarray
    sigma_err2: float


@dataclass
class EmState:
    e_h: np.ndarray       # posterior mean of the channel
    omega_h: np.ndarray   # shared row covariance of the channel posterior
    e_u: float            # posterior mean of the latent precision
    x_hat: np.ndarray     # recovered transmit block (m_ap, n_obs)
    v_h: np.ndarray       # Cholesky factor with v_h^H v_h = m_ap * omega_h
    c_stat: float
    iterations: int = 0
    converged: bool = False
    objective: float = np.nan


@dataclass
class BeampatternEstimate:
    theta_grid: np.ndarray
    b: np.ndarray

    def peak_angle(self):
        return float(self.theta_grid[int(np.argmax(self.b))])


@dataclass
class LocalizationResult:
    known_aps: list
    angles_local: np.ndarray
    angles_global: np.ndarray
    votes: np.ndarray
    cells_per_line: list
    chosen_cell: int
    correct: bool
    tie_size: int = 1

    def to_record(self):
        return {
            "known_aps": [int(k) for k in self.known_aps],
            "angles_local": [float(a) for a in self.angles_local],
            "angles_global": [float(a) for a in self.angles_global],
            "votes": [int(v) for v in self.votes],
            "chosen_cell": int(self.chosen_cell),
            "correct": bool(self.correct),
            "tie_size": int(self.tie_size),
        }


def ls_channel_estimate(y_pilot, x_pilot, sigma_err2=None, noise_var=None):
    """Least-squares channel estimate from a pilot block:
    H_hat = Y X^H (X X^H)^-1. Needs at least m_ap pilot symbols.

    When sigma_err2 is not given it is calibrated from the fit itself:
    the residual-based unbiased noise estimate, propagated through the
    Gram inverse, gives the average per-entry variance of H_hat - H.
    A square pilot block leaves no residual (the fit interpolates the
    noise), so that route is blind there; noise_var, the receiver's
    known noise floor, feeds the same propagation formula instead.
    """
    x = np.asarray(x_pilot)
    y = np.asarray(y_pilot)
    m_tx, n = x.shape
    if n < m_tx:
        raise ValueError("pilot block shorter than the antenna count")
    gram = x @ x.conj().T
    gram_inv = np.linalg.inv(gram)
    h_hat = y @ x.conj().T @ gram_inv
    if sigma_err2 is None:
        if n > m_tx:
            est_var = np.sum(np.abs(y - h_hat @ x) ** 2) / (y.shape[0] * (n - m_tx))
        elif noise_var is not None:
            est_var = noise_var
        else:
            est_var = 0.0
        sigma_err2 = est_var * np.real(np.trace(gram_inv)) / m_tx
        sigma_err2 = max(float(sigma_err2), 1e-30)
    return ChannelEstimate(h_hat=h_hat, sigma_err2=float(sigma_err2))


def interference_observation(channels, wset, s, layout, scn, k, noise_rng,
                             h_hat=None):
    """What the adversary sees from AP k after removing its own stream.

    Returns (y_tilde, x_tilde): the noisy observation through the
    adversary's channel, and the ground-truth interference signal
    x_tilde = W_k s with the adversary's row zeroed (kept for evaluating
    the recovery, never given to the estimator).

    With h_hat=None the self-subtraction is exact. Passing the
    adversary's channel estimate subtracts h_hat @ w_a s_a from the full
    received block instead, so the channel-estimate mismatch times the
    known own symbols stays in the observation as extra non-thermal
    noise, which is the disturbance the heavy-tailed recovery model is
    built to absorb.
    """
    adv = layout.adversary_index
    s_masked = s.copy()
    s_masked[adv] = 0.0
    x_tilde = wset[k] @ s_masked
    h = channels.h[adv, k]
    if h_hat is None:
        y = h @ x_tilde
    else:
        y = h @ (wset[k] @ s) - h_hat @ (wset[k][:, adv : adv + 1] @ s[adv : adv + 1])
    y = y + complex_normal(noise_rng, y.shape, scn.sigma_i2)
    return y, x_tilde


def zf_init(est, y):
    """Minimum-norm least-squares recovery through the estimated channel.

    For wide H_hat the normal equations are singular, so this uses
    H^H (H H^H)^-1 y (ridge-loaded if the Gram matrix is degenerate).
    """
    h = est.h_hat
    y = np.asarray(y)
    if h.shape[0] >= h.shape[1]:
        gram = h.conj().T @ h
        rhs = h.conj().T @ y
    else:
        gram = h @ h.conj().T
        rhs = y
    try:
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        gram = gram + 1e-9 * np.eye(gram.shape[0])
        sol = np.linalg.solve(gram, rhs)
    if h.shape[0] >= h.shape[1]:
        return sol
    return h.conj().T @ sol


def _as_block(y):
    y = np.asarray(y)
    return y[:, None] if y.ndim == 1 else y


def em_objective(state, y):
    """Penalized residual the M-step minimizes at fixed statistics."""
    y = _as_block(y)
    x = _as_block(state.x_hat)
    res = y - state.e_h @ x
    return float(np.sum(np.abs(res) ** 2) + np.sum(np.abs(state.v_h @ x) ** 2))


def em_init(est, y_block, scn):
    """Starting point: channel posterior at the prior, signal at ZF."""
    m_ap = est.h_hat.shape[1]
    omega = est.sigma_err2 * np.eye(m_ap)
    x0 = zf_init(est, _as_block(y_block))
    v_h = np.linalg.cholesky(m_ap * omega).conj().T
    return EmState(
        e_h=est.h_hat.copy(), omega_h=omega, e_u=1.0, x_hat=x0, v_h=v_h,
        c_stat=np.nan,
    )


def em_e_step(state, est, y, scn):
    """Refresh the variational statistics, in order: the Gamma statistic C
    from the current channel posterior and signal, the latent precision
    mean E[u] = (v + 2 n_obs)/(v + C), then the channel posterior
    covariance and mean."""
    y = _as_block(y)
    x = _as_block(state.x_hat)
    m_ap = x.shape[0]
    sa2 = scn.sigma_i2
    se2 = est.sigma_err2
    dof = scn.cfg.em_dof

    res = y - state.e_h @ x
    c_stat = (
        np.sum(np.abs(res) ** 2)
        + m_ap * np.real(np.einsum("mn,mp,pn->", x.conj(), state.omega_h, x))
    ) / sa2
    if not np.isfinite(c_stat):
        raise FloatingPointError("non-finite EM statistic")
    e_u = (dof + 2.0 * y.shape[1]) / (dof + c_stat)

    prec = np.eye(m_ap) / se2 + (e_u / sa2) * (x @ x.conj().T)
    omega = np.linalg.inv(prec)
    omega = 0.5 * (omega + omega.conj().T)
    e_h = (omega @ (est.h_hat.conj().T / se2 + (e_u / sa2) * (x @ y.conj().T))).conj().T
    v_h = np.linalg.cholesky(m_ap * omega).conj().T
    return EmState(
        e_h=e_h, omega_h=omega, e_u=float(e_u), x_hat=state.x_hat, v_h=v_h,
        c_stat=float(c_stat), iterations=state.iterations,
    )


def em_m_step(state, y):
    """Closed-form minimizer of ||y - E[H] x||^2 + ||V_H x||^2 per column:
    x = (E[H]^H E[H] + V_H^H V_H)^-1 E[H]^H y."""
    y = _as_block(y)
    eh = state.e_h
    lhs = eh.conj().T @ eh + state.v_h.conj().T @ state.v_h
    return np.linalg.solve(lhs, eh.conj().T @ y)


def run_em(est, y_block, scn, max_iter=2000):
    """Alternate the E and M refinements from the ZF start until the
    signal update norm drops below em_cov_tol or the cap hits.

    The tolerance acts on the update norm relative to max(1, ||x_hat||),
    so it reads as an absolute threshold on unit-scale problems yet stays
    meaningful when the transmit block carries physical (large) power.
    The cap covers the slow settling of prior-dominated modes when the
    adversary has fewer antennas than the AP (underdetermined columns);
    those runs need several hundred iterations of cheap updates.
    """
    y = _as_block(y_block)
    state = em_init(est, y, scn)
    tol = scn.cfg.em_cov_tol
    for a in range(1, max_iter + 1):
        state = em_e_step(state, est, y, scn)
        x_new = em_m_step(state, y)
        step = np.linalg.norm(x_new - state.x_hat)
        state.x_hat = x_new
        state.iterations = a
        if step <= tol * max(1.0, np.linalg.norm(x_new)):
            state.converged = True
            break
    state.objective = em_objective(state, y)
    return state


def angle_grid(z):
    """z uniform scan angles across the array's forward half-plane."""
    return np.linspace(-np.pi / 2.0, np.pi / 2.0, z)


def estimate_beampattern(x_hat_block, grid_angles, m_ap):
    """Transmit beampattern replica from the recovered block.

    R = (1/N) sum_n x[n] x[n]^H; the scan evaluates the quadratic form on
    the conjugate steering manifold (matched to the outgoing propagation
    direction), so a block along a*(phi0) peaks at phi0. Values are real
    and nonnegative since R is PSD.
    """
    x = _as_block(x_hat_block)
    r = (x @ x.conj().T) / x.shape[1]
    a = np.stack([steering_vector(t, m_ap) for t in grid_angles], axis=1)
    b = np.real(np.sum(a * (r @ a.conj()), axis=0))
    return BeampatternEstimate(theta_grid=np.asarray(grid_angles, dtype=float), b=b)


def traverse_cells(grid, origin_pt, angle):
    """Every cell a ray (origin, angle) passes through, by splitting the
    clipped segment at all grid-line crossings and classifying segment
    midpoints. Returns an empty list if the ray misses the area.
    """
    half = grid.extent / 2.0
    ox = origin_pt[0] - grid.origin[0]
    oy = origin_pt[1] - grid.origin[1]
    dx, dy = math.cos(angle), math.sin(angle)

    tmin, tmax = 0.0, math.inf
    for o, d in ((ox, dx), (oy, dy)):
        if abs(d) < 1e-15:
            if o < -half or o > half:
                return []
        else:
            lo, hi = (-half - o) / d, (half - o) / d
            if lo > hi:
                lo, hi = hi, lo
            tmin, tmax = max(tmin, lo), min(tmax, hi)
    if tmax <= tmin + 1e-12:
        return []

    ts = {tmin, tmax}
    n = grid.n_side
    for o, d in ((ox, dx), (oy, dy)):
        if abs(d) < 1e-15:
            continue
        for m in range(n + 1):
            t = (-half + m * grid.cell_size - o) / d
            if tmin < t < tmax:
                ts.add(t)
    ts = sorted(ts)
    cells = []
    seen = set()
    for t0, t1 in zip(ts[:-1], ts[1:]):
        tm = 0.5 * (t0 + t1)
        c = cell_of(grid, (origin_pt[0] + tm * dx, origin_pt[1] + tm * dy))
        if c is not None and c not in seen:
            seen.add(c)
            cells.append(c)
    return cells


def vote_and_localize(bps, layout, grid, rng, known_aps=None):
    """Fuse the per-AP beampattern peaks into a cell estimate.

    Each known AP casts a ray from its position at boresight + peak angle;
    every traversed cell gets one vote per ray. The fullest cell wins,
    ties drawn uniformly with rng.
    """
    if known_aps is None:
        known_aps = list(range(len(bps)))
    known_aps = list(known_aps)
    if not known_aps:
        raise ValueError("need at least one known AP")
    origin = grid.origin
    votes = np.zeros(grid.n_cells, dtype=int)
    ang_l, ang_g, per_line = [], [], []
    for bp, k in zip(bps, known_aps):
        th = bp.peak_angle()
        pos = layout.tx_ap_pos[k]
        g = wrap_angle(boresight(pos, origin) + th)
        cells = traverse_cells(grid, pos, g)
        votes[cells] += 1
        ang_l.append(th)
        ang_g.append(g)
        per_line.append(len(cells))

    top = np.flatnonzero(votes == votes.max())
    chosen = int(top[0]) if len(top) == 1 else int(rng.choice(top))
    target_cell = cell_of(grid, layout.target_pos)
    return LocalizationResult(
        known_aps=known_aps,
        angles_local=np.array(ang_l),
        angles_global=np.array(ang_g),
        votes=votes,
        cells_per_line=per_line,
        chosen_cell=chosen,
        correct=(target_cell is not None and chosen == target_cell),
        tie_size=int(len(top)),
    )


def detection_probability(results):
    """Fraction of localization results that found the target's cell."""
    if not results:
        raise ValueError("no localization results")
    return float(np.mean([1.0 if r.correct else 0.0 for r in results]))
