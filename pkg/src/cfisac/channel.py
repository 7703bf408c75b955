"""Propagation models: ULA steering, bistatic sensing geometry, Rayleigh
communication links, and the fluctuating target RCS.
"""

from dataclasses import dataclass

import numpy as np

from .scenario import azimuth, boresight, wrap_angle


def complex_normal(rng, shape, var=1.0):
    """Circularly symmetric complex gaussian, total variance var per entry."""
    g = rng.standard_normal(size=(2,) + tuple(shape))
    return np.sqrt(var / 2.0) * (g[0] + 1j * g[1])


def steering_vector(phi, m):
    """Half-wavelength ULA response at local angle phi: exp(j t pi sin phi).

    t runs 0..m-1, so the squared norm is exactly m.
    """
    t = np.arange(m)
    return np.exp(1j * np.pi * np.sin(phi) * t)


def sensing_path_gain(lambda_c, d_tk, d_tr):
    """Bistatic two-hop channel gain: lambda^2 / ((4 pi)^3 d_tk^2 d_tr^2)."""
    return lambda_c**2 / ((4.0 * np.pi) ** 3 * d_tk**2 * d_tr**2)


@dataclass
class SensingGeometry:
    """Deterministic target geometry seen by the AP arrays.

    Angles are local (relative to each AP's boresight toward the area
    center) and must land in the ULA's unambiguous half-plane.
    """

    phi_tx: np.ndarray
    phi_rx: np.ndarray
    beta: np.ndarray  # (n_rx, n_tx) bistatic gains
    tx_boresight: np.ndarray
    rx_boresight: np.ndarray
    d_tx: np.ndarray
    d_rx: np.ndarray


def build_sensing_geometry(scn):
    lay = scn.layout
    tgt = np.asarray(lay.target_pos)
    origin = np.asarray(scn.grid.origin)

    def local_angles(pos):
        bs = np.array([boresight(p, origin) for p in pos])
        glob = np.array([azimuth(p, tgt) for p in pos])
        return wrap_angle(glob - bs), bs

    phi_tx, bs_tx = local_angles(lay.tx_ap_pos)
    phi_rx, bs_rx = local_angles(lay.rx_ap_pos)
    if np.any(np.abs(phi_tx) >= np.pi / 2) or np.any(np.abs(phi_rx) >= np.pi / 2):
        raise ValueError("target outside some AP's forward half-plane")

    d_tx = np.linalg.norm(lay.tx_ap_pos - tgt, axis=1)
    d_rx = np.linalg.norm(lay.rx_ap_pos - tgt, axis=1)
    beta = sensing_path_gain(scn.lambda_c, d_tx[None, :], d_rx[:, None])
    return SensingGeometry(
        phi_tx=np.atleast_1d(phi_tx),
        phi_rx=np.atleast_1d(phi_rx),
        beta=beta,
        tx_boresight=bs_tx,
        rx_boresight=bs_rx,
        d_tx=d_tx,
        d_rx=d_rx,
    )


@dataclass
class CommChannels:
    """UE-side downlink channels h[i, k] of shape (m_ue, m_ap), plus the
    large-scale gains omega[i, k] = d^-pathloss_exp they were drawn with."""

    h: np.ndarray
    omega: np.ndarray


def draw_comm_channels(scn, rng):
    """Rayleigh block-fading links from every Tx AP to every UE."""
    cfg = scn.cfg
    d = np.linalg.norm(
        scn.layout.ue_pos[:, None, :] - scn.layout.tx_ap_pos[None, :, :], axis=2
    )
    if np.any(d <= 0):
        raise ValueError("UE placed exactly on a Tx AP")
    omega = d ** (-cfg.pathloss_exp)
    g = complex_normal(rng, (cfg.n_ue, cfg.n_tx, cfg.m_ue, cfg.m_ap))
    h = np.sqrt(omega)[:, :, None, None] * g
    return CommChannels(h=h, omega=omega)


def draw_rcs(scn, rng):
    """Per (rx, tx) pair RCS coefficients alpha[r, k].

    Swerling-style fluctuation: alpha_rk = sqrt(rho) c_r + sqrt(1-rho) e_rk
    with c_r, e_rk iid CN(0, sigma_rcs2), so rho=1 is one draw per Rx AP
    and rho=0 is independent across Tx APs.
    """
    cfg = scn.cfg
    rho = cfg.rcs_correlation
    c = complex_normal(rng, (cfg.n_rx, 1), scn.sigma_rcs2)
    e = complex_normal(rng, (cfg.n_rx, cfg.n_tx), scn.sigma_rcs2)
    return np.sqrt(rho) * c + np.sqrt(1.0 - rho) * e


def rcs_covariance(scn, r, k, j):
    """cov(alpha_rj, alpha_rk): sigma_rcs2 on the diagonal, rho*sigma_rcs2 off."""
    del r  # identical statistics at every Rx AP
    if k == j:
        return scn.sigma_rcs2
    return scn.cfg.rcs_correlation * scn.sigma_rcs2


def rcs_covariance_matrix(scn):
    """(n_tx, n_tx) covariance of the alpha row seen by one Rx AP."""
    n = scn.cfg.n_tx
    rho = scn.cfg.rcs_correlation
    c = np.full((n, n), rho * scn.sigma_rcs2)
    np.fill_diagonal(c, scn.sigma_rcs2)
    return c
