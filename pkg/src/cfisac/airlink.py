"""Over-the-air signal model: downlink blocks, UE and Rx-AP observations,
per-link communication SINR and the network sensing SINR.

Stream convention: precoder matrices W_k are (m_ap, n_ue + 1); columns
0..n_ue-1 carry the UE streams, the last column carries the sensing
waveform. Symbol blocks S follow the same row order.
"""

import numpy as np

from .channel import complex_normal, steering_vector


def draw_symbols(scn, rng):
    """(n_ue + 1, block_len) block: unit-modulus QPSK data rows, gaussian
    CN(0,1) sensing row."""
    cfg = scn.cfg
    q = rng.integers(0, 4, size=(cfg.n_ue, cfg.block_len))
    data = np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * q))
    probe = complex_normal(rng, (1, cfg.block_len))
    return np.concatenate([data, probe], axis=0)


def transmit_signal(wset, s):
    """Per-AP antenna-domain blocks x_k = W_k S, stacked (n_tx, m_ap, N)."""
    return np.einsum("kml,ln->kmn", wset, s)


def ue_received(channels, wset, s, i, scn, rng):
    """UE i's block over the fading links, with thermal noise.

    Returns (noisy, noiseless), both (m_ue, N).
    """
    x = transmit_signal(wset, s)
    clean = np.einsum("kum,kmn->un", channels.h[i], x)
    noise = complex_normal(rng, clean.shape, scn.sigma_i2)
    return clean + noise, clean


def comm_sinr(channels, wset, u, i, k, scn):
    """Post-combining SINR of UE i's stream from AP k.

    Interference counts the other UE streams and the sensing stream from
    the same AP, plus noise scaled by the combiner norm.
    """
    g = channels.h[i, k].conj().T @ u  # effective channel seen through u
    sig = np.abs(g.conj() @ wset[k, :, i]) ** 2
    proj = g.conj() @ wset[k]
    interf = np.sum(np.abs(proj) ** 2) - np.abs(proj[i]) ** 2
    noise = scn.sigma_i2 * np.real(u.conj() @ u)
    return float(sig / (interf + noise))


def rx_ap_received(geom, alpha, wset, s, scn, rng):
    """Echo blocks at every sensing Rx AP, stacked (n_rx, m_ap, N).

    y_r = sum_k alpha_rk sqrt(beta_rk) a(phi_r) a(phi_k)^T x_k + noise.
    """
    cfg = scn.cfg
    x = transmit_signal(wset, s)
    a_tx = np.stack([steering_vector(p, cfg.m_ap) for p in geom.phi_tx])
    a_rx = np.stack([steering_vector(p, cfg.m_ap) for p in geom.phi_rx])
    # per (r, k): scalar gain times rank-one outer product acting on x_k
    proj = np.einsum("km,kmn->kn", a_tx, x)  # a(phi_k)^T x_k
    gain = alpha * np.sqrt(geom.beta)  # (n_rx, n_tx)
    y = np.einsum("rk,rm,kn->rmn", gain, a_rx, proj)
    y += complex_normal(rng, y.shape, scn.sigma_n2)
    return y


def sensing_quadratic_matrix(geom, rcs_cov, wset, scn):
    """The (n_ue+1) x (n_ue+1) Hermitian PSD matrix M and scale zeta such
    that the sensing SINR is zeta * sum_n s[n]^H M s[n].

    M = sum_{k,j} Phi_kj W_k^H a*(phi_k) a(phi_j)^T W_j collapses to
    B^H Phi B with B rows b_k = a(phi_k)^T W_k, and
    Phi_kj = m_ap * cov_kj * sum_r sqrt(beta_rk beta_rj).
    """
    cfg = scn.cfg
    a_tx = np.stack([steering_vector(p, cfg.m_ap) for p in geom.phi_tx])
    b = np.einsum("km,kml->kl", a_tx, wset)  # (n_tx, n_ue+1)
    root_beta = np.sqrt(geom.beta)
    phi = cfg.m_ap * rcs_cov * (root_beta.T @ root_beta)
    m = b.conj().T @ phi @ b
    zeta = 1.0 / ((cfg.block_len - 1) * cfg.m_ap * cfg.n_rx * scn.sigma_n2)
    return m, zeta


def sensing_sinr(geom, rcs_cov, wset, s, scn):
    """Network sensing SINR of a transmitted block (Hermitian form over the
    realized symbols; always real and nonnegative)."""
    m, zeta = sensing_quadratic_matrix(geom, rcs_cov, wset, scn)
    val = np.einsum("ln,lm,mn->", s.conj(), m, s)
    assert abs(val.imag) <= 1e-9 * max(1.0, abs(val.real))
    return float(zeta * val.real)


def expected_sensing_sinr(geom, rcs_cov, wset, scn):
    """Symbol-averaged sensing SINR: E[s s^H] = I turns the block sum into
    block_len * tr(M)."""
    m, zeta = sensing_quadratic_matrix(geom, rcs_cov, wset, scn)
    return float(zeta * scn.cfg.block_len * np.real(np.trace(m)))
