"""Shared builders for small, fast scenarios used across the suite."""

import numpy as np
import pytest

from cfisac.channel import CommChannels
from cfisac.scenario import (
    NetworkLayout,
    SearchGrid,
    SimulationConfig,
    replace,
    validate_config,
)

# position pools for custom-sized layouts (first n entries are used)
TX_POOL = np.array(
    [
        [-500.0, 0.0],
        [500.0, 0.0],
        [0.0, -500.0],
        [0.0, 500.0],
        [-500.0, -500.0],
        [500.0, 500.0],
        [-500.0, 500.0],
        [500.0, -500.0],
    ]
)
RX_POOL = np.array([[250.0, 250.0], [-250.0, -250.0], [-250.0, 250.0], [250.0, -250.0]])
UE_POOL = np.array([[300.0, 300.0], [-300.0, -300.0], [-300.0, 300.0], [300.0, -300.0]])


def make_scenario(
    n_tx=2,
    n_rx=1,
    n_ue=1,
    m_ap=4,
    m_ue=2,
    block_len=8,
    target=(-75.0, 75.0),
    grid=None,
    **cfg_kw,
):
    """Validated scenario with pool positions sized to the counts."""
    cfg = replace(
        SimulationConfig(),
        n_tx=n_tx,
        n_rx=n_rx,
        n_ue=n_ue,
        m_ap=m_ap,
        m_ue=m_ue,
        block_len=block_len,
        **cfg_kw,
    )
    layout = NetworkLayout(
        tx_ap_pos=TX_POOL[:n_tx].copy(),
        rx_ap_pos=RX_POOL[:n_rx].copy(),
        ue_pos=UE_POOL[:n_ue].copy(),
        target_pos=target,
        adversary_index=0,
    )
    return validate_config(cfg, layout, grid)


def manual_channels(h):
    """CommChannels around explicit link matrices h[i, k] (omega all one)."""
    h = np.asarray(h, dtype=complex)
    return CommChannels(h=h, omega=np.ones(h.shape[:2]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
