"""mmWave link layer: three-state pathloss, clustered fading, beamforming, rate map.

Every sampler is a pure function of its inputs and the numpy Generator handed
in, so link realizations are reproducible stream-by-stream.  Distances are in
meters, powers in dBm, pathloss in dB, rates in bits per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

# Three-state distance model: P(OUT) ramps up past ~156 m, LOS decays
# exponentially among non-outage links.
_OUT_A = 5.2
_OUT_B = 0.0334
_LOS_DECAY = 0.0149

# dB pathloss fits and lognormal shadowing sigmas.
_LOS_INTERCEPT = 61.4
_LOS_SLOPE = 20.0
_LOS_SIGMA = 5.8
_NLOS_INTERCEPT = 72.0
_NLOS_SLOPE = 29.2
_NLOS_SIGMA = 8.7


class NodeClass(Enum):
    BS = "BS"
    RN = "RN"
    UE = "UE"


class LinkState(Enum):
    LOS = "LOS"
    NLOS = "NLOS"
    OUT = "OUT"


@dataclass(frozen=True)
class RadioProfile:
    """Per-class radio front end."""

    node_class: NodeClass
    tx_power_dbm: float      # total transmit power
    noise_figure_db: float   # receiver noise figure
    array_side: int          # planar array is array_side x array_side

    def __post_init__(self):
        if self.array_side < 1:
            raise ValueError("array_side must be >= 1")
        if not math.isfinite(self.tx_power_dbm):
            raise ValueError("tx_power_dbm must be finite")
        if not math.isfinite(self.noise_figure_db):
            raise ValueError("noise_figure_db must be finite")

    @property
    def n_antennas(self) -> int:
        return self.array_side * self.array_side


@dataclass(frozen=True)
class ChannelParams:
    """Physical constants shared by every link in a deployment."""

    carrier_hz: float = 28e9
    bandwidth_hz: float = 1e9
    frame_s: float = 1e-6
    alpha1: float = 1.0              # time-sharing fraction
    alpha2_db: float = -3.0          # SNR loss factor
    thermal_noise_dbm_hz: float = -174.0
    cluster_rate: float = 1.9        # Poisson mean for cluster count
    paths_per_cluster: int = 20
    angular_spread_mean_deg: float = 10.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0 or self.frame_s <= 0 or self.carrier_hz <= 0:
            raise ValueError("carrier_hz, bandwidth_hz and frame_s must be positive")
        if not 0 < self.alpha1 <= 1:
            raise ValueError("alpha1 must lie in (0, 1]")
        if self.paths_per_cluster < 1 or self.cluster_rate <= 0:
            raise ValueError("cluster geometry parameters must be positive")
        if self.angular_spread_mean_deg <= 0:
            raise ValueError("angular_spread_mean_deg must be positive")


# Default deployment radio table: BS / relay / handset.
DEFAULT_RADIOS = {
    NodeClass.BS: RadioProfile(NodeClass.BS, tx_power_dbm=30.0, noise_figure_db=5.0, array_side=8),
    NodeClass.RN: RadioProfile(NodeClass.RN, tx_power_dbm=25.0, noise_figure_db=6.0, array_side=6),
    NodeClass.UE: RadioProfile(NodeClass.UE, tx_power_dbm=20.0, noise_figure_db=7.0, array_side=4),
}

DEFAULT_CHANNEL = ChannelParams()


def state_probabilities(distance_m: float) -> tuple[float, float, float]:
    """Analytic (p_los, p_nlos, p_out) for a link of the given length."""
    if not distance_m > 0:
        raise ValueError("distance_m must be positive")
    p_out = 1.0 - min(1.0, math.exp(_OUT_A - _OUT_B * distance_m))
    p_los = (1.0 - p_out) * math.exp(-_LOS_DECAY * distance_m)
    p_nlos = 1.0 - p_out - p_los
    return p_los, p_nlos, p_out


def sample_link_state(distance_m: float, rng: np.random.Generator) -> LinkState:
    """Draw LOS/NLOS/OUT from the three-state distance law (one uniform)."""
    p_los, _, p_out = state_probabilities(distance_m)
    u = rng.uniform()
    if u < p_out:
        return LinkState.OUT
    if u < p_out + p_los:
        return LinkState.LOS
    return LinkState.NLOS


def sample_pathloss_db(state: LinkState, distance_m: float,
                       rng: np.random.Generator) -> float:
    """Omnidirectional pathloss in dB including lognormal shadowing.

    OUT links are +inf and consume no randomness, so disabling outage does
    not perturb the shadowing stream of other links.
    """
    if not distance_m > 0:
        raise ValueError("distance_m must be positive")
    if state is LinkState.OUT:
        return math.inf
    if state is LinkState.LOS:
        return _LOS_INTERCEPT + _LOS_SLOPE * math.log10(distance_m) \
            + rng.normal(0.0, _LOS_SIGMA)
    return _NLOS_INTERCEPT + _NLOS_SLOPE * math.log10(distance_m) \
        + rng.normal(0.0, _NLOS_SIGMA)


def _ula_signature(angles: np.ndarray, n: int) -> np.ndarray:
    """Unit-norm uniform-linear-array response, shape (n, len(angles))."""
    phase = -1j * math.pi * np.sin(angles)
    return np.exp(np.outer(np.arange(n), phase)) / math.sqrt(n)


def sample_fading_matrix(n_rx: int, n_tx: int, params: ChannelParams,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw one clustered small-scale fading matrix H of shape (n_rx, n_tx).

    Clusters: max(1, Poisson(cluster_rate)) of paths_per_cluster paths each.
    Azimuth cluster centers are uniform on [0, 2pi), elevation centers uniform
    on [-pi/2, pi/2); per-path angles spread around the center by a wrapped
    Gaussian whose RMS width is itself Exp(angular_spread_mean_deg), drawn per
    cluster and per angle dimension.  Per-path gains are CN(0, 1) and the sum
    is scaled by sqrt(n_rx * n_tx / L) with L = clusters * paths, so each
    matrix entry has unit average power (E||H||_F^2 = n_rx * n_tx) regardless
    of the cluster draw: the pathloss term carries all the link-budget scale
    and beamforming can realize the full array gain.  Planar arrays factor
    into a Kronecker product of azimuth and elevation linear signatures, so
    antenna counts must be perfect squares.

    Draw order is fixed (cluster count, centers, spreads, offsets, gains) so a
    given generator state always yields the same matrix.
    """
    side_rx = math.isqrt(n_rx)
    side_tx = math.isqrt(n_tx)
    if side_rx * side_rx != n_rx or side_tx * side_tx != n_tx:
        raise ValueError("antenna counts must be perfect squares (planar arrays)")

    n_c = max(1, int(rng.poisson(params.cluster_rate)))
    n_p = params.paths_per_cluster
    n_paths = n_c * n_p

    az_center_rx = rng.uniform(0.0, 2.0 * math.pi, size=n_c)
    az_center_tx = rng.uniform(0.0, 2.0 * math.pi, size=n_c)
    el_center_rx = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=n_c)
    el_center_tx = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=n_c)

    spread_scale = math.radians(params.angular_spread_mean_deg)
    spreads = rng.exponential(spread_scale, size=(4, n_c))
    offsets = rng.standard_normal(size=(4, n_c, n_p)) * spreads[:, :, None]

    az_rx = (az_center_rx[:, None] + offsets[0]).ravel()
    az_tx = (az_center_tx[:, None] + offsets[1]).ravel()
    el_rx = (el_center_rx[:, None] + offsets[2]).ravel()
    el_tx = (el_center_tx[:, None] + offsets[3]).ravel()

    g = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / math.sqrt(2.0)

    if side_rx == 1:
        a_rx = np.ones((1, n_paths), dtype=complex)
    else:
        a_rx = np.einsum("ap,ep->aep", _ula_signature(az_rx, side_rx),
                         _ula_signature(el_rx, side_rx)).reshape(n_rx, n_paths)
    if side_tx == 1:
        a_tx = np.ones((1, n_paths), dtype=complex)
    else:
        a_tx = np.einsum("ap,ep->aep", _ula_signature(az_tx, side_tx),
                         _ula_signature(el_tx, side_tx)).reshape(n_tx, n_paths)

    return (a_rx * g) @ a_tx.T * math.sqrt(n_rx * n_tx / n_paths)


def beamform_gain(h: np.ndarray, tol: float = 1e-9,
                  max_iter: int = 20000) -> tuple[float, np.ndarray, np.ndarray]:
    """Largest singular value of h with its transmit/receive unit vectors.

    Power iteration on h^H h from a deterministic all-ones start plus one
    fixed orthogonal start; the better of the two runs wins.  The second
    start is unconditional because a start exactly orthogonal to the leading
    eigenspace converges (to the wrong eigenvalue) without ever stalling, so
    a stall test alone cannot catch it.  A zero matrix returns gain 0 with
    placeholder unit vectors.

    Returns:
        (gain, w_t, w_r) with gain = |w_r^H h w_t| and unit-norm vectors.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.size == 0:
        raise ValueError("h must be a nonempty 2-D array")
    n_rx, n_tx = h.shape

    def unit(i: int, n: int) -> np.ndarray:
        v = np.zeros(n, dtype=complex)
        v[i] = 1.0
        return v

    if not np.isfinite(h).all():
        raise ValueError("h must be finite")
    if np.linalg.norm(h) == 0.0:
        return 0.0, unit(0, n_tx), unit(0, n_rx)

    a = h.conj().T @ h

    def run(v: np.ndarray) -> tuple[float, np.ndarray, bool]:
        v = v / np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = a @ v
            lam_new = float(np.linalg.norm(w))
            if lam_new == 0.0:
                return 0.0, v, False  # start lies in the null space
            v = w / lam_new
            if abs(lam_new - lam) <= tol * lam_new:
                return lam_new, v, True
            lam = lam_new
        return lam, v, False

    start = np.ones(n_tx, dtype=complex)
    lam, v, _ = run(start)
    if n_tx >= 2:
        alt = np.zeros(n_tx, dtype=complex)
        alt[0], alt[1] = 1.0, -1.0
        lam2, v2, _ = run(alt)
        if lam2 > lam:
            lam, v = lam2, v2
    if lam == 0.0:
        return 0.0, unit(0, n_tx), unit(0, n_rx)
    hv = h @ v
    gain = float(np.linalg.norm(hv))
    return gain, v, hv / gain


@dataclass
class LinkChannel:
    """One directed link's frozen channel realization.

    beam_gain is the composite amplitude |g| * sigma_max(H) where g is the
    pathloss amplitude 10^(-pathloss_db/20); fading_gain keeps the array part
    separate.  The fading matrix and beam vectors are retained only when the
    sampler is asked to (they are needed for interference diagnostics, not
    for rate computation).
    """

    state: LinkState
    pathloss_db: float
    fading_gain: float
    w_t: Optional[np.ndarray] = None
    w_r: Optional[np.ndarray] = None
    fading: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if (self.pathloss_db == math.inf) != (self.state is LinkState.OUT):
            raise ValueError("pathloss_db is +inf exactly for OUT links")
        if self.fading_gain < 0:
            raise ValueError("fading_gain must be nonnegative")

    @property
    def pathloss_amplitude(self) -> float:
        return 10.0 ** (-self.pathloss_db / 20.0)

    @property
    def beam_gain(self) -> float:
        return self.pathloss_amplitude * self.fading_gain


def sample_link_channel(distance_m: float, n_rx: int, n_tx: int,
                        params: ChannelParams, rng: np.random.Generator,
                        keep_fading: bool = False) -> LinkChannel:
    """Compose state, shadowed pathloss and beamformed fading for one link.

    OUT links consume only the state draw.
    """
    state = sample_link_state(distance_m, rng)
    if state is LinkState.OUT:
        return LinkChannel(state=state, pathloss_db=math.inf, fading_gain=0.0)
    pl = sample_pathloss_db(state, distance_m, rng)
    h = sample_fading_matrix(n_rx, n_tx, params, rng)
    gain, w_t, w_r = beamform_gain(h)
    return LinkChannel(state=state, pathloss_db=pl, fading_gain=gain,
                       w_t=w_t, w_r=w_r, fading=h if keep_fading else None)


def link_rate_bits(p_share: float, tx: RadioProfile, rx: RadioProfile,
                   chan: LinkChannel, params: ChannelParams) -> float:
    """Bits deliverable over one frame at the given transmit power share.

    Noise-limited map: r = alpha1 * T_f * W * log2(1 + alpha2 * p * P * |G|^2
    / (W * N0)) with |G| the composite beam gain and N0 the thermal density
    raised by the receiver's noise figure.  OUT links carry nothing.
    """
    if not 0.0 <= p_share <= 1.0:
        raise ValueError("p_share must lie in [0, 1]")
    if chan.state is LinkState.OUT:
        return 0.0
    p_watt = 10.0 ** ((tx.tx_power_dbm - 30.0) / 10.0)
    noise_density = 10.0 ** ((params.thermal_noise_dbm_hz + rx.noise_figure_db - 30.0) / 10.0)
    noise_watt = noise_density * params.bandwidth_hz
    alpha2 = 10.0 ** (params.alpha2_db / 10.0)
    snr = alpha2 * p_share * p_watt * chan.beam_gain ** 2 / noise_watt
    return params.alpha1 * params.frame_s * params.bandwidth_hz * math.log2(1.0 + snr)


def interference_power_diagnostic(
    active: list[tuple[int, int]],
    channels: dict[tuple[int, int], LinkChannel],
    tx_power_dbm: dict[int, float],
    p_share: dict[tuple[int, int], float],
) -> dict[tuple[int, int], float]:
    """Residual cross-beam interference power (watts) at each active link.

    For link (n, m) three leakage families are summed, each family being a
    sum of independent unit-power signals so its power is the sum of squared
    coupling coefficients times allocated power: the transmitter's own other
    beams arriving through H_{n,m}, other transmitters' beams intended for m,
    and those transmitters' beams intended for third parties.  Channels must
    retain fading matrices and beam vectors for every active link.

    Used for offline validation of the noise-limited rate assumption only;
    the simulator never feeds this back into rates.
    """
    for (i, j) in active:
        ch = channels.get((i, j))
        if ch is None or ch.fading is None or ch.w_t is None or ch.w_r is None:
            raise ValueError(f"active link {(i, j)} lacks a retained fading matrix/beams")

    def p_watt(node: int) -> float:
        return 10.0 ** ((tx_power_dbm[node] - 30.0) / 10.0)

    def coupling(rx_link: tuple[int, int], through: tuple[int, int],
                 tx_link: tuple[int, int]) -> float:
        w_r = channels[rx_link].w_r
        h = channels[through].fading
        w_t = channels[tx_link].w_t
        return float(abs(np.vdot(w_r, h @ w_t)) ** 2)

    out: dict[tuple[int, int], float] = {}
    for (n, m) in active:
        g2_nm = channels[(n, m)].pathloss_amplitude ** 2
        total = 0.0
        for (i, j) in active:
            if i == n and j != m:
                # own beams aimed at other receivers, leaking through H_{n,m}
                total += coupling((n, m), (n, m), (n, j)) * g2_nm \
                    * p_share[(n, j)] * p_watt(n)
            elif i != n:
                # other transmitters' beams -- whether aimed at m itself or
                # at a third party -- leaking through H_{i,m}; pairs with no
                # retained channel are out of range and contribute nothing
                ch_im = channels.get((i, m))
                if ch_im is None or ch_im.fading is None:
                    continue
                g2_im = ch_im.pathloss_amplitude ** 2
                total += coupling((n, m), (i, m), (i, j)) * g2_im \
                    * p_share[(i, j)] * p_watt(i)
        out[(n, m)] = total
    return out
