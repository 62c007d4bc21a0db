"""Pure numpy implementations of the hot kernels (reference and fallback)."""
import numpy as np


def sinr_pair(channels, w, noise):
    """Return ``(multicast_sinr, unicast_sinr)`` for every user.

    channels: (K, M) complex, w: (K+1, M) complex, noise: (K,).
    """
    g = np.abs(np.conj(channels) @ w.T) ** 2  # g[k, m] = |h_k^H w_m|^2
    K = channels.shape[0]
    unicast_total = g[:, 1:].sum(axis=1)
    signal_u = g[np.arange(K), np.arange(1, K + 1)]
    sm = g[:, 0] / (unicast_total + noise)
    su = signal_u / (unicast_total - signal_u + noise)
    return sm, su


def link_prune_sweep(Z, noise, block_power, capacity, eta):
    """Best link-pruned candidate over all power thresholds.

    ``Z[k, m, n] = h_{k,n}^H w_{m,n}`` and ``block_power[m, n] = ||w_{m,n}||^2``.
    For every threshold ``p`` equal to one of the block powers, blocks with
    power below ``p`` are switched off, the supported rates are computed and
    scaled uniformly until every per-BS load ``sum_m s_{m,n} r_m`` is at most
    ``capacity[n]`` (bit/s/Hz).  Returns ``(objective, mask, rates)`` of the
    best candidate, with objective ``eta*r_0 + (1-eta)*sum r_k``.
    """
    K, M, N = Z.shape
    flat = block_power.ravel()
    order = np.argsort(-flat, kind="stable")
    p_sorted = flat[order]
    J = order.size
    m_idx, n_idx = np.divmod(order, N)
    contrib = np.zeros((J, K, M), complex)
    contrib[np.arange(J), :, m_idx] = Z[:, m_idx, n_idx].T
    inner = np.cumsum(contrib, axis=0)
    g = np.abs(inner) ** 2  # (J, K, M)
    unicast_total = g[:, :, 1:].sum(axis=2)
    signal_u = g[:, np.arange(K), np.arange(1, K + 1)]
    sm = g[:, :, 0] / (unicast_total + noise)
    su = signal_u / (unicast_total - signal_u + noise)
    rates = np.empty((J, M))
    rates[:, 0] = np.log2(1.0 + sm.min(axis=1))
    rates[:, 1:] = np.log2(1.0 + su)
    onehot = np.zeros((J, M * N))
    onehot[np.arange(J), order] = 1.0
    masks = np.cumsum(onehot, axis=0).reshape(J, M, N)
    load = np.einsum("jmn,jm->jn", masks, rates)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(load > 0, capacity[None, :] / load, np.inf)
    scale = np.minimum(ratio.min(axis=1), 1.0)
    rates *= scale[:, None]
    obj = eta * rates[:, 0] + (1.0 - eta) * rates[:, 1:].sum(axis=1)
    # Ties: a threshold keeps every block with power >= p, so only prefixes that
    # end a group of equal powers are valid candidates.
    valid = np.ones(J, bool)
    valid[:-1] = p_sorted[1:] < p_sorted[:-1]
    obj = np.where(valid, obj, -np.inf)
    j = int(np.argmax(obj))
    return float(obj[j]), masks[j].astype(np.int8), rates[j].copy()
