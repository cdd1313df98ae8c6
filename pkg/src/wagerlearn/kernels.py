"""Inner loops of the learners.

Every kernel exists twice: an explicit-loop version compiled with numba
and a vectorised numpy version. Both consume the same pre-drawn uniforms
and agree to floating-point rounding. ``NUMBA`` and ``NUMPY`` expose the
two implementations side by side; the module-level names dispatch to the
active backend (see :mod:`wagerlearn._accel`).

Conventions shared by both backends:

* an index is drawn from a distribution by inverse CDF on its cumulative
  sum, ``i = #{j < K-1 : cum_j <= u}``;
* MWU/Hedge weights are rescaled by their sum whenever the sum drops below
  ``RESCALE_BELOW``; ratios, hence the normalised distribution, are unchanged.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit

WSU, MWU, HEDGE = 0, 1, 2
WSU_UX, EXP3 = 0, 1
RESCALE_BELOW = 1e-100
_EXACT_CHUNK_CELLS = 1 << 22  # bound on the (sequences x K) scratch matrix


# ---------------------------------------------------------------- loop forms

def _inverse_cdf_loop(cum, u):
    k = cum.shape[0]
    c = 0
    while c < k - 1 and u >= cum[c]:
        c += 1
    return c


def _weight_path_loop(losses, algo, eta, w0):
    T, K = losses.shape
    out = np.empty((T + 1, K))
    w = w0.copy()
    s = 0.0
    for i in range(K):
        s += w[i]
    for i in range(K):
        out[0, i] = w[i] / s
    for t in range(T):
        if algo == 0:
            avg = 0.0
            for i in range(K):
                avg += w[i] * losses[t, i]
            for i in range(K):
                v = w[i] * (1.0 - eta * (losses[t, i] - avg))
                w[i] = v if v > 0.0 else 0.0
        elif algo == 1:
            for i in range(K):
                w[i] *= 1.0 - eta * losses[t, i]
        else:
            for i in range(K):
                w[i] *= np.exp(-eta * losses[t, i])
        s = 0.0
        for i in range(K):
            s += w[i]
        if algo == 0 or s < RESCALE_BELOW:
            for i in range(K):
                w[i] /= s
            s = 1.0
        for i in range(K):
            out[t + 1, i] = w[i] / s
    return out


def _bandit_path_loop(losses, algo, eta, gamma, uniforms):
    T, K = losses.shape
    pis = np.empty((T + 1, K))
    tildes = np.empty((T, K))
    chosen = np.empty(T, np.int64)
    estimates = np.empty(T)
    w = np.full(K, 1.0 / K)
    cum = np.empty(K)
    for i in range(K):
        pis[0, i] = w[i]
    for t in range(T):
        s = 0.0
        for i in range(K):
            s += w[i]
        acc = 0.0
        for i in range(K):
            if algo == 0:
                p = (1.0 - gamma) * w[i] + gamma / K
            else:
                p = w[i] / s
            tildes[t, i] = p
            acc += p
            cum[i] = acc
        c = _inverse_cdf_loop(cum, uniforms[t])
        chosen[t] = c
        est = losses[t, c] / tildes[t, c]
        estimates[t] = est
        if algo == 0:
            avg = w[c] * est
            for i in range(K):
                lhat = est if i == c else 0.0
                v = w[i] * (1.0 - eta * (lhat - avg))
                w[i] = v if v > 0.0 else 0.0
            s = 0.0
            for i in range(K):
                s += w[i]
            for i in range(K):
                w[i] /= s
        else:
            w[c] *= np.exp(-eta * est)
            s = 0.0
            for i in range(K):
                s += w[i]
            if s < RESCALE_BELOW:
                for i in range(K):
                    w[i] /= s
                s = 1.0
        for i in range(K):
            pis[t + 1, i] = w[i] / s
    return pis, tildes, chosen, estimates


def _lottery_select_loop(cum_probs, uniforms):
    T, K = cum_probs.shape
    chosen = np.empty(T, np.int64)
    counts = np.zeros(K, np.int64)
    for t in range(T):
        off = t * (t + 1) // 2
        for i in range(K):
            counts[i] = 0
        for tau in range(t):
            counts[_inverse_cdf_loop(cum_probs[tau], uniforms[off + tau])] += 1
        m = counts[0]
        for i in range(1, K):
            if counts[i] > m:
                m = counts[i]
        n = 0
        for i in range(K):
            if counts[i] == m:
                n += 1
        pick = int(uniforms[off + t] * n)
        if pick >= n:
            pick = n - 1
        for i in range(K):
            if counts[i] == m:
                if pick == 0:
                    chosen[t] = i
                    break
                pick -= 1
    return chosen


def _sample_block_loop(counts, cum_block, uniforms_block):
    S, K = counts.shape
    B = cum_block.shape[0]
    est = np.zeros((B, K))
    for b in range(B):
        for s in range(S):
            counts[s, _inverse_cdf_loop(cum_block[b], uniforms_block[b, s])] += 1
            m = counts[s, 0]
            for i in range(1, K):
                if counts[s, i] > m:
                    m = counts[s, i]
            n = 0
            for i in range(K):
                if counts[s, i] == m:
                    n += 1
            share = 1.0 / n
            for i in range(K):
                if counts[s, i] == m:
                    est[b, i] += share
        for i in range(K):
            est[b, i] /= S
    return est


def _exact_selection_loop(probs):
    t, K = probs.shape
    res = np.zeros(K)
    if t == 0:
        for i in range(K):
            res[i] = 1.0 / K
        return res
    total = K ** t
    counts = np.zeros(K, np.int64)
    for idx in range(total):
        for i in range(K):
            counts[i] = 0
        p = 1.0
        rem = idx
        for tau in range(t):
            d = rem % K
            rem //= K
            p *= probs[tau, d]
            counts[d] += 1
        if p == 0.0:
            continue
        m = counts[0]
        for i in range(1, K):
            if counts[i] > m:
                m = counts[i]
        n = 0
        for i in range(K):
            if counts[i] == m:
                n += 1
        share = p / n
        for i in range(K):
            if counts[i] == m:
                res[i] += share
    return res


# --------------------------------------------------------------- numpy forms

def _inverse_cdf_np(cum, u):
    """Vectorised inverse CDF: ``cum`` (..., K) rows, ``u`` matching leading shape."""
    k = cum.shape[-1]
    idx = np.sum(cum[..., : k - 1] <= np.asarray(u)[..., None], axis=-1)
    return idx.astype(np.int64)


def _weight_path_np(losses, algo, eta, w0):
    T, K = losses.shape
    out = np.empty((T + 1, K))
    w = w0.astype(np.float64).copy()
    out[0] = w / w.sum()
    for t in range(T):
        ell = losses[t]
        if algo == WSU:
            w = np.maximum(w * (1.0 - eta * (ell - np.dot(w, ell))), 0.0)
            w /= w.sum()
            out[t + 1] = w
            continue
        w = w * (1.0 - eta * ell) if algo == MWU else w * np.exp(-eta * ell)
        s = w.sum()
        if s < RESCALE_BELOW:
            w /= s
            s = 1.0
        out[t + 1] = w / s
    return out


def _bandit_path_np(losses, algo, eta, gamma, uniforms):
    T, K = losses.shape
    pis = np.empty((T + 1, K))
    tildes = np.empty((T, K))
    chosen = np.empty(T, np.int64)
    estimates = np.empty(T)
    w = np.full(K, 1.0 / K)
    pis[0] = w
    for t in range(T):
        s = w.sum()
        p = (1.0 - gamma) * w + gamma / K if algo == WSU_UX else w / s
        tildes[t] = p
        c = int(_inverse_cdf_np(np.cumsum(p), uniforms[t]))
        chosen[t] = c
        est = losses[t, c] / p[c]
        estimates[t] = est
        if algo == WSU_UX:
            lhat = np.zeros(K)
            lhat[c] = est
            w = np.maximum(w * (1.0 - eta * (lhat - w[c] * est)), 0.0)
            w /= w.sum()
            pis[t + 1] = w
        else:
            w[c] *= np.exp(-eta * est)
            s = w.sum()
            if s < RESCALE_BELOW:
                w /= s
                s = 1.0
            pis[t + 1] = w / s
    return pis, tildes, chosen, estimates


def _lottery_select_np(cum_probs, uniforms):
    T, K = cum_probs.shape
    chosen = np.empty(T, np.int64)
    for t in range(T):
        off = t * (t + 1) // 2
        winners = _inverse_cdf_np(cum_probs[:t], uniforms[off: off + t])
        counts = np.bincount(winners, minlength=K)
        tied = np.flatnonzero(counts == counts.max())
        pick = min(int(uniforms[off + t] * tied.size), tied.size - 1)
        chosen[t] = tied[pick]
    return chosen


def _sample_block_np(counts, cum_block, uniforms_block):
    S, K = counts.shape
    rows = np.arange(S)
    est = np.empty((cum_block.shape[0], K))
    for b in range(cum_block.shape[0]):
        winners = _inverse_cdf_np(cum_block[b][None, :], uniforms_block[b])
        counts[rows, winners] += 1
        at_max = counts == counts.max(axis=1, keepdims=True)
        est[b] = (at_max / at_max.sum(axis=1, keepdims=True)).sum(axis=0) / S
    return est


def _exact_selection_np(probs):
    t, K = probs.shape
    if t == 0:
        return np.full(K, 1.0 / K)
    total = K ** t
    out = np.zeros(K)
    chunk = max(1, _EXACT_CHUNK_CELLS // K)
    for lo in range(0, total, chunk):
        seq = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        rows = np.arange(seq.size)
        weight = np.ones(seq.size)
        counts = np.zeros((seq.size, K), dtype=np.int32)
        for tau in range(t):
            d = seq % K
            seq //= K
            weight *= probs[tau, d]
            counts[rows, d] += 1
        at_max = counts == counts.max(axis=1, keepdims=True)
        share = weight / at_max.sum(axis=1)
        out += (at_max * share[:, None]).sum(axis=0)
    return out


NUMPY = SimpleNamespace(
    name="numpy",
    weight_path=_weight_path_np,
    bandit_path=_bandit_path_np,
    lottery_select=_lottery_select_np,
    sample_block=_sample_block_np,
    exact_selection=_exact_selection_np,
)

if HAVE_NUMBA:
    _inverse_cdf_loop = njit(_inverse_cdf_loop)
    NUMBA = SimpleNamespace(
        name="numba",
        weight_path=njit(_weight_path_loop),
        bandit_path=njit(_bandit_path_loop),
        lottery_select=njit(_lottery_select_loop),
        sample_block=njit(_sample_block_loop),
        exact_selection=njit(_exact_selection_loop),
    )
else:  # pragma: no cover
    NUMBA = None

ACTIVE = NUMBA if USE_NUMBA else NUMPY


def weight_path(losses, algo, eta, w0):
    """Distributions ``pi_1..pi_{T+1}`` of a full-information learner, shape (T+1, K)."""
    return ACTIVE.weight_path(np.ascontiguousarray(losses, dtype=np.float64), int(algo),
                              float(eta), np.ascontiguousarray(w0, dtype=np.float64))


def bandit_path(losses, algo, eta, gamma, uniforms):
    """Run a bandit learner. Only ``losses[t, chosen[t]]`` is ever read.

    Returns ``(pis (T+1,K), sampling distributions (T,K), chosen (T,), estimates (T,))``.
    """
    return ACTIVE.bandit_path(np.ascontiguousarray(losses, dtype=np.float64), int(algo),
                              float(eta), float(gamma),
                              np.ascontiguousarray(uniforms, dtype=np.float64))


def lottery_select(cum_probs, uniforms):
    """Per round ``t``, run a fresh winner lottery over rounds before ``t`` and
    return the selected expert. Consumes ``t + 1`` uniforms at round ``t``
    (0-based): ``t`` winner draws, then one tie-break."""
    return ACTIVE.lottery_select(np.ascontiguousarray(cum_probs, dtype=np.float64),
                                 np.ascontiguousarray(uniforms, dtype=np.float64))


def sample_block(counts, cum_block, uniforms_block):
    """Advance per-sample win counts (in place) by one winner draw per row of
    ``cum_block`` and return the tie-shared selection estimate after each row."""
    return ACTIVE.sample_block(counts, np.ascontiguousarray(cum_block, dtype=np.float64),
                               np.ascontiguousarray(uniforms_block, dtype=np.float64))


def exact_selection(probs):
    """Exact most-wins selection distribution by enumerating all ``K**t`` winner sequences."""
    return ACTIVE.exact_selection(np.ascontiguousarray(probs, dtype=np.float64))
