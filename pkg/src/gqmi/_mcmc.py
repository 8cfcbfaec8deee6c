"""Numba kernel for Metropolis-Hastings on a qubit's (p, phi) rectangle.

The main move is a Gaussian random walk with p reflected at 0 and 1 and phi
wrapped mod 2pi, so the proposal is symmetric and needs no Hastings factor.
A small fraction of moves instead propose a fresh uniform point of the
rectangle (also symmetric).  Without them a chain can sit for a long time near
p = 0 or p = 1, where phi barely changes the density and the walk loses its
sense of direction.
"""
import numba
import numpy as np

TWO_PI = 2.0 * np.pi

CANONICAL = 0
FS_GAUSSIAN = 1


@numba.njit(cache=True)
def _logdens(kind, p, phi, a, b, c, d):
    if kind == CANONICAL:
        # a = beta, b = g
        return -a * (1.0 - 2.0 * p + 2.0 * b * np.sqrt(p * (1.0 - p)) * np.cos(phi))
    # FS gaussian: a = p0, b = phi0, c = sigma
    re = np.sqrt((1.0 - a) * (1.0 - p)) + np.sqrt(a * p) * np.cos(b - phi)
    im = np.sqrt(a * p) * np.sin(b - phi)
    o2 = re * re + im * im
    o = np.sqrt(o2)
    dist = np.arctan2(np.sqrt(max(0.0, 1.0 - o2)), o)
    return -dist * dist / (2.0 * c * c)


@numba.njit(cache=True)
def run_chain(kind, a, b, c, d, p, phi, zp, zf, u, jump, jp, jf, thin, burn, out_p, out_f):
    """Advance one chain; returns the number of accepted moves after burn-in."""
    lp = _logdens(kind, p, phi, a, b, c, d)
    acc = 0
    m = 0
    j = 0
    for s in range(zp.shape[0]):
        if jump[s]:
            q = jp[j]
            f = jf[j]
            j += 1
        else:
            q = p + zp[s]
            while q < 0.0 or q > 1.0:
                q = -q if q < 0.0 else 2.0 - q
            f = (phi + zf[s]) % TWO_PI
        lq = _logdens(kind, q, f, a, b, c, d)
        if np.log(u[s]) < lq - lp:
            p = q
            phi = f
            lp = lq
            if s >= burn:
                acc += 1
        if s >= burn and (s - burn) % thin == thin - 1:
            out_p[m] = p
            out_f[m] = phi
            m += 1
    return acc


def sample_chains(kind, params, n, seed, sigma_p, sigma_phi, burn, thin, chains,
                  jump_prob=0.02):
    """Run ``chains`` independent chains and return (p1, phi1, acceptance).

    Each chain owns a stream spawned from ``seed``; the output is the chains
    concatenated in index order and truncated to ``n``.
    """
    a, b, c, d = (list(params) + [0.0] * 4)[:4]
    per = -(-n // chains)
    steps = burn + per * thin
    ps, fs = [], []
    accepted = 0
    for child in np.random.SeedSequence(seed).spawn(chains):
        rng = np.random.default_rng(child)
        p0 = rng.random()
        f0 = rng.random() * TWO_PI
        zp = rng.normal(0.0, sigma_p, steps)
        zf = rng.normal(0.0, sigma_phi, steps)
        u = rng.random(steps)
        jump = rng.random(steps) < jump_prob
        k = int(jump.sum())
        jp = rng.random(k)
        jf = rng.random(k) * TWO_PI
        op = np.empty(per)
        of = np.empty(per)
        accepted += run_chain(kind, float(a), float(b), float(c), float(d),
                              p0, f0, zp, zf, u, jump, jp, jf, thin, burn, op, of)
        ps.append(op)
        fs.append(of)
    rate = accepted / (chains * per * thin)
    return np.concatenate(ps)[:n], np.concatenate(fs)[:n], rate
