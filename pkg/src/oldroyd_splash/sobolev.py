"""Computable stand-ins for the anisotropic space-time Sobolev norms.

Spatial norms multiply a nodal field by a cutoff in the grid's radial
coordinate, resample it on a periodic square and weight the FFT by
``(1 + |k|^2)^s``. Time norms reflect the uniformly sampled series evenly
and weight its DFT the same way. Both are diagnostic grade: they depend on
the cutoff and the padding, and only feed trend checks.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import Delaunay

from .errors import ShapeError, ParamError

CUTOFF_INNER = 0.9


@dataclass(frozen=True)
class NormSpec:
    s: float = 2.25
    gamma: float = 1.1
    window: int = 0  # 0 uses every sample

    def __post_init__(self):
        if not 2 < self.s < 2.5:
            raise ParamError("must satisfy 2 < s < 2.5", pointer="/norm/s")
        if not 1 < self.gamma < self.s - 1:
            raise ParamError("must satisfy 1 < gamma < s - 1", pointer="/norm/gamma")


def cutoff(eta, inner=CUTOFF_INNER):
    """Smooth step: 1 for eta <= inner, 0 at eta = 1."""
    x = np.clip((np.asarray(eta, dtype=float) - inner) / (1.0 - inner), 0.0, 1.0)

    def psi(u):
        return np.where(u > 0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)

    return psi(1 - x) / (psi(1 - x) + psi(x))


def periodic_h_norm(values, length, s, homogeneous=False):
    """H^s norm of samples on a uniform periodic square of side ``length``.

    ``values`` has shape ``(M, M)`` or ``(M, M, c)``; components add in
    quadrature.
    """
    f = np.asarray(values, dtype=float)
    if f.ndim == 2:
        f = f[..., None]
    M = f.shape[0]
    k = 2 * np.pi * np.fft.fftfreq(M, d=length / M)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    w = k2 ** s if homogeneous else (1.0 + k2) ** s
    F = np.fft.fft2(f, axes=(0, 1))
    cell = (length / M) ** 2
    total = cell / M**2 * np.sum(w[..., None] * np.abs(F) ** 2)
    return float(np.sqrt(total))


class SquareSampler:
    """Resamples nodal fields times the cutoff onto a padded periodic square."""

    def __init__(self, grid, M=64, pad=1.25):
        self.grid = grid
        lo, hi = grid.nodes.min(axis=0), grid.nodes.max(axis=0)
        centre = 0.5 * (lo + hi)
        self.length = float(pad * (hi - lo).max())
        xs = centre[0] - 0.5 * self.length + self.length * np.arange(M) / M
        ys = centre[1] - 0.5 * self.length + self.length * np.arange(M) / M
        self.points = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1)
        self.M = M
        self.tri = Delaunay(grid.nodes)
        self.chi = np.repeat(cutoff(grid.eta), grid.n)

    def sample(self, field):
        f = np.asarray(field, dtype=float).reshape(self.grid.N, -1) * self.chi[:, None]
        interp = LinearNDInterpolator(self.tri, f, fill_value=0.0)
        return interp(self.points.reshape(-1, 2)).reshape(self.M, self.M, -1)


_SAMPLERS = {}


def _sampler(grid, M):
    key = (id(grid), M)
    if key not in _SAMPLERS:
        _SAMPLERS[key] = SquareSampler(grid, M)
    return _SAMPLERS[key]


def h_norm(grid, field, s, M=64):
    if s < 0:
        raise ParamError("must be >= 0", pointer="/norm/s")
    sm = _sampler(grid, M)
    return periodic_h_norm(sm.sample(field), sm.length, s)


def time_norm(series, dt, r, homogeneous=False, space_weights=None):
    """H^r in time of a uniformly sampled series with values in L^2 of space.

    ``series`` has shape ``(K, ...)``. The series is reflected evenly so the
    DFT sees no jump at the ends; the reflected energy is halved.
    """
    f = np.asarray(series, dtype=float)
    K = f.shape[0]
    f = f.reshape(K, -1)
    ext = np.concatenate([f, f[-2:0:-1]], axis=0)
    L = ext.shape[0]
    F = np.fft.fft(ext, axis=0)
    om = 2 * np.pi * np.fft.fftfreq(L, d=dt)
    w = np.abs(om) ** (2 * r) if homogeneous else (1.0 + om**2) ** r
    sw = np.ones(f.shape[1]) if space_weights is None else np.asarray(space_weights, dtype=float)
    total = 0.5 * dt / L * np.sum(w[:, None] * np.abs(F) ** 2 * sw[None, :])
    return float(np.sqrt(total))


def _check_series(times, series):
    t = np.asarray(times, dtype=float)
    if len(t) < 4 or len(series) != len(t):
        raise ShapeError("need at least 4 equally spaced samples")
    d = np.diff(t)
    if np.any(np.abs(d - d[0]) > 1e-9 * max(1.0, abs(t[-1]))):
        raise ShapeError("time samples must be uniformly spaced")
    return t, float(d[0])


def _trapz_weights(K, dt):
    w = np.full(K, dt)
    w[[0, -1]] *= 0.5
    return w


def boundary_norm(values, s):
    """H^s along the boundary ring, parameterized by angle on [0, 2 pi)."""
    f = np.asarray(values, dtype=float)
    f = f.reshape(f.shape[0], -1)
    n = f.shape[0]
    F = np.fft.fft(f, axis=0)
    k = np.fft.fftfreq(n, d=1.0 / n)
    w = (1.0 + k**2) ** s
    return float(np.sqrt(2 * np.pi / n**2 * np.sum(w[:, None] * np.abs(F) ** 2)))


def time_space_norms(grid, times, series, spec=None, M=64):
    """Ledger of the space-time norms of a nodal series ``(K, N, ...)``."""
    spec = NormSpec() if spec is None else spec
    t, dt = _check_series(times, series)
    f = np.asarray(series, dtype=float)
    if spec.window:
        t, f = t[-spec.window:], f[-spec.window:]
    K = len(t)
    s, gamma = spec.s, spec.gamma
    wt = _trapz_weights(K, dt)
    hs = np.array([h_norm(grid, f[k], s, M) for k in range(K)])
    hs1 = np.array([h_norm(grid, f[k], s + 1, M) for k in range(K)])
    sw = np.repeat(grid.weights[:, None], f[0].reshape(grid.N, -1).shape[1], axis=1).ravel()
    L2Hs = float(np.sqrt(np.sum(wt * hs**2)))
    Hs2 = time_norm(f, dt, s / 2, space_weights=sw)
    Hs2_semi = time_norm(f, dt, s / 2, homogeneous=True, space_weights=sw)
    pos = t > t[0] if t[0] == 0 else np.ones(K, bool)
    linf14 = float(np.max((t[pos] ** -0.25) * hs1[pos])) if np.any(pos) else 0.0
    # H^2 in time with H^gamma in space via first and second differences
    d1 = np.diff(f, axis=0) / dt
    d2 = np.diff(f, 2, axis=0) / dt**2
    hg0 = np.array([h_norm(grid, f[k], gamma, M) for k in range(K)])
    hg1 = np.array([h_norm(grid, d1[k], gamma, M) for k in range(K - 1)])
    hg2 = np.array([h_norm(grid, d2[k], gamma, M) for k in range(K - 2)])
    H2Hg = float(np.sqrt(np.sum(wt * hg0**2) + dt * np.sum(hg1**2) + dt * np.sum(hg2**2)))
    fb = f[:, grid.boundary]
    sb = s - 0.5
    bnd_space = np.array([boundary_norm(fb[k], sb) for k in range(K)])
    Kb = float(np.sqrt(np.sum(wt * bnd_space**2))) + time_norm(fb, dt, sb / 2, space_weights=None) * np.sqrt(2 * np.pi / grid.n)
    return {
        "K_s": L2Hs + Hs2,
        "L2_Hs": L2Hs,
        "Hs2_L2": Hs2,
        "Hs2_L2_seminorm": Hs2_semi,
        "F_s1_gamma": linf14 + H2Hg,
        "Linf14_Hs1": linf14,
        "H2_Hgamma": H2Hg,
        "K_boundary": Kb,
    }


# -- lemma probes ------------------------------------------------------------
def _band_limited(rng, M, band, components=1):
    k = np.fft.fftfreq(M, d=1.0 / M)
    mask = (np.abs(k)[:, None] <= band) & (np.abs(k)[None, :] <= band)
    c = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) * mask
    return np.real(np.fft.ifft2(c)) * M


def product_lemma_probe(trials=200, s=2.25, r=2.4, bands=(8, 16, 32), rng=None, seed=0):
    """Max of ||v w||_{H^s} / (||v||_{H^r} ||w||_{H^s}) per band limit.

    Fields are random band-limited functions on the 2 pi periodic square,
    sampled finely enough that the product is alias free.
    """
    if not (r > 1 and r >= s >= 0):
        raise ParamError("needs r > 1 and r >= s >= 0", pointer="/probe")
    rng = np.random.default_rng(seed) if rng is None else rng
    L = 2 * np.pi
    out = []
    for band in bands:
        M = 4 * band + 8
        worst = 0.0
        for _ in range(trials):
            v = _band_limited(rng, M, band)
            w = _band_limited(rng, M, band)
            num = periodic_h_norm(v * w, L, s)
            den = periodic_h_norm(v, L, r) * periodic_h_norm(w, L, s)
            worst = max(worst, num / den if den > 0 else 0.0)
        out.append(worst)
    slope = float(np.polyfit(np.log(bands), np.log(out), 1)[0]) if len(bands) > 1 else 0.0
    return {"bands": list(bands), "max_ratio": out, "slope": slope, "pass": bool(slope < 0.1),
            "trials": trials, "s": s, "r": r}


def product_ratio(v, w, length, s, r):
    den = periodic_h_norm(v, length, r) * periodic_h_norm(w, length, s)
    return 0.0 if den == 0 else periodic_h_norm(v * w, length, s) / den


def causal_time_norm(f, dt, sigma, homogeneous=False):
    """H^sigma of samples on [0, T] regarded as zero for t < 0.

    The series is padded with zeros on [-T, 0) and reflected evenly past T
    before the DFT, which is the setting in which integration in time gains
    a power of T.
    """
    f = np.asarray(f, dtype=float)
    ext = np.concatenate([np.zeros(len(f)), f, f[-2:0:-1]])
    L = len(ext)
    F = np.fft.fft(ext)
    om = 2 * np.pi * np.fft.fftfreq(L, d=dt)
    w = np.abs(om) ** (2 * sigma) if homogeneous else (1.0 + om**2) ** sigma
    return float(np.sqrt(0.5 * dt / L * np.sum(w * np.abs(F) ** 2)))


def time_integration_probe(horizons=(1.0, 0.5, 0.25, 0.125), s=0.25, eps=0.1, samples=257, trials=20,
                           rng=None, seed=0, homogeneous=False):
    """Ratio ||int_0^t v||_{H^{s+1-eps}} / ||v||_{H^s} on shrinking intervals.

    Each trial draws a smooth random profile g on [0, 1] and sets
    v(t) = g(t / T) on [0, T], so every horizon sees the same family of
    shapes and the worst ratio over trials estimates the operator bound. Norms are those of
    :func:`causal_time_norm`.
    """
    if not 0 < s < 0.5:
        raise ParamError("needs 0 < s < 1/2", pointer="/probe/s")
    rng = np.random.default_rng(seed) if rng is None else rng
    worst = np.zeros(len(horizons))
    for _ in range(trials):
        a = rng.standard_normal(8) / (1.0 + np.arange(8)) ** 2
        ph = rng.uniform(0, 2 * np.pi, 8)
        for i, T in enumerate(horizons):
            t = np.linspace(0.0, T, samples)
            u = t / T
            v = sum(a[j] * np.cos(np.pi * (j + 1) * u + ph[j]) for j in range(8))
            dt = t[1] - t[0]
            V = np.concatenate([[0.0], np.cumsum(0.5 * dt * (v[1:] + v[:-1]))])
            worst[i] = max(worst[i], causal_time_norm(V, dt, s + 1 - eps, homogeneous)
                           / causal_time_norm(v, dt, s, homogeneous))
    order = np.argsort(horizons)[::-1]
    seq = worst[order]
    hs = np.asarray(horizons, dtype=float)[order]
    slope = float(np.polyfit(np.log(hs), np.log(seq), 1)[0]) if len(hs) > 1 else float("nan")
    return {"horizons": [float(h) for h in hs], "ratio": [float(x) for x in seq], "slope": slope,
            "pass": bool(np.all(np.diff(seq) <= 1e-12))}
