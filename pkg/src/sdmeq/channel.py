"""Random SDM channel realizations, in-line optical filters and noise coloring.

A link is a cascade of ``K`` sections. Each section applies
``V diag(exp(g/2 - j 2 pi f tau)) U^H`` with Haar-random couplings ``U``, ``V``,
zero-sum Gaussian log-gains ``g`` (nepers) and zero-sum Gaussian delays ``tau``.
A target path chains links, optical filters (OXC nodes) and ASE noise
injection points; the colored noise it produces at the receiver is undone
by a per-frequency whitening transform.
"""
from dataclasses import dataclass, field
import hashlib
import math

import numpy as np

from .errors import InvalidDimensionError, InvalidSpecError, NumericalDomainError

NEPER_PER_DB = math.log(10.0) / 10.0


# ----------------------------------------------------------------------------
# types
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FreqGrid:
    """Uniform frequency grid ``f_start + i * f_step``, ``i < n_bins``."""

    f_start: float
    f_step: float
    n_bins: int

    def __post_init__(self):
        if self.n_bins < 2:
            raise InvalidSpecError("a frequency grid needs at least 2 bins")
        if not self.f_step > 0:
            raise InvalidSpecError("f_step must be positive")

    @property
    def freqs(self):
        return self.f_start + self.f_step * np.arange(self.n_bins)

    @property
    def bandwidth(self):
        return self.f_step * self.n_bins

    @classmethod
    def centered(cls, bandwidth, n_bins=1000):
        """``n_bins`` bins spanning ``[-bandwidth/2, bandwidth/2)``."""
        step = bandwidth / n_bins
        return cls(-0.5 * bandwidth, step, int(n_bins))


@dataclass
class FreqResponse:
    """A (2N)x(2N) matrix per frequency bin; ``matrices`` is (n_bins, 2N, 2N)."""

    grid: FreqGrid
    matrices: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrices)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise InvalidDimensionError(f"matrices must be (n_bins, d, d), got {m.shape}")
        if m.shape[0] != self.grid.n_bins:
            raise InvalidDimensionError(
                f"{m.shape[0]} matrices for a {self.grid.n_bins}-bin grid")
        self.matrices = m.astype(np.complex128, copy=False)

    @property
    def dim(self):
        return self.matrices.shape[1]

    @property
    def freqs(self):
        return self.grid.freqs

    @classmethod
    def identity(cls, grid, dim):
        eye = np.broadcast_to(np.eye(dim, dtype=np.complex128), (grid.n_bins, dim, dim))
        return cls(grid, eye.copy())

    def __matmul__(self, other):
        if other.grid != self.grid:
            raise InvalidDimensionError("frequency grids differ")
        if other.dim != self.dim:
            raise InvalidDimensionError("matrix dimensions differ")
        return FreqResponse(self.grid, self.matrices @ other.matrices)

    def scaled(self, gains):
        """Multiply bin ``i`` by the scalar ``gains[i]``."""
        return FreqResponse(self.grid, self.matrices * np.asarray(gains)[:, None, None])

    def checksum(self):
        h = hashlib.sha256()
        h.update(np.asarray([self.grid.f_start, self.grid.f_step], dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.matrices, dtype="<c16").tobytes())
        return h.hexdigest()[:16]


@dataclass
class SectionParams:
    g: np.ndarray  # log-power gains, nepers
    tau: np.ndarray  # mode delays, seconds
    U: np.ndarray
    V: np.ndarray

    @property
    def dim(self):
        return self.g.shape[0]


@dataclass(frozen=True)
class LinkSpec:
    """Statistics of one link; ``sigma_dmd`` is seconds per section."""

    n_modes: int
    K: int = 50
    section_length: float = 10.0  # km
    sigma_mdl: float = 0.0  # dB per section
    sigma_dmd: float = 0.0  # s per section

    def __post_init__(self):
        if self.K < 1:
            raise InvalidSpecError("K must be >= 1")
        if self.n_modes < 1:
            raise InvalidSpecError("n_modes must be >= 1")
        if self.sigma_mdl < 0 or self.sigma_dmd < 0:
            raise InvalidSpecError("standard deviations must be non-negative")

    @property
    def dim(self):
        return 2 * self.n_modes

    @staticmethod
    def dmd_per_section(coeff_ps_per_sqrt_km, section_length_km):
        """Section DMD std (seconds) from a ps/sqrt(km) coefficient."""
        return coeff_ps_per_sqrt_km * math.sqrt(section_length_km) * 1e-12


@dataclass(frozen=True)
class FilterSpec:
    """Super-Gaussian optical filter; ``order`` n gives |G|^2 = 2^-(2f/B)^(2n)."""

    order: float = 2.0
    b3db: float = 15e9
    center: float = 0.0

    def __post_init__(self):
        if self.order < 1:
            raise InvalidSpecError("filter order must be >= 1")
        if not self.b3db > 0:
            raise InvalidSpecError("b3db must be positive")


TX = "TX"
RX = "RX"


@dataclass
class PathSpec:
    """Links in propagation order plus filters and noise injection points.

    Filter placements: ``"TX"``, ``"RX"`` or an integer ``i`` in ``[1, L-1]``
    meaning "at the node before link ``i``" (0-based links). Noise injections
    are ``(link_index, fraction)``: ASE added at the output of that link,
    ahead of any node filter that follows it. ``None`` injects ``1/L`` after
    every link.
    """

    links: list
    filters: list = field(default_factory=list)
    noise_injections: list = None

    def __post_init__(self):
        if not self.links:
            raise InvalidSpecError("a path needs at least one link")
        dims = {link.dim for link in self.links}
        if len(dims) != 1:
            raise InvalidSpecError("all links must carry the same number of modes")
        L = len(self.links)
        for placement, spec in self.filters:
            if not isinstance(spec, FilterSpec):
                raise InvalidSpecError("filters must be (placement, FilterSpec) pairs")
            if placement in (TX, RX):
                continue
            if not isinstance(placement, (int, np.integer)) or not 1 <= placement <= L - 1:
                raise InvalidSpecError(
                    f"filter placement {placement!r} must be 'TX', 'RX' or in [1, {L - 1}]")
        if self.noise_injections is None:
            self.noise_injections = [(i, 1.0 / L) for i in range(L)]
        if not self.noise_injections:
            raise InvalidSpecError("at least one noise injection point is required")
        for idx, frac in self.noise_injections:
            if not 0 <= idx < L:
                raise InvalidSpecError(f"noise injection after link {idx} does not exist")
            if frac < 0:
                raise InvalidSpecError("noise fractions must be non-negative")
        total = sum(frac for _, frac in self.noise_injections)
        if abs(total - 1.0) > 1e-9:
            raise InvalidSpecError(f"noise fractions sum to {total}, not 1")

    @property
    def dim(self):
        return self.links[0].dim


# ----------------------------------------------------------------------------
# random draws
# ----------------------------------------------------------------------------


def haar_unitary(rng, n):
    """Haar-distributed n x n unitary matrix.

    QR of a complex Ginibre matrix, with the phases of ``diag(R)`` moved into
    ``Q`` so the result does not depend on the QR sign convention.
    """
    if n < 1:
        raise InvalidDimensionError(f"unitary dimension must be >= 1, got {n}")
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def draw_section(rng, link):
    d = link.dim
    g = rng.standard_normal(d) * (link.sigma_mdl * NEPER_PER_DB)
    g -= g.mean()
    tau = rng.standard_normal(d) * link.sigma_dmd
    tau -= tau.mean()
    U = haar_unitary(rng, d)
    V = haar_unitary(rng, d)
    return SectionParams(g=g, tau=tau, U=U, V=V)


def draw_link(rng, link):
    return [draw_section(rng, link) for _ in range(link.K)]


# ----------------------------------------------------------------------------
# frequency responses
# ----------------------------------------------------------------------------


def _section_matrices(sec, f):
    f = np.atleast_1d(np.asarray(f, dtype=float))
    lam = np.exp(0.5 * sec.g[None, :] - 2j * np.pi * f[:, None] * sec.tau[None, :])
    return (sec.V[None, :, :] * lam[:, None, :]) @ sec.U.conj().T


def section_response(sec, f):
    """``V diag(exp(g/2 - j 2 pi f tau)) U^H`` at a single frequency (Hz)."""
    return _section_matrices(sec, f)[0]


def link_response(sections, grid):
    """Per-bin product ``M_K ... M_2 M_1`` (section 1 acts first)."""
    if not sections:
        raise InvalidSpecError("a link needs at least one section")
    d = sections[0].dim
    if any(sec.dim != d for sec in sections):
        raise InvalidDimensionError("sections disagree on the mode count")
    f = grid.freqs
    H = _section_matrices(sections[0], f)
    for sec in sections[1:]:
        H = _section_matrices(sec, f) @ H
    return FreqResponse(grid, H)


def supergaussian_gain(flt, f):
    """Zero-phase super-Gaussian amplitude ``2^(-0.5 (2 (f - fc) / B)^(2 n))``."""
    x = 2.0 * (np.asarray(f, dtype=float) - flt.center) / flt.b3db
    return np.exp2(-0.5 * np.abs(x) ** (2.0 * flt.order))


@dataclass
class PathRealization:
    """One draw of a target path.

    ``H`` is the end-to-end response; ``downstream[j]`` is the cascade seen by
    the noise of ``path.noise_injections[j]``.
    """

    path: PathSpec
    sections: list  # per link, list of SectionParams
    H: FreqResponse
    downstream: list


def draw_path(rng, path):
    """Draw every section of every link, in link then section order."""
    return [draw_link(rng, link) for link in path.links]


def _stages(path):
    """Ordered cascade: ('filter', spec) | ('link', i) | ('noise', j)."""
    L = len(path.links)
    stages = [("filter", spec) for place, spec in path.filters if place == TX]
    for i in range(L):
        if i > 0:
            stages += [("filter", spec) for place, spec in path.filters
                       if not isinstance(place, str) and place == i]
        stages.append(("link", i))
        stages += [("noise", j) for j, (idx, _) in enumerate(path.noise_injections)
                   if idx == i]
    stages += [("filter", spec) for place, spec in path.filters if place == RX]
    return stages


def path_response(path, rng, grid, sections=None):
    """Cascade the links and filters of ``path`` on ``grid``.

    Returns ``(H, downstream)`` where ``downstream[j]`` is the product of every
    stage strictly after noise injection ``j``. Pass ``sections`` (from
    :func:`draw_path`) to re-evaluate a fixed realization on another grid;
    otherwise they are drawn from ``rng``.
    """
    if sections is None:
        sections = draw_path(rng, path)
    d = path.dim
    f = grid.freqs
    link_H = [link_response(secs, grid).matrices for secs in sections]

    H = np.broadcast_to(np.eye(d, dtype=np.complex128), (grid.n_bins, d, d)).copy()
    # noise injections accumulate everything downstream of them as we go
    pending = {}
    for kind, item in _stages(path):
        if kind == "noise":
            pending[item] = np.broadcast_to(
                np.eye(d, dtype=np.complex128), (grid.n_bins, d, d)).copy()
            continue
        if kind == "link":
            stage = link_H[item]
            H = stage @ H
            for key in pending:
                pending[key] = stage @ pending[key]
        else:
            gain = supergaussian_gain(item, f)[:, None, None]
            H = H * gain
            for key in pending:
                pending[key] = pending[key] * gain
    downstream = [FreqResponse(grid, pending[j]) for j in range(len(path.noise_injections))]
    return FreqResponse(grid, H), downstream


def realize_path(path, rng, grid):
    sections = draw_path(rng, path)
    H, downstream = path_response(path, rng, grid, sections=sections)
    return PathRealization(path=path, sections=sections, H=H, downstream=downstream)


# ----------------------------------------------------------------------------
# noise coloring
# ----------------------------------------------------------------------------


def noise_covariance(downstream, fractions, n0_half):
    """``Wn(f) = sum_l frac_l (N0/2) D_l(f) D_l(f)^H``."""
    if not downstream:
        raise InvalidSpecError("no noise injection points")
    if len(fractions) != len(downstream):
        raise InvalidSpecError("one fraction per downstream cascade is required")
    grid = downstream[0].grid
    acc = np.zeros_like(downstream[0].matrices)
    for D, frac in zip(downstream, fractions):
        if D.grid != grid:
            raise InvalidDimensionError("downstream cascades live on different grids")
        Dm = D.matrices
        acc += (frac * n0_half) * (Dm @ Dm.conj().transpose(0, 2, 1))
    acc = 0.5 * (acc + acc.conj().transpose(0, 2, 1))
    return FreqResponse(grid, acc)


def path_noise_covariance(path, downstream, n0_half):
    return noise_covariance(downstream, [frac for _, frac in path.noise_injections], n0_half)


def _is_scaled_identity(Wn):
    m = Wn.matrices
    d = m.shape[1]
    diag = np.real(np.diagonal(m, axis1=1, axis2=2))
    off = m - diag[:, :, None] * np.eye(d)[None]
    return not np.any(off) and np.all(diag == diag[:, :1])


def whiten(H, Wn, n0_half, floor=1e-12):
    """Return ``((1/(N0/2)) Wn)^(-1/2) H`` so the residual noise is white at N0/2.

    Eigenvalues of the normalized covariance are floored at ``floor`` times
    the largest eigenvalue over all bins.
    """
    if H.grid != Wn.grid:
        raise InvalidDimensionError("H and Wn live on different grids")
    if H.dim != Wn.dim:
        raise InvalidDimensionError("H and Wn disagree on dimension")
    C = Wn.matrices / n0_half
    if _is_scaled_identity(Wn):
        c = np.real(C[:, 0, 0])
        if np.any(c < -1e-12 * np.max(np.abs(c))):
            raise NumericalDomainError("noise covariance has negative eigenvalues")
        c = np.maximum(c, floor * np.max(c))
        return FreqResponse(H.grid, H.matrices / np.sqrt(c)[:, None, None])
    lam, Q = np.linalg.eigh(C)
    lam_max = lam.max()
    if lam_max <= 0:
        raise NumericalDomainError("noise covariance is identically zero")
    if lam.min() < -1e-9 * lam_max:
        raise NumericalDomainError(
            f"noise covariance not PSD: min eigenvalue {lam.min():.3e}")
    lam = np.maximum(lam, floor * lam_max)
    inv_sqrt = (Q * (1.0 / np.sqrt(lam))[:, None, :]) @ Q.conj().transpose(0, 2, 1)
    return FreqResponse(H.grid, inv_sqrt @ H.matrices)
