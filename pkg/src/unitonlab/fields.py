"""Matrix, vector and subspace fields on a single coordinate chart.

Fields come in two backends.  Closed-form fields know all their Wirtinger
derivatives analytically: every node of the expression DAG implements
``deriv(z, p, q)`` returning the p-th holomorphic / q-th antiholomorphic
derivative, and product/inverse/adjoint nodes propagate derivatives by the
Leibniz rule.  Grid fields are sampled on a chart and differentiate by
central differences.

Subspace fields are represented by their orthogonal projector field, which
is canonical (no frame/phase ambiguity) and smooth wherever the rank is
constant.  Image bundles of matrix fields are extended across isolated
rank-drop points by copying the projector from the nearest max-rank sample
point; the singular-value gap at construction is kept as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


# --------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class Chart:
    """Rectangular sample grid in the coordinate plane."""

    x0: float = -1.0
    x1: float = 1.0
    y0: float = -1.0
    y1: float = 1.0
    nx: int = 65
    ny: int = 65
    excluded: tuple = ()  # tuple of (center: complex, radius: float)

    def __post_init__(self):
        hx = (self.x1 - self.x0) / (self.nx - 1)
        hy = (self.y1 - self.y0) / (self.ny - 1)
        if not np.isclose(hx, hy):
            raise ValueError(f"anisotropic spacing: hx={hx}, hy={hy}")
        if int(np.count_nonzero(self.mask())) < 100:
            raise ValueError("chart keeps fewer than 100 sample points")

    @property
    def h(self):
        return (self.x1 - self.x0) / (self.nx - 1)

    def points(self):
        xs = np.linspace(self.x0, self.x1, self.nx)
        ys = np.linspace(self.y0, self.y1, self.ny)
        X, Y = np.meshgrid(xs, ys)
        return X + 1j * Y

    def mask(self, erode=0):
        """Usable sample points; erode>0 additionally drops a border of that width."""
        Z = self.points()
        m = np.ones(Z.shape, dtype=bool)
        for c, r in self.excluded:
            m &= np.abs(Z - c) > r
        if erode > 0:
            m[:erode, :] = False
            m[-erode:, :] = False
            m[:, :erode] = False
            m[:, -erode:] = False
        return m

    def sample_zs(self, erode=0):
        return self.points()[self.mask(erode)]

    def witness_zs(self, count=32, seed=7):
        """Fixed pseudo-random subset of interior sample points."""
        zs = self.sample_zs(erode=2)
        rng = np.random.default_rng(seed)
        idx = rng.choice(zs.size, size=min(count, zs.size), replace=False)
        return zs[np.sort(idx)]

    @staticmethod
    def default():
        return Chart()

    def with_excluded(self, pts):
        return Chart(self.x0, self.x1, self.y0, self.y1, self.nx, self.ny,
                     tuple((complex(p), 3 * self.h) for p in pts))


def _zkey(z):
    z = np.asarray(z)
    if z.ndim == 0:
        return complex(z)
    return (z.shape, hash(z.tobytes()))


def _promote(z):
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    return (z[None] if scalar else z), scalar


# --------------------------------------------------------------------------
# matrix fields


class MatrixField:
    """Base class: a matrix-valued function of one complex coordinate."""

    shape = (0, 0)

    def __init__(self, shape):
        self.shape = tuple(shape)
        self._memo = {}

    # subclasses implement _deriv(z, p, q) on 1-d arrays z
    def _deriv(self, z, p, q):
        raise NotImplementedError

    def deriv(self, z, p=0, q=0):
        zz, scalar = _promote(z)
        key = (_zkey(zz), p, q)
        out = self._memo.get(key)
        if out is None:
            out = self._deriv(zz, p, q)
            self._memo[key] = out
        return out[0] if scalar else out

    def at(self, z):
        return self.deriv(z, 0, 0)

    def jet(self, z):
        return self.deriv(z, 0, 0), self.deriv(z, 1, 0), self.deriv(z, 0, 1)

    # ---- algebra ----

    def __add__(self, other):
        return _Add(self, _as_field(other, self.shape))

    def __sub__(self, other):
        return _Add(self, _Scale(-1.0, _as_field(other, self.shape)))

    def __neg__(self):
        return _Scale(-1.0, self)

    def __rsub__(self, other):
        return _as_field(other, self.shape) - self

    def __matmul__(self, other):
        return _MatMul(self, other)

    def __mul__(self, c):
        if isinstance(c, MatrixField):
            if c.shape == (1, 1):
                return _ScalarMul(c, self)
            raise TypeError("use @ for matrix-matrix products")
        return _Scale(complex(c), self)

    __rmul__ = __mul__

    def adjoint(self):
        return _Adjoint(self)

    def conj(self):
        return _Conj(self)

    def cols(self, idx):
        return _Cols(self, tuple(idx))

    def inverse(self):
        if self.shape[0] != self.shape[1]:
            raise ValueError("only square fields invert")
        return _Inv(self)

    def sample(self, chart):
        """Freeze onto a chart grid (value only; derivatives via differences)."""
        return GridField(self.at(chart.points()), chart)


def _as_field(x, shape):
    if isinstance(x, MatrixField):
        return x
    return ConstField(np.broadcast_to(np.asarray(x, dtype=complex), shape).copy())


class ConstField(MatrixField):
    def __init__(self, mat):
        mat = np.asarray(mat, dtype=complex)
        if mat.ndim == 1:
            mat = mat[:, None]
        super().__init__(mat.shape)
        self.mat = mat

    def _deriv(self, z, p, q):
        if p == 0 and q == 0:
            return np.broadcast_to(self.mat, z.shape + self.shape)
        return np.zeros(z.shape + self.shape, dtype=complex)


class FuncField(MatrixField):
    """Closed-form field from a vectorized derivative closure f(z, p, q)."""

    def __init__(self, shape, fn):
        super().__init__(shape)
        self.fn = fn

    def _deriv(self, z, p, q):
        out = np.asarray(self.fn(z, p, q), dtype=complex)
        want = z.shape + self.shape
        if out.shape != want:
            out = np.broadcast_to(out, want).copy()
        return out


class _Add(MatrixField):
    def __init__(self, a, b):
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
        super().__init__(a.shape)
        self.a, self.b = a, b

    def _deriv(self, z, p, q):
        return self.a.deriv(z, p, q) + self.b.deriv(z, p, q)


class _Scale(MatrixField):
    def __init__(self, c, a):
        super().__init__(a.shape)
        self.c, self.a = complex(c), a

    def _deriv(self, z, p, q):
        return self.c * self.a.deriv(z, p, q)


class _MatMul(MatrixField):
    def __init__(self, a, b):
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"inner dimension mismatch {a.shape} @ {b.shape}")
        super().__init__((a.shape[0], b.shape[1]))
        self.a, self.b = a, b

    def _deriv(self, z, p, q):
        out = None
        for i in range(p + 1):
            for j in range(q + 1):
                c = math.comb(p, i) * math.comb(q, j)
                term = c * (self.a.deriv(z, i, j) @ self.b.deriv(z, p - i, q - j))
                out = term if out is None else out + term
        return out


class _ScalarMul(MatrixField):
    def __init__(self, s, a):
        super().__init__(a.shape)
        self.s, self.a = s, a

    def _deriv(self, z, p, q):
        out = None
        for i in range(p + 1):
            for j in range(q + 1):
                c = math.comb(p, i) * math.comb(q, j)
                term = c * (self.s.deriv(z, i, j) * self.a.deriv(z, p - i, q - j))
                out = term if out is None else out + term
        return out


class _Adjoint(MatrixField):
    def __init__(self, a):
        super().__init__((a.shape[1], a.shape[0]))
        self.a = a

    def _deriv(self, z, p, q):
        return np.conj(np.swapaxes(self.a.deriv(z, q, p), -1, -2))


class _Conj(MatrixField):
    def __init__(self, a):
        super().__init__(a.shape)
        self.a = a

    def _deriv(self, z, p, q):
        return np.conj(self.a.deriv(z, q, p))


class _Cols(MatrixField):
    def __init__(self, a, idx):
        super().__init__((a.shape[0], len(idx)))
        self.a, self.idx = a, idx

    def _deriv(self, z, p, q):
        return self.a.deriv(z, p, q)[..., :, list(self.idx)]


class _HStack(MatrixField):
    def __init__(self, parts):
        rows = parts[0].shape[0]
        if any(x.shape[0] != rows for x in parts):
            raise ValueError("row mismatch in hstack")
        super().__init__((rows, sum(x.shape[1] for x in parts)))
        self.parts = parts

    def _deriv(self, z, p, q):
        return np.concatenate([x.deriv(z, p, q) for x in self.parts], axis=-1)


def hstack(parts):
    return _HStack(list(parts))


class _Inv(MatrixField):
    """Pointwise inverse; higher derivatives by Leibniz on A @ inv(A) = I."""

    def __init__(self, a):
        super().__init__(a.shape)
        self.a = a

    def _deriv(self, z, p, q):
        if p == 0 and q == 0:
            return np.linalg.inv(self.a.deriv(z, 0, 0))
        inv0 = self.deriv(z, 0, 0)
        acc = None
        for i in range(p + 1):
            for j in range(q + 1):
                if i == 0 and j == 0:
                    continue
                c = math.comb(p, i) * math.comb(q, j)
                term = c * (self.a.deriv(z, i, j) @ self.deriv(z, p - i, q - j))
                acc = term if acc is None else acc + term
        return -inv0 @ acc


class GridField(MatrixField):
    """Field sampled on a chart; derivatives by second-order differences."""

    def __init__(self, values, chart):
        values = np.asarray(values, dtype=complex)
        super().__init__(values.shape[-2:])
        self.values = values
        self.chart = chart
        self._dcache = {(0, 0): values}

    def _diff_x(self, v):
        out = np.empty_like(v)
        h = self.chart.h
        out[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * h)
        out[:, 0] = (v[:, 1] - v[:, 0]) / h
        out[:, -1] = (v[:, -1] - v[:, -2]) / h
        return out

    def _diff_y(self, v):
        out = np.empty_like(v)
        h = self.chart.h
        out[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2 * h)
        out[0, :] = (v[1, :] - v[0, :]) / h
        out[-1, :] = (v[-1, :] - v[-2, :]) / h
        return out

    def _grid_deriv(self, p, q):
        key = (p, q)
        if key in self._dcache:
            return self._dcache[key]
        if p > 0:
            v = self._grid_deriv(p - 1, q)
            out = 0.5 * (self._diff_x(v) - 1j * self._diff_y(v))
        else:
            v = self._grid_deriv(p, q - 1)
            out = 0.5 * (self._diff_x(v) + 1j * self._diff_y(v))
        self._dcache[key] = out
        return out

    def _indices_for(self, z):
        xs = np.linspace(self.chart.x0, self.chart.x1, self.chart.nx)
        ys = np.linspace(self.chart.y0, self.chart.y1, self.chart.ny)
        ix = np.clip(np.rint((z.real - xs[0]) / self.chart.h).astype(int), 0, self.chart.nx - 1)
        iy = np.clip(np.rint((z.imag - ys[0]) / self.chart.h).astype(int), 0, self.chart.ny - 1)
        return iy, ix

    def _deriv(self, z, p, q):
        g = self._grid_deriv(p, q)
        pts = self.chart.points()
        if z.shape == pts.shape and np.array_equal(z, pts):
            return g
        iy, ix = self._indices_for(z)
        return g[iy, ix]


def d_z(f: MatrixField) -> MatrixField:
    return _Shifted(f, 1, 0)


def d_zbar(f: MatrixField) -> MatrixField:
    return _Shifted(f, 0, 1)


class _Shifted(MatrixField):
    def __init__(self, a, dp, dq):
        super().__init__(a.shape)
        self.a, self.dp, self.dq = a, dp, dq

    def _deriv(self, z, p, q):
        return self.a.deriv(z, p + self.dp, q + self.dq)


# --------------------------------------------------------------------------
# closed-form constructors


def poly_field(coeff_table):
    """Matrix of polynomials in z. coeff_table[i][j] is a list of coefficients
    (ascending powers); scalars are allowed."""
    rows = len(coeff_table)
    cols = len(coeff_table[0])
    table = [[np.atleast_1d(np.asarray(c, dtype=complex)) for c in r] for r in coeff_table]

    def fn(z, p, q):
        out = np.zeros(z.shape + (rows, cols), dtype=complex)
        if q > 0:
            return out
        for i in range(rows):
            for j in range(cols):
                c = table[i][j]
                for k in range(p, c.size):
                    fac = math.perm(k, p)
                    out[..., i, j] += fac * c[k] * z ** (k - p)
        return out

    return FuncField((rows, cols), fn)


def zbar_field():
    """The scalar field conj(z)."""

    def fn(z, p, q):
        if p == 0 and q == 0:
            return np.conj(z)[..., None, None]
        if p == 0 and q == 1:
            return np.ones(z.shape + (1, 1), dtype=complex)
        return np.zeros(z.shape + (1, 1), dtype=complex)

    return FuncField((1, 1), fn)


def z_field():
    def fn(z, p, q):
        if p == 0 and q == 0:
            return z[..., None, None]
        if p == 1 and q == 0:
            return np.ones(z.shape + (1, 1), dtype=complex)
        return np.zeros(z.shape + (1, 1), dtype=complex)

    return FuncField((1, 1), fn)


def _joint_diagonalize(B, C, tol=1e-10):
    """Unitary U with U^H B U and U^H C U diagonal; needs [B, C] = 0."""
    import scipy.linalg as sla

    n = B.shape[0]
    if np.linalg.norm(B @ C - C @ B) > tol * max(1.0, np.linalg.norm(B) * np.linalg.norm(C)):
        raise ValueError("matrices do not commute")
    rng = np.random.default_rng(12345)
    for _ in range(8):
        t = rng.normal() + 1j * rng.normal()
        T, U = sla.schur(B + t * C, output="complex")
        db = U.conj().T @ B @ U
        dc = U.conj().T @ C @ U
        offb = np.linalg.norm(db - np.diag(np.diag(db)))
        offc = np.linalg.norm(dc - np.diag(np.diag(dc)))
        scale = max(1.0, np.linalg.norm(B), np.linalg.norm(C))
        if offb <= 1e-9 * scale and offc <= 1e-9 * scale:
            return U, np.diag(db), np.diag(dc)
    raise ValueError("joint diagonalization failed (matrices not simultaneously unitarily diagonalizable)")


def commuting_exp_field(B, C):
    """The field exp(z*B + conj(z)*C) for commuting, jointly diagonalizable B, C.

    All derivatives are exact: the (p,q) derivative is U diag(b^p c^q e) U^H.
    """
    B = np.asarray(B, dtype=complex)
    C = np.asarray(C, dtype=complex)
    U, b, c = _joint_diagonalize(B, C)
    Uh = U.conj().T
    n = B.shape[0]

    def fn(z, p, q):
        e = np.exp(np.multiply.outer(z, b) + np.multiply.outer(np.conj(z), c))
        w = e * b ** p * c ** q
        return np.einsum("ij,...j,jk->...ik", U, w, Uh)

    return FuncField((n, n), fn)


# --------------------------------------------------------------------------
# subbundle fields


class RankGapError(ValueError):
    """Raised when a rank decision is ambiguous; carries the singular gap."""

    def __init__(self, msg, sigma_in, sigma_out):
        super().__init__(f"{msg} (sigma_kept={sigma_in:.3e}, sigma_dropped={sigma_out:.3e})")
        self.sigma_in = sigma_in
        self.sigma_out = sigma_out


@dataclass
class RankDiagnostics:
    rank: int
    sigma_kept_min: float
    sigma_dropped_max: float
    filled_points: int = 0


class SubbundleField:
    """Rank-k subspace field of the trivial C^n bundle over a chart.

    Internally the field is its orthogonal projector (a MatrixField); an
    optional spanning matrix field is kept when the construction provides
    smooth closed-form generators.
    """

    def __init__(self, n, rank, projector, chart, span=None, diagnostics=None):
        self.n = n
        self.rank = rank
        self.projector = projector
        self.chart = chart
        self.span = span
        self.diagnostics = diagnostics

    # ---- pointwise data ----

    def proj_at(self, z):
        return self.projector.at(z)

    def frame_at(self, z):
        """Deterministic orthonormal frame at a point (positive-diagonal QR
        of the span when available, top eigenvectors of the projector else)."""
        if self.rank == 0:
            return np.zeros((self.n, 0), dtype=complex)
        if self.span is not None:
            return _pos_qr(self.span.at(z))
        P = self.proj_at(z)
        w, v = np.linalg.eigh((P + P.conj().T) / 2)
        Q = v[:, -self.rank:]
        return _fix_phase(Q)

    def frames(self, zs):
        zs = np.asarray(zs)
        if self.span is not None:
            return _pos_qr(self.span.at(zs))
        P = self.projector.at(zs)
        w, v = np.linalg.eigh((P + np.conj(np.swapaxes(P, -1, -2))) / 2)
        return _fix_phase(v[..., :, P.shape[-1] - self.rank:])

    def contains(self, other, zs, tol=1e-7):
        """True when the other bundle lies inside this one at all points."""
        P, Q = self.projector.at(zs), other.projector.at(zs)
        return float(np.max(np.abs(P @ Q - Q))) <= tol

    def orthogonal_to(self, other, zs, tol=1e-7):
        P, Q = self.projector.at(zs), other.projector.at(zs)
        return float(np.max(np.abs(P @ Q))) <= tol


def _pos_qr(a):
    q, r = np.linalg.qr(a)
    d = np.diagonal(r, axis1=-2, axis2=-1).copy()
    d = np.where(np.abs(d) < 1e-300, 1.0, d)
    ph = d / np.abs(d)
    return q * ph[..., None, :]


def _fix_phase(Q):
    """Make the largest-modulus entry of each column real positive."""
    idx = np.argmax(np.abs(Q), axis=-2)
    lead = np.take_along_axis(Q, idx[..., None, :], axis=-2)[..., 0, :]
    lead = np.where(np.abs(lead) < 1e-300, 1.0, lead)
    return Q * (np.abs(lead) / lead)[..., None, :]


def span_subbundle(span: MatrixField, chart, name="span"):
    """Wrap a chart-wide full-column-rank spanning field as a subbundle."""
    n, k = span.shape
    gram = span.adjoint() @ span
    proj = span @ gram.inverse() @ span.adjoint()
    V = span.at(chart.sample_zs())
    s = np.linalg.svd(V, compute_uv=False)
    smin = float(np.min(s[..., -1])) if k else 1.0
    if k and smin <= 1e-10 * float(np.max(s)):
        raise RankGapError(f"{name}: spanning field loses rank on the chart", smin, 0.0)
    return SubbundleField(n, k, proj, chart, span=span,
                          diagnostics=RankDiagnostics(k, smin, 0.0))


def constant_subbundle(vectors, chart):
    V = np.asarray(vectors, dtype=complex)
    if V.ndim == 1:
        V = V[:, None]
    return span_subbundle(ConstField(V), chart)


def zero_subbundle(n, chart):
    return SubbundleField(n, 0, ConstField(np.zeros((n, n))), chart,
                          diagnostics=RankDiagnostics(0, 0.0, 0.0))


def full_subbundle(n, chart):
    return SubbundleField(n, n, ConstField(np.eye(n)), chart,
                          span=ConstField(np.eye(n)),
                          diagnostics=RankDiagnostics(n, 1.0, 0.0))


def colspace(f: MatrixField, chart, tol=1e-8, want_span=True):
    """Column-space bundle of a matrix field, extended across rank drops.

    The rank is the maximal eps-rank over the chart (eps = tol * largest
    singular value).  For closed-form inputs whose rank equals a selectable
    set of columns everywhere, the result keeps a closed-form spanning field;
    otherwise the projector is sampled, rank-deficient points are filled from
    the nearest max-rank point, and frames are phase-aligned along scanlines.
    """
    pts = chart.points()
    msk = chart.mask()
    V = f.at(pts)
    sv = np.linalg.svd(V, compute_uv=False)
    smax = float(np.max(sv[msk])) if np.any(msk) else 0.0
    if smax == 0.0:
        return zero_subbundle(f.shape[0], chart)
    eps = tol * smax
    ranks = np.sum(sv > eps, axis=-1)
    ranks[~msk] = 0
    k = int(np.max(ranks))
    if k == 0:
        return zero_subbundle(f.shape[0], chart)

    sig_in = float(np.min(sv[ranks == k][:, k - 1]))
    sig_out = float(np.max(sv[msk][:, k])) if sv.shape[-1] > k else 0.0

    # closed-form path: find k columns spanning everywhere
    if want_span and not isinstance(f, GridField) and k <= f.shape[1]:
        cols = _select_columns(V, ranks == k, k, eps)
        if cols is not None:
            sub = f.cols(cols)
            try:
                out = span_subbundle(sub, chart, name="colspace")
                out.diagnostics = RankDiagnostics(k, sig_in, sig_out)
                return out
            except RankGapError:
                pass

    U, s, _ = np.linalg.svd(V)
    good = ranks == k
    frames = U[..., :, :k]
    filled = _fill_deficient(frames, good, pts)
    frames = _align_scanlines(frames, good)
    P = frames @ np.conj(np.swapaxes(frames, -1, -2))
    return SubbundleField(
        f.shape[0], k, GridField(P, chart), chart,
        diagnostics=RankDiagnostics(k, sig_in, sig_out, filled_points=filled))


def _select_columns(V, good, k, eps):
    """Greedy pivoted column choice that stays full rank at all good points."""
    Vf = V.reshape(-1, V.shape[-2], V.shape[-1])
    gf = good.reshape(-1)
    if not np.any(gf):
        return None
    ref = Vf[np.argmax(gf)]
    # column order by pivoted QR on a reference point
    from scipy.linalg import qr as sqr

    _, _, piv = sqr(ref, pivoting=True)
    cols = list(piv[:k])
    sel = Vf[:, :, cols]
    s = np.linalg.svd(sel, compute_uv=False)
    if np.all(s[gf][:, k - 1] > eps):
        return cols
    return None


def _fill_deficient(frames, good, pts):
    """Copy frames to rank-deficient points from the nearest good point."""
    bad_idx = np.argwhere(~good)
    good_idx = np.argwhere(good)
    if bad_idx.size == 0:
        return 0
    gz = pts[good][:, None]
    for (i, j) in bad_idx:
        d = np.abs(pts[i, j] - gz[:, 0])
        src = good_idx[np.argmin(d)]
        frames[i, j] = frames[src[0], src[1]]
    return int(bad_idx.shape[0])


def _align_scanlines(frames, good):
    """Unitary (Procrustes) phase alignment along a row-major scan."""
    ny, nx = frames.shape[:2]
    out = frames.copy()
    for i in range(ny):
        for j in range(nx):
            if i == 0 and j == 0:
                continue
            ref = out[i, j - 1] if j > 0 else out[i - 1, j]
            M = out[i, j].conj().T @ ref
            u, _, vh = np.linalg.svd(M)
            out[i, j] = out[i, j] @ (u @ vh)
    return out


def osculate(s: SubbundleField, tol=1e-8) -> SubbundleField:
    """Span of the bundle together with the z-derivative of its sections."""
    if s.span is not None:
        return colspace(hstack([s.span, d_z(s.span)]), s.chart, tol=tol)
    P = s.projector
    return colspace(hstack([P, d_z(P)]), s.chart, tol=tol)


def orthocomplement(s: SubbundleField) -> SubbundleField:
    proj = ConstField(np.eye(s.n)) - s.projector
    return SubbundleField(s.n, s.n - s.rank, proj, s.chart, diagnostics=s.diagnostics)


def project_onto(s: SubbundleField, v: MatrixField) -> MatrixField:
    return s.projector @ v


def bundle_sum(s1: SubbundleField, s2: SubbundleField, tol=1e-8) -> SubbundleField:
    """Pointwise sum of two subbundles (closed form when they are orthogonal)."""
    if s1.n != s2.n:
        raise ValueError("ambient dimension mismatch")
    zs = s1.chart.sample_zs()
    if s1.rank == 0:
        return s2
    if s2.rank == 0:
        return s1
    if s1.orthogonal_to(s2, zs, tol=1e-9):
        return SubbundleField(s1.n, s1.rank + s2.rank, s1.projector + s2.projector,
                              s1.chart)
    out = colspace(hstack([s1.projector, s2.projector]), s1.chart, tol=tol)
    if out.rank > s1.rank + s2.rank:
        raise RankGapError("bundle sum rank exceeds rank sum",
                           out.diagnostics.sigma_kept_min,
                           out.diagnostics.sigma_dropped_max)
    return out


def intersect(s1: SubbundleField, s2: SubbundleField, tol=1e-8) -> SubbundleField:
    """Pointwise intersection via complements; nested pairs stay closed form."""
    zs = s1.chart.sample_zs()
    if s1.contains(s2, zs, tol=1e-9):
        return s2
    if s2.contains(s1, zs, tol=1e-9):
        return s1
    u = bundle_sum(orthocomplement(s1), orthocomplement(s2), tol=tol)
    out = orthocomplement(u)
    d = u.diagnostics
    if d is not None and d.sigma_dropped_max > 0 and \
            d.sigma_kept_min < 10 * d.sigma_dropped_max:
        raise RankGapError("intersection rank is tolerance-ambiguous",
                           d.sigma_kept_min, d.sigma_dropped_max)
    return out


def nested_difference(inner: SubbundleField, outer: SubbundleField) -> SubbundleField:
    """outer ominus inner for inner contained in outer (closed form)."""
    zs = inner.chart.sample_zs()
    if not outer.contains(inner, zs, tol=1e-7):
        raise ValueError("bundles are not nested")
    proj = outer.projector - inner.projector
    return SubbundleField(inner.n, outer.rank - inner.rank, proj, inner.chart)


# --------------------------------------------------------------------------
# norms and checks


def sup_norm(f: MatrixField, chart, erode=0):
    vals = f.at(chart.points())
    m = chart.mask(erode)
    return float(np.max(np.abs(vals[m]))) if np.any(m) else 0.0


def spectral_sup(f: MatrixField, chart, erode=0):
    vals = f.at(chart.points())
    m = chart.mask(erode)
    s = np.linalg.svd(vals[m], compute_uv=False)
    return float(np.max(s[..., 0])) if np.any(m) else 0.0


def fd_consistency(f: MatrixField, zs, h=1e-4):
    """Max deviation between analytic first derivatives and central differences."""
    zs = np.asarray(zs)
    vz = f.deriv(zs, 1, 0)
    vq = f.deriv(zs, 0, 1)
    fx = (f.at(zs + h) - f.at(zs - h)) / (2 * h)
    fy = (f.at(zs + 1j * h) - f.at(zs - 1j * h)) / (2 * h)
    dz = 0.5 * (fx - 1j * fy)
    dzb = 0.5 * (fx + 1j * fy)
    return max(float(np.max(np.abs(vz - dz))), float(np.max(np.abs(vq - dzb))))
