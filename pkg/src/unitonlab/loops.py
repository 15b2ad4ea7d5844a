"""Loop-valued fields on a chart: extended solutions, unitons, factorization.

A loop field is a map Phi(lambda, z) into GL(n, C).  Two backends exist:

* Laurent: finitely many degree-indexed matrix fields; all loop-parameter
  algebra (products, circle adjoints, residual extraction) is exact
  convolution, so verification residuals only reflect the z-derivatives.
* Sampled: a closure lambda -> matrix field, for loops that are not
  trigonometric polynomials (exponential frames); loop-parameter structure
  is recovered by FFT over unit-circle samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from .fields import (
    Chart,
    ConstField,
    GridField,
    MatrixField,
    SubbundleField,
    colspace,
    commuting_exp_field,
    d_z,
    d_zbar,
    orthocomplement,
    sup_norm,
)
from .laurent import LaurentMatrix

LOOP_TRIM_RTOL = 1e-11


class LoopField:
    """GL(n)-loop-valued field over a chart (Laurent or sampled backend)."""

    def __init__(self, n, chart, coeffs=None, sampler=None, base_normalized=True):
        if (coeffs is None) == (sampler is None):
            raise ValueError("exactly one of coeffs/sampler required")
        self.n = n
        self.chart = chart
        self.coeffs = dict(coeffs) if coeffs is not None else None
        self.sampler = sampler
        self.base_normalized = base_normalized
        self._lam_cache = {}
        if self.coeffs is not None:
            self._trim()

    # ---- constructors ----

    @staticmethod
    def identity(n, chart):
        return LoopField(n, chart, coeffs={0: ConstField(np.eye(n))})

    @staticmethod
    def from_constant_loop(v: LaurentMatrix, chart):
        return LoopField(v.n, chart,
                         coeffs={d: ConstField(m) for d, m in v.to_float().coeffs.items()})

    # ---- structure ----

    @property
    def is_laurent(self):
        return self.coeffs is not None

    @property
    def dmin(self):
        return min(self.coeffs)

    @property
    def dmax(self):
        return max(self.coeffs)

    def _trim(self):
        if not self.coeffs:
            return
        sups = {d: sup_norm(f, self.chart) for d, f in self.coeffs.items()}
        top = max(sups.values())
        keep = {d: f for d, f in self.coeffs.items() if sups[d] > LOOP_TRIM_RTOL * top}
        self.coeffs = keep or {0: ConstField(np.zeros((self.n, self.n)))}

    def coeff(self, d) -> MatrixField:
        return self.coeffs.get(d, ConstField(np.zeros((self.n, self.n))))

    def at_lambda(self, lam) -> MatrixField:
        lam = complex(lam)
        key = round(lam.real, 14), round(lam.imag, 14)
        f = self._lam_cache.get(key)
        if f is not None:
            return f
        if self.is_laurent:
            acc = None
            for d, c in self.coeffs.items():
                term = (lam ** d) * c
                acc = term if acc is None else acc + term
        else:
            acc = self.sampler(lam)
        self._lam_cache[key] = acc
        return acc

    def evaluate(self, lam, zs):
        return self.at_lambda(lam).at(zs)

    def laurent_at(self, z) -> LaurentMatrix:
        if not self.is_laurent:
            raise ValueError("not a Laurent-backend loop field")
        return LaurentMatrix(self.n, {d: c.at(z) for d, c in self.coeffs.items()})

    # ---- algebra ----

    def mul(self, other: "LoopField") -> "LoopField":
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        if self.is_laurent and other.is_laurent:
            out = {}
            for da, ca in self.coeffs.items():
                for db, cb in other.coeffs.items():
                    d = da + db
                    term = ca @ cb
                    out[d] = term if d not in out else out[d] + term
            return LoopField(self.n, self.chart, coeffs=out,
                             base_normalized=self.base_normalized and other.base_normalized)

        def sampler(lam):
            return self.at_lambda(lam) @ other.at_lambda(lam)

        return LoopField(self.n, self.chart, sampler=sampler,
                         base_normalized=self.base_normalized and other.base_normalized)

    def left_mul_const(self, v: LaurentMatrix) -> "LoopField":
        return LoopField.from_constant_loop(v, self.chart).mul(self)

    def bp_factor_right(self, alpha: SubbundleField, power: int) -> "LoopField":
        """Right-multiply by the projector factor pi_alpha + lambda^power pi_alpha^perp."""
        pi = alpha.projector
        pic = orthocomplement(alpha).projector
        if self.is_laurent:
            out = {}
            for d, c in self.coeffs.items():
                t0 = c @ pi
                out[d] = t0 if d not in out else out[d] + t0
                t1 = c @ pic
                dd = d + power
                out[dd] = t1 if dd not in out else out[dd] + t1
            return LoopField(self.n, self.chart, coeffs=out,
                             base_normalized=self.base_normalized)

        def sampler(lam):
            return self.at_lambda(lam) @ (pi + (complex(lam) ** power) * pic)

        return LoopField(self.n, self.chart, sampler=sampler,
                         base_normalized=self.base_normalized)

    def to_json_dict(self, zs=None):
        """Laurent backend only: per-degree matrix fields sampled at points."""
        if not self.is_laurent:
            raise ValueError("sampled loop fields do not serialize by degree")
        zs = self.chart.sample_zs() if zs is None else np.asarray(zs)
        terms = []
        for d in sorted(self.coeffs):
            v = self.coeffs[d].at(zs)
            terms.append({"deg": int(d), "re": v.real.tolist(), "im": v.imag.tolist()})
        return {"n": self.n, "terms": terms,
                "z_re": zs.real.tolist(), "z_im": zs.imag.tolist()}


# --------------------------------------------------------------------------
# verification


@dataclass
class LoopVerification:
    """Residual report for the loop-flatness equations of a loop field."""

    residual_z: float
    residual_zbar: float
    unitarity: float
    base_residual: float
    a_z: MatrixField
    a_z_sup: float

    @property
    def residual(self):
        return max(self.residual_z, self.residual_zbar)


def _fourier_coeffs(samples, max_keep):
    """FFT over the leading lambda axis; returns dict degree -> array."""
    m = samples.shape[0]
    co = np.fft.fft(samples, axis=0) / m
    out = {}
    for k in range(-max_keep, max_keep + 1):
        out[k] = co[k % m]
    return out


def verify_extended_solution(phi: LoopField, lambda_samples=64, erode=0,
                             zs=None) -> LoopVerification:
    """Check that phi^-1 d phi has the one-pole/one-zero loop structure.

    Returns sup-norm deviations of phi^H d_z phi from (1 - lambda^-1) A_z and
    of phi^H d_zbar phi from (1 - lambda) A_zbar with A_zbar = -A_z^H, plus
    unitarity and base-point normalization residuals, and the extracted A_z.
    """
    chart = phi.chart
    pts = chart.points() if zs is None else np.asarray(zs)
    if zs is None:
        msk = chart.mask(erode)
    else:
        msk = np.ones(pts.shape, dtype=bool)

    if phi.is_laurent:
        degs = sorted(phi.coeffs)
        g = {}
        h = {}
        for da in degs:
            ca = phi.coeffs[da]
            for db in degs:
                cb = phi.coeffs[db]
                d = db - da
                tz = ca.adjoint() @ d_z(cb)
                tq = ca.adjoint() @ d_zbar(cb)
                g[d] = tz if d not in g else g[d] + tz
                h[d] = tq if d not in h else h[d] + tq
        gv = {d: f.at(pts)[msk] for d, f in g.items()}
        hv = {d: f.at(pts)[msk] for d, f in h.items()}
        a_z_field = g.get(0, ConstField(np.zeros((phi.n, phi.n))))
    else:
        m = lambda_samples
        lams = np.exp(2j * np.pi * np.arange(m) / m)
        gs, hs = [], []
        for lam in lams:
            f = phi.at_lambda(lam)
            gs.append((f.adjoint() @ d_z(f)).at(pts)[msk])
            hs.append((f.adjoint() @ d_zbar(f)).at(pts)[msk])
        keep = m // 2 - 1
        gv = _fourier_coeffs(np.array(gs), keep)
        hv = _fourier_coeffs(np.array(hs), keep)
        a_z_field = _grid_from_masked(gv[0], chart, msk) if zs is None else None

    def nrm(x):
        return float(np.max(np.abs(x))) if x is not None and np.size(x) else 0.0

    a0 = gv.get(0)
    res_z = nrm(a0 + gv.get(-1)) if -1 in gv else nrm(a0)
    for d, v in gv.items():
        if d in (0, -1):
            continue
        res_z = max(res_z, nrm(v))
    b0 = hv.get(0)
    res_q = nrm(b0 + hv.get(1)) if 1 in hv else nrm(b0)
    for d, v in hv.items():
        if d in (0, 1):
            continue
        res_q = max(res_q, nrm(v))
    if a0 is not None and b0 is not None:
        res_q = max(res_q, nrm(b0 + np.conj(np.swapaxes(a0, -1, -2))))

    lams = np.exp(2j * np.pi * np.arange(8) / 8)
    uni = 0.0
    for lam in lams:
        v = phi.at_lambda(lam).at(pts)[msk]
        uni = max(uni, nrm(v @ np.conj(np.swapaxes(v, -1, -2)) - np.eye(phi.n)))
    base = nrm(phi.at_lambda(1.0).at(pts)[msk] - np.eye(phi.n))

    if a_z_field is None:
        a_z_field = ConstField(np.zeros((phi.n, phi.n)))
    a_sup = nrm(a0)
    return LoopVerification(res_z, res_q, uni, base, a_z_field, a_sup)


def _grid_from_masked(vals, chart, msk):
    full = np.zeros(msk.shape + vals.shape[-2:], dtype=complex)
    full[msk] = vals
    return GridField(full, chart)


@dataclass
class HarmonicVerification:
    harmonic_residual: float
    integrability_residual: float
    unitarity: float
    adjoint_residual: float


class HarmonicMapField:
    """Unitary matrix field with its Maurer-Cartan coefficient fields."""

    def __init__(self, phi: MatrixField, chart: Chart):
        if phi.shape[0] != phi.shape[1]:
            raise ValueError("harmonic map fields are square")
        self.phi = phi
        self.chart = chart
        self.n = phi.shape[0]
        self.a_z = 0.5 * (phi.adjoint() @ d_z(phi))
        self.a_zbar = 0.5 * (phi.adjoint() @ d_zbar(phi))
        uni = sup_norm(phi.adjoint() @ phi - ConstField(np.eye(self.n)), chart)
        if uni > 1e-7:
            raise ValueError(f"field is not unitary on the chart (deviation {uni:.2e})")
        self._unitarity = uni

    def covariant_dz(self, s: MatrixField) -> MatrixField:
        return d_z(s) + self.a_z @ s

    def verify(self, erode=0) -> HarmonicVerification:
        c = self.chart
        az, aq = self.a_z, self.a_zbar
        harm = sup_norm(d_zbar(az) + d_z(aq), c, erode)
        comm = az @ aq - aq @ az
        integ = sup_norm(d_zbar(az) - d_z(aq) - 2.0 * comm, c, erode)
        adj = sup_norm(aq + az.adjoint(), c, erode)
        return HarmonicVerification(harm, integ, self._unitarity, adj)


def verify_harmonic(phi: HarmonicMapField, erode=0) -> HarmonicVerification:
    return phi.verify(erode=erode)


def cartan_embed(s: SubbundleField) -> HarmonicMapField:
    """Difference of projections onto the bundle and its complement."""
    phi = 2.0 * s.projector - ConstField(np.eye(s.n))
    return HarmonicMapField(phi, s.chart)


# --------------------------------------------------------------------------
# products and factorization


def bp_product(unitons, v: LaurentMatrix | None = None, chart: Chart | None = None,
               n: int | None = None) -> LoopField:
    """Product of projector factors pi + lambda pi^perp, left-multiplied by a
    constant loop."""
    if unitons:
        chart = chart or unitons[0].chart
        n = n or unitons[0].n
    if chart is None or n is None:
        raise ValueError("need a chart and dimension for an empty product")
    out = LoopField.identity(n, chart) if v is None else LoopField.from_constant_loop(v, chart)
    for a in unitons:
        out = out.bp_factor_right(a, +1)
    return out


class AlreadyConstantError(RuntimeError):
    """Adding a uniton to a z-constant loop field has no effect."""


def add_uniton(phi: LoopField, tol=1e-6, col_tol=1e-8,
               verification: LoopVerification | None = None):
    """One Gauss step on the loop: right-multiply by pi + lambda^-1 pi^perp
    with pi^perp the image bundle of the extracted A_z.

    Returns (new loop field, added bundle alpha, verification of the input).
    """
    rep = verification or verify_extended_solution(phi)
    if rep.a_z_sup <= tol:
        raise AlreadyConstantError("A_z vanishes on the chart; loop is already constant")
    alpha_perp = colspace(rep.a_z, phi.chart, tol=col_tol)
    alpha = orthocomplement(alpha_perp)
    new = phi.bp_factor_right(alpha, -1)
    return new, alpha, rep


@dataclass
class FactorizationResult:
    success: bool
    factors: list
    constant_loop: LaurentMatrix | None
    trace: list
    rebuild_residual: float | None = None

    def __len__(self):
        return len(self.factors)


def uniton_factorize(phi: LoopField, budget=8, tol=1e-6,
                     lambda_check=16) -> FactorizationResult:
    """Greedy factorization into projector factors by repeated Gauss steps.

    Succeeds when the loop becomes z-constant within budget; the returned
    factors, multiplied back as a product of pi + lambda pi^perp with the
    final constant loop in front, reproduce the input (residual reported).
    Failure returns the growth trace instead.
    """
    cur = phi
    factors = []
    trace = []
    for step in range(budget + 1):
        rep = verify_extended_solution(cur)
        entry = {"step": step, "a_z_sup": rep.a_z_sup}
        if cur.is_laurent:
            entry["dmin"], entry["dmax"] = cur.dmin, cur.dmax
        trace.append(entry)
        if rep.a_z_sup <= tol:
            z0 = 0.0 + 0.0j
            if cur.is_laurent:
                const = cur.laurent_at(z0)
            else:
                m = lambda_check
                lams = np.exp(2j * np.pi * np.arange(m) / m)
                vals = np.array([cur.evaluate(l, z0) for l in lams])
                co = np.fft.fft(vals, axis=0) / m
                coeffs = {}
                for k in range(-m // 2 + 1, m // 2):
                    c = co[k % m]
                    if np.max(np.abs(c)) > 1e-9:
                        coeffs[k] = c
                const = LaurentMatrix(phi.n, coeffs)
            factors_out = list(reversed(factors))
            res = _rebuild_residual(phi, factors_out, const)
            return FactorizationResult(True, factors_out, const, trace, res)
        if step == budget:
            break
        cur, alpha, _ = add_uniton(cur, tol=tol, verification=rep)
        factors.append(alpha)
    return FactorizationResult(False, [], None, trace)


def _rebuild_residual(phi: LoopField, factors, const: LaurentMatrix,
                      lambda_samples=16):
    built = bp_product(factors, v=const, chart=phi.chart, n=phi.n)
    zs = phi.chart.witness_zs()
    lams = np.exp(2j * np.pi * np.arange(lambda_samples) / lambda_samples)
    err = 0.0
    for lam in lams:
        err = max(err, float(np.max(np.abs(built.evaluate(lam, zs) - phi.evaluate(lam, zs)))))
    return err


def loops_equal_mod_constant(a: LoopField, b: LoopField, z0=0.0,
                             lambda_samples=16, zs=None):
    """Sup deviation of the two loops after normalizing both at a base point."""
    zs = a.chart.witness_zs() if zs is None else np.asarray(zs)
    lams = np.exp(2j * np.pi * np.arange(lambda_samples) / lambda_samples)
    err = 0.0
    for lam in lams:
        va = a.evaluate(lam, zs) @ np.linalg.inv(a.evaluate(lam, np.asarray(z0)))
        vb = b.evaluate(lam, zs) @ np.linalg.inv(b.evaluate(lam, np.asarray(z0)))
        err = max(err, float(np.max(np.abs(va - vb))))
    return err


# --------------------------------------------------------------------------
# vacuum loops


def vacuum(A, tau_coeffs=(0.0, 1.0), chart: Chart | None = None) -> LoopField:
    """Loop field exp(tau(z)(1-lambda^-1)A - conj(tau(z))(1-lambda)A^H) for a
    nonzero normal matrix A and linear tau."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    if np.max(np.abs(A)) == 0:
        raise ValueError("vacuum matrix must be nonzero")
    if np.linalg.norm(A @ A.conj().T - A.conj().T @ A) > 1e-12 * np.linalg.norm(A) ** 2:
        raise ValueError("vacuum matrix must be normal")
    if len(tau_coeffs) > 2:
        raise ValueError("only linear tau is supported")
    c0 = complex(tau_coeffs[0])
    c1 = complex(tau_coeffs[1]) if len(tau_coeffs) > 1 else 0.0 + 0j
    chart = chart or Chart.default()

    import scipy.linalg as sla

    def sampler(lam):
        lam = complex(lam)
        B = (1 - 1 / lam) * A
        C = -(1 - lam) * A.conj().T
        head = sla.expm(c0 * B + np.conj(c0) * C)
        return ConstField(head) @ commuting_exp_field(c1 * B, np.conj(c1) * C)

    return LoopField(n, chart, sampler=sampler)
