import numpy as np
import pytest

from unitonlab.fields import (
    Chart,
    ConstField,
    FuncField,
    GridField,
    bundle_sum,
    colspace,
    commuting_exp_field,
    constant_subbundle,
    d_z,
    d_zbar,
    fd_consistency,
    full_subbundle,
    hstack,
    intersect,
    orthocomplement,
    osculate,
    poly_field,
    span_subbundle,
    sup_norm,
    z_field,
    zbar_field,
)

CHART = Chart.default()


def exp_line_entry(omega):
    """Scalar field exp(omega z - conj(omega) conj(z))."""
    wbar = np.conj(omega)

    def fn(z, p, q):
        val = np.exp(omega * z - wbar * np.conj(z))
        return (omega ** p * (-wbar) ** q * val)[..., None, None]

    return FuncField((1, 1), fn)


def veronese_span(n=3):
    return poly_field([[[0.0] * k + [1.0]] for k in range(n)])


# ---------------------------------------------------------------- derivatives

def test_dz_holomorphic_monomial():
    f = poly_field([[[0, 0, 1]]])  # z^2
    zs = CHART.witness_zs()
    assert np.allclose(d_z(f).at(zs)[:, 0, 0], 2 * zs)
    assert np.allclose(d_zbar(f).at(zs), 0)


def test_dz_zbar():
    f = zbar_field()
    zs = CHART.witness_zs()
    assert np.allclose(d_z(f).at(zs), 0)
    assert np.allclose(d_zbar(f).at(zs)[:, 0, 0], 1)


def test_dz_exponential_line():
    w = np.exp(2j * np.pi / 3)
    f = exp_line_entry(w)
    zs = CHART.witness_zs()
    assert np.allclose(d_z(f).at(zs), w * f.at(zs))


def test_fd_vs_analytic_second_order():
    w = np.exp(2j * np.pi / 5)
    f = exp_line_entry(w)
    rng = np.random.default_rng(0)
    zs = rng.uniform(-0.5, 0.5, 20) + 1j * rng.uniform(-0.5, 0.5, 20)
    e1 = fd_consistency(f, zs, h=1e-2)
    e2 = fd_consistency(f, zs, h=5e-3)
    assert e1 < 1e-3
    assert 3.0 < e1 / e2 < 5.0  # O(h^2) decay


def test_grid_field_derivatives():
    w = np.exp(2j * np.pi / 3)
    f = exp_line_entry(w)
    g = f.sample(CHART)
    pts = CHART.points()
    m = CHART.mask(erode=2)
    err = np.abs(d_z(g).at(pts) - d_z(f).at(pts))[m]
    assert np.max(err) < 5 * CHART.h ** 2


def test_product_rule_and_adjoint():
    a = poly_field([[[0, 1], [1]], [[2], [0, 0, 3]]])  # [[z,1],[2,3z^2]]
    b = a.adjoint()
    prod = a @ b
    zs = CHART.witness_zs()
    va, vza, vqa = a.jet(zs)
    vb = np.conj(np.swapaxes(va, -1, -2))
    vzb = np.conj(np.swapaxes(vqa, -1, -2))
    assert np.allclose(prod.at(zs), va @ vb)
    assert np.allclose(d_z(prod).at(zs), vza @ vb + va @ vzb)


def test_inverse_field_derivative():
    a = ConstField(np.eye(2)) + 0.3 * poly_field([[[0, 1], [0]], [[0], [0, 0, 1]]])
    inv = a.inverse()
    zs = CHART.witness_zs()
    assert np.allclose(a.at(zs) @ inv.at(zs), np.eye(2), atol=1e-12)
    # d(A^-1) = -A^-1 dA A^-1
    expect = -inv.at(zs) @ d_z(a).at(zs) @ inv.at(zs)
    assert np.allclose(d_z(inv).at(zs), expect, atol=1e-10)


def test_commuting_exp_field_matches_expm():
    import scipy.linalg as sla

    A = 0.5 * np.roll(np.eye(3), 1, axis=0)  # cyclic, normal
    B = 1j * A
    C = 0.25j * A.conj().T
    f = commuting_exp_field(B, C)
    rng = np.random.default_rng(1)
    for z in rng.uniform(-1, 1, 5) + 1j * rng.uniform(-1, 1, 5):
        M = sla.expm(z * B + np.conj(z) * C)
        assert np.allclose(f.at(z), M, atol=1e-12)
        assert np.allclose(f.deriv(z, 1, 0), M @ B, atol=1e-12)
        assert np.allclose(f.deriv(z, 0, 1), M @ C, atol=1e-12)


def test_commuting_exp_rejects_noncommuting():
    B = np.array([[0, 1], [0, 0]], dtype=complex)
    C = np.array([[0, 0], [1, 0]], dtype=complex)
    with pytest.raises(ValueError):
        commuting_exp_field(B, C)


# ---------------------------------------------------------------- colspace

def test_colspace_constant_rank_one():
    f = ConstField(np.array([[1, 0], [0, 0]], dtype=complex))
    s = colspace(f, CHART)
    assert s.rank == 1
    zs = CHART.witness_zs()
    assert np.allclose(s.projector.at(zs), np.array([[1, 0], [0, 0]]), atol=1e-10)


def test_colspace_fills_isolated_zero():
    f = poly_field([[[0, 1]], [[0, 0, 1]]])  # column (z, z^2), vanishes at 0
    s = colspace(f, CHART, want_span=False)
    assert s.rank == 1
    assert s.diagnostics.filled_points >= 1
    P0 = s.proj_at(0.0)
    assert np.linalg.norm(P0 - np.array([[1, 0], [0, 0]])) < 6 * CHART.h


def test_colspace_veronese_gauss_direction():
    h = span_subbundle(veronese_span(3), CHART)
    A = orthocomplement(h).projector @ d_z(h.projector) @ h.projector
    s = colspace(A, CHART)
    assert s.rank == 1
    # oracle: pointwise rank of the raw matrix field
    zs = CHART.witness_zs()
    sv = np.linalg.svd(A.at(zs), compute_uv=False)
    assert np.all(np.sum(sv > 1e-8 * sv.max(), axis=-1) == 1)


def test_colspace_zero_field():
    s = colspace(ConstField(np.zeros((3, 2))), CHART)
    assert s.rank == 0


def test_colspace_idempotent():
    h = span_subbundle(veronese_span(3), CHART)
    zs = CHART.witness_zs()
    frames = FuncField((3, 1), lambda z, p, q: h.span.deriv(z, p, q))
    again = colspace(frames, CHART)
    assert np.max(np.abs(again.projector.at(zs) - h.projector.at(zs))) < 1e-7


# ---------------------------------------------------------------- osculate

def test_osculate_constant():
    s = constant_subbundle(np.array([1.0, 0.0, 0.0]), CHART)
    o = osculate(s)
    assert o.rank == 1
    zs = CHART.witness_zs()
    assert np.max(np.abs(o.projector.at(zs) - s.projector.at(zs))) < 1e-9


def test_osculate_veronese():
    h = span_subbundle(veronese_span(3), CHART)
    o = osculate(h)
    assert o.rank == 2
    zs = CHART.witness_zs()
    refspan = hstack([h.span, poly_field([[[0]], [[1]], [[0, 2]]])])
    V = refspan.at(zs)
    Pref = V @ np.linalg.pinv(V)
    assert np.max(np.abs(o.projector.at(zs) - Pref)) < 1e-8


def test_osculate_full_bundle():
    s = full_subbundle(2, CHART)
    o = osculate(s)
    assert o.rank == 2


def test_osculate_monotone():
    h = span_subbundle(veronese_span(4), CHART)
    o = osculate(h)
    zs = CHART.witness_zs()
    assert o.contains(h, zs, tol=1e-7)


# ---------------------------------------------------------------- algebra

def test_orthocomplement_projection_identities():
    h = span_subbundle(veronese_span(3), CHART)
    hc = orthocomplement(h)
    zs = CHART.sample_zs()
    P = h.projector.at(zs)
    Q = hc.projector.at(zs)
    assert np.max(np.abs(P @ P - P)) < 1e-8
    assert np.max(np.abs(P - np.conj(np.swapaxes(P, -1, -2)))) < 1e-8
    assert np.max(np.abs(P + Q - np.eye(3))) < 1e-8


def test_orthocomplement_e1():
    s = constant_subbundle(np.array([1.0, 0.0]), CHART)
    c = orthocomplement(s)
    assert c.rank == 1
    assert np.allclose(c.proj_at(0.1 + 0.2j), np.array([[0, 0], [0, 1]]), atol=1e-12)


def test_sum_of_coordinate_lines():
    e1 = constant_subbundle(np.array([1.0, 0.0]), CHART)
    e2 = constant_subbundle(np.array([0.0, 1.0]), CHART)
    s = bundle_sum(e1, e2)
    assert s.rank == 2
    assert np.allclose(s.proj_at(0.3), np.eye(2), atol=1e-12)


def test_intersect_veronese_gauss_two():
    # second Gauss direction as intersection of osculating bundles
    h = span_subbundle(veronese_span(3), CHART)
    h1 = osculate(h)
    h2 = osculate(h1)
    assert h2.rank == 3
    g2 = intersect(orthocomplement(h1), h2)
    assert g2.rank == 1
    # oracle: pointwise projector algebra at witness points
    zs = CHART.witness_zs()
    P1 = h1.projector.at(zs)
    P2 = h2.projector.at(zs)
    Pg = g2.projector.at(zs)
    assert np.max(np.abs(Pg - (P2 - P1))) < 1e-7


def test_frames_are_orthonormal():
    h = span_subbundle(veronese_span(4), CHART)
    o = osculate(h)
    zs = CHART.witness_zs()
    F = o.frames(zs)
    G = np.conj(np.swapaxes(F, -1, -2)) @ F
    assert np.max(np.abs(G - np.eye(o.rank))) < 1e-8


def test_sup_norm():
    f = poly_field([[[0, 1]]])
    assert abs(sup_norm(f, CHART) - np.sqrt(2)) < 1e-9
