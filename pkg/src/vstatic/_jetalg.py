"""Second-order jet algebra: product rules and covariant assembly.

A ``Jet2`` bundles a batched quantity with its first and second coordinate
derivatives.  Products of jets follow the Leibniz rule through einsum
subscripts, so scalar invariants built from metric and perturbation jets
(traces, norms, divergences, second covariant derivatives) are assembled
algebraically from two stencil passes -- no nested finite differencing.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet2", "jmul", "inv_jets", "cov1_rank2", "cov2_rank2", "hessian_from_jets"]


class Jet2:
    """(value, d1, d2) arrays with leading batch axis, derivative axes after it."""

    def __init__(self, v, d1, d2):
        self.v = v
        self.d1 = d1
        self.d2 = d2

    @classmethod
    def from_arrays(cls, v, d1, d2):
        return cls(v, d1, d2)


def _ins(sub, extra):
    """Insert derivative axes after the batch letter of one einsum operand."""
    return sub[0] + extra + sub[1:]


def jmul(subscripts, A, B):
    """Jet of an einsum contraction of two jets, e.g. 'mab,mbc->mac'."""
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    es = np.einsum
    v = es(f"{sa},{sb}->{out}", A.v, B.v)
    d1 = (es(f"{_ins(sa,'e')},{sb}->{_ins(out,'e')}", A.d1, B.v)
          + es(f"{sa},{_ins(sb,'e')}->{_ins(out,'e')}", A.v, B.d1))
    d2 = (es(f"{_ins(sa,'ef')},{sb}->{_ins(out,'ef')}", A.d2, B.v)
          + es(f"{sa},{_ins(sb,'ef')}->{_ins(out,'ef')}", A.v, B.d2)
          + es(f"{_ins(sa,'e')},{_ins(sb,'f')}->{_ins(out,'ef')}", A.d1, B.d1)
          + es(f"{_ins(sa,'f')},{_ins(sb,'e')}->{_ins(out,'ef')}", A.d1, B.d1))
    return Jet2(v, d1, d2)


def inv_jets(G):
    """Jet of the inverse of a jetted matrix field."""
    gi = np.linalg.inv(G.v)
    d1 = -np.einsum("mac,mecd,mdb->meab", gi, G.d1, gi)
    # d_e d_f g^{-1} = gi dg_e gi dg_f gi + gi dg_f gi dg_e gi - gi ddg_ef gi
    t1 = np.einsum("mac,mecd,mdp,mfpq,mqb->mefab", gi, G.d1, gi, G.d1, gi)
    d2 = t1 + np.einsum("mefab->mfeab", t1) \
        - np.einsum("mac,mefcd,mdb->mefab", gi, G.d2, gi)
    return Jet2(gi, d1, d2)


def cov1_rank2(H, Gam):
    """nabla_a h_bc from the jet of h and Christoffel values."""
    return (H.d1
            - np.einsum("mpab,mpc->mabc", Gam, H.v)
            - np.einsum("mpac,mbp->mabc", Gam, H.v))


def cov2_rank2(H, Gam, dGam):
    """nabla_a nabla_b h_cd from second-order jets of h and the connection."""
    nab = cov1_rank2(H, Gam)
    # d_a (nabla h)_{bcd}
    dnab = (H.d2
            - np.einsum("mapbc,mpd->mabcd", dGam, H.v)
            - np.einsum("mpbc,mapd->mabcd", Gam, H.d1)
            - np.einsum("mapbd,mcp->mabcd", dGam, H.v)
            - np.einsum("mpbd,macp->mabcd", Gam, H.d1))
    return (dnab
            - np.einsum("mpab,mpcd->mabcd", Gam, nab)
            - np.einsum("mpac,mbpd->mabcd", Gam, nab)
            - np.einsum("mpad,mbcp->mabcd", Gam, nab))


def hessian_from_jets(F, Gam):
    """nabla^2 f from the jet of a scalar f."""
    return F.d2 - np.einsum("mpab,mp->mab", Gam, F.d1)
