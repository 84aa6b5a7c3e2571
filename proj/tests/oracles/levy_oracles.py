#!/usr/bin/env python3
"""High-precision oracles for the Levy-measure operations, computed with
mpmath (50 digits) completely independently of the C++ implementation.

Truncated-stable convention: nu(dz) = scale * |z|^(-1-alpha) dz restricted to
delta_inner < |z| <= 1, symmetric two-sided.
"""
import mpmath as mp

mp.mp.dps = 50


def ts_moment(alpha, scale, di, p, region):
    # integral of |z|^p nu(dz) over the region
    lo, hi = mp.mpf(di), mp.mpf(1)
    if region == "outer":
        return mp.mpf(0)
    f = lambda z: scale * z ** (p - 1 - alpha)
    return 2 * mp.quad(f, [lo, hi])


def ts_psi(alpha, scale, di, p):
    # symmetric nu, all mass inside |z|<=1: Psi(p) = int (cos(pz)-1) nu(dz)
    f = lambda z: (mp.cos(p * z) - 1) * scale * z ** (-1 - alpha)
    return 2 * mp.quad(f, [mp.mpf(di), mp.mpf(1)])


def show(label, v):
    print("%-58s %s" % (label, mp.nstr(v, 20)))


if __name__ == "__main__":
    show("moment(a=1.5,s=1,di=0.01,p=2,all)", ts_moment(1.5, 1, "0.01", 2, "all"))
    show("moment(a=1.5,s=1,di=0.01,p=1,all)", ts_moment(1.5, 1, "0.01", 1, "all"))
    show("moment(a=1.5,s=1,di=0.01,p=4,all)", ts_moment(1.5, 1, "0.01", 4, "all"))
    show("moment(a=0.5,s=2,di=0.05,p=2,all)", ts_moment(0.5, 2, "0.05", 2, "all"))
    show("mass(a=1.5,s=1,di=0.01)  (p=0)", ts_moment(1.5, 1, "0.01", 0, "all"))
    show("mass(a=1.5,s=1,di=0.1)", ts_moment(1.5, 1, "0.1", 0, "all"))
    show("moment(a=1.5,s=1,di=0.1,p=2,all)", ts_moment(1.5, 1, "0.1", 2, "all"))
    # moment over |z| > 0.1 for delta_inner=0.01 (truncation-bias diagnostic)
    f = lambda z: z ** (2 - 2.5)
    show("moment(a=1.5,s=1,di=0.01,p=2,|z|>0.1)", 2 * mp.quad(f, [mp.mpf("0.1"), 1]))
    show("Psi(a=1.5,s=1,di=0.01,p=2)", ts_psi(1.5, 1, "0.01", 2))
    show("Psi(a=1.5,s=1,di=0.01,p=1)", ts_psi(1.5, 1, "0.01", 1))
    show("Psi(a=0.5,s=2,di=0.05,p=3)", ts_psi(0.5, 2, "0.05", 3))
    # discrete examples: unit mass at z=1 -> Psi(p) = e^{ip} - 1 - ip
    for p in (1, 2, 4):
        v = mp.expjpi(p / mp.pi) - 1 - 1j * p  # e^{ip} - 1 - ip
        show("atom(1) Psi(%d) re,im" % p,
             mp.mpc(mp.cos(p) - 1, mp.sin(p) - p))
    # atoms +-2, unit masses: |z|>1 so no compensator: Psi(p)=2(cos(2p)-1)
    for p in (1, 2):
        show("atoms(+-2) Psi(%d)" % p, 2 * (mp.cos(2 * p) - 1))
