"""Independent high-precision evaluation of the closed-form constants.

Run once; the printed values are frozen as fixtures in ``test_bounds.py``.
Every formula is transcribed directly with mpmath at 40 digits and shares
no code with the package.
"""

import mpmath as mp

mp.mp.dps = 40
PI = mp.pi
d = 2
kappa = 2 * PI * mp.mpf(10) ** 9 / (3 * mp.mpf(10) ** 10)
R, Rs, r0, gb = mp.mpf("0.07"), mp.mpf("0.035"), mp.mpf("0.01"), mp.mpf("0.5")
diam = 2 * (1 + gb) * r0
core = 2 * (1 - gb) * r0
gt = ((1 - gb) / (mp.sqrt(2) * (1 + gb))) ** 2
gh = min(mp.mpf(1) / 2, gt)
csurf = mp.sqrt(2 * PI * r0 * mp.sqrt((1 + gb) ** 2 + gb**2))


def corollary(k, a_out=1, n_out=1):
    ck = R * mp.sqrt(4 / mp.mpf(a_out) + (2 * mp.sqrt(mp.mpf(n_out) / a_out) + (d - 1) / (k * R)) ** 2 / n_out)
    c1 = mp.mpf(3) / 2 / (Rs * (R - Rs))
    c2 = 6 / (R - Rs) ** 2 + mp.mpf(3) / 2 * (d - 1) / (Rs * (R - Rs))
    return ck, c1, c2


def thm41(k, a_in, a_out, n_in, n_out, fin, fout):
    t = 2 * mp.sqrt(mp.mpf(n_out) / a_out) + (d - 1) / (k * R)
    A = (4 * (k * diam) ** 2 / a_in + (k * R) ** 2 / n_in * t**2) * k**-2 * fin**2
    B = R**2 * (4 / mp.mpf(a_out) + t**2 / n_out) * fout**2
    return A + B


def thm42(k, a_in, a_out, n_in, n_out, g, tgd, gd, gn):
    far = n_out * (k * R) ** 2 + a_out * mp.mpf(d - 1) ** 2 / 4
    t3 = 2 * (diam * a_out * ((3 + 2 * g) * a_in + 2 * a_out) / (g * (a_in - a_out))) * tgd**2
    t4 = 2 * (2 * k**2 * diam * n_out**2 / (g * (n_out - n_in))
              + (3 + g) * a_in * far / (g * diam * (a_in - a_out))) * gd**2
    t5 = 2 / (g * a_out) * (diam * (4 * a_in + 2 * a_out) / (a_in - a_out)
                            + 2 * far / (k**2 * diam * (n_out - n_in))) * gn**2
    return t3 + t4 + t5


def pw_norms(k, a_in, a_out, n_in, n_out):
    kout = k * mp.sqrt(mp.mpf(n_out) / a_out)
    a_small = PI * ((1 - gb) * r0) ** 2
    a_big = PI * ((1 + gb) * r0) ** 2
    area_out = PI * R**2 - a_small
    h1 = lambda ai: mp.sqrt((a_in * kout**2 + k**2 * n_in) * ai
                            + (a_out * kout**2 + k**2 * n_out) * (PI * R**2 - ai))
    return mp.sqrt(area_out), kout * mp.sqrt(area_out), max(h1(a_small), h1(a_big)), \
        mp.sqrt(PI) * (1 + gb) * r0, 1 + kout


def stab(k, lam, gamma, obs, a_in=1, a_out=1, n_in=mp.mpf("0.9"), n_out=1):
    ck, c1, c2 = corollary(k, a_out, n_out)
    l2, gr, h1, _, _ = pw_norms(k, a_in, a_out, n_in, n_out)
    body = ck * c1 * a_out * gr + (ck * c2 * a_out + mp.sqrt(a_out) * c1) * l2 + h1
    return (gamma + obs * body) / lam, (gamma + obs * k * R) / lam


def subopt(k, lam, gamma, obs, a_in, a_out, n_in, n_out):
    l2, gr, h1, l2in, c1u = pw_norms(k, a_in, a_out, n_in, n_out)
    t = 2 * mp.sqrt(mp.mpf(n_out) / a_out) + (d - 1) / (k * R)
    br = mp.sqrt(4 * (k * diam) ** 2 / a_in + (k * R) ** 2 / n_in * t**2)
    vol = br * k * abs(mp.mpf(a_in) / a_out * n_in - n_out) * l2in
    far = n_out * (k * R) ** 2 + a_out * mp.mpf(d - 1) ** 2 / 4
    jump = mp.sqrt(diam * (4 * a_in + 2 * a_out) / (a_in - a_out) + 2 * far / (k**2 * core * (n_out - n_in)))
    jump *= 2 * csurf * (a_in - a_out) / (gh * a_out) * c1u
    return (gamma + obs * (vol + jump)) / lam


def soundsoft(k, n_max, mu):
    kr = k * R
    grow = 1 + mp.mpf(3) / 2 * n_max
    lead = (2 + mp.mpf(d - 2) / (2 * kr)) ** 2
    C1 = 2 * mp.sqrt(4 * kr**2 / mu**2 * (1 + lead) * grow**2 + 2 / mp.mpf(n_max))
    C2 = csurf * mp.sqrt(2 / mp.mpf(mu)) * mp.sqrt(grow) * mp.sqrt(diam) * mp.sqrt(1 + 4 * diam / gt)
    C3 = 2 * csurf * mp.sqrt(8 / mp.mpf(mu) * grow * kr**2 / gt * lead + 2 / gt)
    return C1, C2, C3


def show(name, vals):
    if not isinstance(vals, (tuple, list)):
        vals = (vals,)
    print(name, "=", "(" + ", ".join(mp.nstr(v, 20) for v in vals) + ")")


show("kappa0", kappa)
show("corollary_default", corollary(kappa))
show("thm41_default_unit", thm41(kappa, 1, 1, mp.mpf("0.9"), 1, 1, 1))
show("thm41_default_mixed", thm41(kappa, 1, 1, mp.mpf("0.9"), 1, mp.mpf("0.3"), mp.mpf("2.5")))
show("thm42_contrast_unit", thm42(kappa, 2, 1, mp.mpf("0.9"), 1, gh, 1, 1, 1)
     + thm41(kappa, 2, 1, mp.mpf("0.9"), 1, 0, 0))
show("stab_default", stab(kappa, mp.mpf("0.01"), 4, 10))
show("subopt_contrast", subopt(kappa, mp.mpf("0.01"), 4, 10, 2, 1, mp.mpf("0.9"), 1))
show("soundsoft_kR1", soundsoft(1 / R, 1, 2))
show("soundsoft_k100", soundsoft(mp.mpf(100), mp.mpf("1.5"), mp.mpf("2.5")))
