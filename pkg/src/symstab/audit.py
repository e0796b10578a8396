"""Stability audits: every comparison functional evaluated on a solved
instance, with pass/fail verdicts at stated tolerances.

The central objects are the sup-gap eps = ||v* - u*||_inf between the
rearranged solution and the radial solution, the Fraenkel asymmetry of
the domain, and the deficit functionals (Polya-Szego excess, energy gap,
L2-norm gap) that the comparison theorems bound in terms of eps.  Checks
whose constants involve the configured isoperimetric constant gamma_n are
labeled conditional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .geometry import GridDomain, fraenkel_asymmetry, isoperimetric_deficit, \
    measure, rasterize_ball, unit_ball_measure, BallSpec
from .rearrangement import (MonotoneProfile, ScalarField,
                            decreasing_rearrangement, distribution_function,
                            quantitative_hl_deficit)
from .elliptic import (PoissonProblem, RadialSolution, dirichlet_energy,
                       profile_dirichlet_energy, profile_gradient,
                       radial_solution, solve_dirichlet)

__all__ = [
    "StabilityConstants",
    "Verdict",
    "DeficitReport",
    "talenti_gap",
    "normalize",
    "NormalizedInstance",
    "theorem_asymmetry_bound",
    "s_omega_value",
    "boosted_lemma",
    "superlevel_audit",
    "polya_szego_deficit",
    "section4_quantities",
    "l1_stability",
    "f_stability",
    "counterexample_family",
    "l2_asymmetry_bound",
    "audit_instance",
    "audit_solution",
]


@dataclass(frozen=True)
class StabilityConstants:
    """Configured constants of the stability estimates.

    gamma_n is the quantitative isoperimetric constant (never fixed by the
    theory here; all verdicts using it are conditional).  r, s are the
    exponents of the quantitative Polya-Szego bracket.  alpha_exp,
    beta_exp, q_exp are the interpolation exponents of the gradient-level
    analysis; defaults alpha = 1/2, beta = 1/(2n'), q = (1-alpha)/2
    satisfy every constraint simultaneously.
    """

    gamma_n: float = 4.0
    r: float = 1.0
    s: float = 1.0
    alpha_exp: float = 0.5
    beta_exp: float | None = None
    q_exp: float | None = None

    def resolved(self, n: int = 2) -> tuple[float, float, float]:
        nprime = n / (n - 1.0)
        alpha = self.alpha_exp
        beta = self.beta_exp if self.beta_exp is not None else 1.0 / (2.0 * nprime)
        q = self.q_exp if self.q_exp is not None else (1.0 - alpha) / 2.0
        if not (0.0 < beta < alpha < 1.0 and beta < 1.0 / nprime):
            raise ValueError("need 0 < beta < alpha < 1 and beta < 1/n'")
        if not (0.0 < q < 1.0 - alpha):
            raise ValueError("need 0 < q < 1 - alpha")
        return alpha, beta, q

    def c1_tilde(self, n: int = 2) -> float:
        omega = unit_ball_measure(n)
        base = n ** 2 * omega ** (2.0 / n)
        return max((8.0 * base) ** 3, 16.0 * base * self.gamma_n)


@dataclass
class Verdict:
    name: str
    lhs: float
    rhs: float
    tol: float
    passed: bool | None
    conditional: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "tol": self.tol, "pass": self.passed,
                "conditional": self.conditional, "note": self.note}


def _leq(name, lhs, rhs, tol, conditional=False, note="") -> Verdict:
    return Verdict(name, float(lhs), float(rhs), float(tol),
                   bool(lhs <= rhs + tol), conditional, note)


# ---------------------------------------------------------------------------
# sup-gap between the profiles


@dataclass(frozen=True)
class TalentiGap:
    eps_inf: float
    pointwise_min: float
    ustar: MonotoneProfile


def talenti_gap(u: ScalarField, sol: RadialSolution) -> TalentiGap:
    """eps = sup_s (v*(s) - u*(s)) and the minimal signed gap.

    u* is a step profile and v* is decreasing, so on each cell interval
    the gap extremes sit at the interval endpoints; the sup and inf are
    exact cell-wise.
    """
    ustar = decreasing_rearrangement(u)
    if abs(ustar.total - sol.total_measure) > 1e-9 * max(1.0, sol.total_measure):
        raise ValueError("solution and radial solution have mismatched measures")
    v_left = sol.v_star(ustar.edges[:-1])
    v_right = sol.v_star(ustar.edges[1:])
    gap_hi = v_left - ustar.values
    gap_lo = v_right - ustar.values
    return TalentiGap(float(gap_hi.max()), float(gap_lo.min()), ustar)


# ---------------------------------------------------------------------------
# normalization to |Omega| = 1, ||f||_1 = 1


@dataclass
class NormalizedInstance:
    a: float
    b: float
    domain: GridDomain
    w: ScalarField
    g: ScalarField
    z: RadialSolution
    eps: float
    alpha: float
    alpha_raw: float
    relations: list = field(default_factory=list)


def _radial_cell_values(u_desc: np.ndarray, domain: GridDomain,
                        center_idx: tuple[int, int]) -> np.ndarray:
    """Rearranged field evaluated at the cells, centered on a cell center.

    The lookup index floor(pi d^2) uses only the integer squared lattice
    distance d^2, so it is exactly invariant under grid rescaling (the
    rescaling identities are checked at round-off level downstream).
    """
    nx, ny = domain.mask.shape
    di = np.arange(nx) - center_idx[0]
    dj = np.arange(ny) - center_idx[1]
    d2 = di[:, None] ** 2 + dj[None, :] ** 2
    k = np.floor(math.pi * d2).astype(np.int64)
    out = np.zeros(domain.mask.shape)
    inside = k < len(u_desc)
    out[inside] = u_desc[k[inside]]
    return out


def _value_centroid_index(u: ScalarField) -> tuple[int, int]:
    w = u.values
    tot = w.sum()
    nx, ny = w.shape
    ci = float((w.sum(axis=1) * np.arange(nx)).sum() / tot)
    cj = float((w.sum(axis=0) * np.arange(ny)).sum() / tot)
    return int(round(ci)), int(round(cj))


def normalize(problem: PoissonProblem, u: ScalarField,
              sol: RadialSolution) -> NormalizedInstance:
    """Rescale to unit measure and unit source mass.

    w(x) = a u(x/b), g = (a/b^2) f(x/b) with a = |Omega|^(1-2/n)/||f||_1
    and b = |Omega|^(-1/n); the grid mask is unchanged and h scales by b.
    The five displayed scaling identities are evaluated on both sides and
    recorded with residuals relative to a cancellation-free scale of each
    quantity.
    """
    n = 2
    dom = problem.domain
    m = measure(dom)
    f_l1 = problem.source.integral()
    if f_l1 <= 0:
        raise ValueError("zero source cannot be normalized")
    a = m ** (1.0 - 2.0 / n) / f_l1
    b = m ** (-1.0 / n)
    ndom = GridDomain(dom.mask, b * dom.h,
                      (b * dom.origin[0], b * dom.origin[1]),
                      face_fractions=dom.face_fractions)
    w = ScalarField(ndom, a * u.values)
    g = ScalarField(ndom, (a / b ** 2) * problem.source.values,
                    nonnegative=True)
    gstar = decreasing_rearrangement(g)
    z = radial_solution(gstar, gstar.total, n=n)

    relations = []
    # sup gap: ||z - w#||_inf = a ||v - u#||_inf
    tg_u = talenti_gap(u, sol)
    tg_w = talenti_gap(w, z)
    scale_eps = a * float(sol.v_star(0.0)) + 1e-300
    relations.append(_relation("eps_inf", tg_w.eps_inf, a * tg_u.eps_inf,
                               scale_eps))
    # L1 distance to the rearrangement, common center, common lookup path
    cidx = _value_centroid_index(u)
    u_desc = np.sort(np.abs(u.masked()))[::-1]
    ush = _radial_cell_values(u_desc, dom, cidx)
    w_desc = np.sort(np.abs(w.masked()))[::-1]
    wsh = _radial_cell_values(w_desc, ndom, cidx)
    l1_u = float(np.abs(u.values - ush).sum()) * dom.h ** 2
    l1_w = float(np.abs(w.values - wsh).sum()) * ndom.h ** 2
    scale_l1 = a * b ** 2 * float(np.abs(u.values).sum()) * dom.h ** 2 + 1e-300
    relations.append(_relation("l1_dist", l1_w,
                               m ** (-2.0 / n) / f_l1 * l1_u, scale_l1))
    # source norms: ||g||_p = |Omega|^(1-1/p) ||f||_p / ||f||_1
    for p in (2.0,):
        lhs = g.lp(p)
        rhs = m ** (1.0 - 1.0 / p) * problem.source.lp(p) / f_l1
        relations.append(_relation(f"g_l{p:g}_norm", lhs, rhs, rhs + 1e-300))
    # distribution functions: sigma(t) = |Omega|^(-1) mu(t/a)
    mu_u = distribution_function(u)
    mu_w = distribution_function(w)
    wv = np.unique(np.abs(w.masked()))
    # sample only between well-separated neighbours, so that the rounding
    # of t/a cannot flip a cell across the threshold
    gaps = np.diff(wv)
    safe = np.flatnonzero(gaps > 1e-9 * (wv[-1] + 1e-300))
    if len(safe) >= 1:
        picks = safe[np.clip((np.linspace(0.1, 0.9, 5)
                              * (len(safe) - 1)).astype(int),
                             0, len(safe) - 1)]
        tsam = sorted({0.5 * (wv[i] + wv[i + 1]) for i in picks})
    else:
        tsam = [0.5 * wv[-1]]
    for j, t in enumerate(tsam):
        lhs = float(mu_w(t))
        rhs = float(mu_u(t / a)) / m
        relations.append(_relation(f"distribution_t{j}", lhs, rhs, 1.0))

    alpha_raw = fraenkel_asymmetry(dom)
    alpha_n = fraenkel_asymmetry(ndom)
    return NormalizedInstance(a=a, b=b, domain=ndom, w=w, g=g, z=z,
                              eps=tg_w.eps_inf, alpha=alpha_n,
                              alpha_raw=alpha_raw, relations=relations)


def _relation(name, lhs, rhs, scale) -> dict:
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs),
            "scale": float(scale),
            "rel_residual": abs(float(lhs) - float(rhs)) / float(scale)}


# ---------------------------------------------------------------------------
# asymmetry bounds


def theorem_asymmetry_bound(alpha: float, eps_inf: float, measure_val: float,
                            f_l1: float, constants: StabilityConstants,
                            n: int = 2) -> Verdict:
    """alpha^3 <= C1~ eps / (|Omega|^((2-n)/n) ||f||_1)."""
    c1 = constants.c1_tilde(n)
    rhs = c1 * max(eps_inf, 0.0) / (measure_val ** ((2.0 - n) / n) * f_l1)
    return _leq("asymmetry_cubed_bound", alpha ** 3, rhs,
                1e-9 * (1.0 + rhs), conditional=True,
                note=f"C1~ = {c1:.6g} with gamma_n = {constants.gamma_n}")


def s_omega_value(ustar: MonotoneProfile, alpha: float) -> float:
    """u* evaluated at |Omega| (1 - alpha/4)."""
    if not (0.0 <= alpha < 2.0):
        raise ValueError("alpha out of range")
    return float(ustar(ustar.total * (1.0 - alpha / 4.0)))


def boosted_lemma(s_om: float, alpha: float, eps_inf: float,
                  constants: StabilityConstants) -> Verdict:
    """s_Omega alpha^2 / (2 gamma_n) <= eps."""
    lhs = s_om * alpha ** 2 / (2.0 * constants.gamma_n)
    return _leq("boosted_s_omega", lhs, max(eps_inf, 0.0),
                1e-9 * (1.0 + abs(eps_inf)), conditional=True)


def superlevel_audit(u: ScalarField, sol: RadialSolution, t_list,
                     constants: StabilityConstants,
                     alpha_omega: float | None = None) -> list[dict]:
    """Per-superlevel-set asymmetry audit.

    For each t: alpha(U_t) and the cubed-asymmetry bound
    alpha^3(U_t) <= C1~ (|Omega|/mu(t))^3 eps / (|Omega|^((2-n)/n) ||f||_1);
    when |Omega \\ U_t| <= |Omega| alpha(Omega)/4 also the halving bound
    alpha(U_t) >= alpha(Omega)/2 up to a 10h discretization allowance.
    """
    n = 2
    dom = u.domain
    m = measure(dom)
    eps = talenti_gap(u, sol).eps_inf
    f_l1 = float(sol.F(sol.total_measure))
    if alpha_omega is None:
        alpha_omega = fraenkel_asymmetry(dom)
    records = []
    for t in t_list:
        sub = dom.mask & (u.values > t)
        cnt = int(sub.sum())
        rec = {"t": float(t), "cells": cnt}
        if cnt < 10:
            rec["skipped"] = "superlevel set below resolution floor"
            records.append(rec)
            continue
        sdom = dom.with_mask(sub)
        mu_t = cnt * dom.h ** 2
        a_t = fraenkel_asymmetry(sdom)
        rhs = constants.c1_tilde(n) * (m / mu_t) ** 3 \
            * max(eps, 0.0) / (m ** ((2.0 - n) / n) * f_l1)
        rec["alpha_t"] = a_t
        rec["mu_t"] = mu_t
        rec["cubed_bound"] = _leq("superlevel_cubed_bound", a_t ** 3, rhs,
                                  1e-9 * (1.0 + rhs), conditional=True).to_dict()
        if (m - mu_t) / m <= alpha_omega / 4.0:
            v = Verdict("superlevel_halving", a_t, alpha_omega / 2.0,
                        10.0 * dom.h, bool(a_t >= alpha_omega / 2.0 - 10.0 * dom.h))
            rec["halving"] = v.to_dict()
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# Polya-Szego deficit and the degeneracy function M


def _auto_window(ncells: int) -> int:
    return max(1, int(round(math.sqrt(ncells))))


@dataclass
class PolyaSzegoRecord:
    grid_energy: float
    profile_energy: float
    E_u: float
    support: float
    M_fn: object

    def M(self, delta: float) -> float:
        return self.M_fn(delta)


def polya_szego_deficit(u: ScalarField, window: int | None = None,
                        grid_energy: float | None = None) -> PolyaSzegoRecord:
    """Relative Dirichlet-energy excess of u over its rearrangement, plus
    the gradient-degeneracy fraction M(delta).

    The rearranged energy comes from a windowed piecewise-linear reading
    of u* (window ~ sqrt(N) cells), which suppresses the upward bias that
    per-cell spacing noise induces in quadratic functionals.
    """
    vals = u.masked()
    if not np.abs(vals).max() > 0:
        raise ValueError("zero field has no energy deficit")
    ustar = decreasing_rearrangement(u)
    if window is None:
        window = _auto_window(len(vals))
    lin = ustar.as_linear(window)
    prof_e = profile_dirichlet_energy(lin)
    if grid_energy is None:
        grid_energy = dirichlet_energy(u)
    support = float((np.abs(vals) > 0).sum()) * u.domain.h ** 2

    edges = lin.edges
    slopes = np.diff(lin.values) / np.diff(edges)
    seg_lo, seg_hi = edges[:-1].copy(), edges[1:].copy()
    seg_hi = np.minimum(seg_hi, support)
    seg_lo = np.minimum(seg_lo, support)

    def M(delta: float) -> float:
        # per segment, |grad u#|(s) = |m| 2 sqrt(pi s) grows with s; the
        # sublevel within the segment is an initial piece
        with np.errstate(divide="ignore"):
            s_delta = (delta / (2.0 * math.sqrt(math.pi) * np.abs(slopes))) ** 2
        s_delta = np.where(np.abs(slopes) < 1e-300, np.inf, s_delta)
        covered = np.clip(np.minimum(s_delta, seg_hi) - seg_lo, 0.0, None)
        return float(covered.sum() / support)

    return PolyaSzegoRecord(grid_energy=float(grid_energy),
                            profile_energy=float(prof_e),
                            E_u=float(grid_energy / prof_e - 1.0),
                            support=support, M_fn=M)


# ---------------------------------------------------------------------------
# gradient-level interpolation quantities (normalized instance)


def section4_quantities(w: ScalarField, z: RadialSolution,
                        constants: StabilityConstants,
                        rigid_floor: float | None = None,
                        n_samples: int = 4000) -> dict:
    """Quantities of the gradient-level analysis on a normalized instance
    (|Omega| = 1, ||g||_1 = 1): the exceptional level set I, the cut level
    t_{eps,beta}, and the measure bounds culminating in M(eps^r).

    When eps is below the resolution floor the rigidity branch is
    reported and all eps-power checks are vacuous.
    """
    n = 2
    nprime = n / (n - 1.0)
    omega = unit_ball_measure(n)
    base = n ** 2 * omega ** (2.0 / n)
    alpha_e, beta_e, q_e = constants.resolved(n)
    r_e = constants.r
    tg = talenti_gap(w, z)
    eps = tg.eps_inf
    h = w.domain.h
    if rigid_floor is None:
        rigid_floor = 5.0 * h * float(z.v_star(0.0) + 1e-300)
    out = {"eps": float(eps), "rigid_floor": float(rigid_floor)}
    if eps <= rigid_floor:
        out["rigid"] = True
        out["note"] = "rigid at resolution; eps-power quantities skipped"
        return out
    out["rigid"] = False
    eps0 = (1.0 / base) ** (1.0 / (1.0 - nprime * beta_e))
    out["eps0"] = eps0
    out["eps_admissible"] = bool(eps < eps0)

    ustar = tg.ustar
    total = ustar.total
    window = _auto_window(len(ustar.values))
    lin = ustar.as_linear(window)

    # t_{eps,beta} = sup{t : mu(t) > eps^(n' beta)} = u*(eps^(n' beta))
    thr = eps ** (nprime * beta_e)
    t_eps = float(ustar(min(thr, total)))
    out["t_eps_beta"] = t_eps
    mu_prof = distribution_function(w)
    out["claim_tail"] = _leq("tail_measure", float(mu_prof(t_eps)),
                             thr, h * 2.0).to_dict()

    # the exceptional set I on a t-sample: boundary-integral difference
    # int_{v=t}|grad v| - int_{u#=t}|grad u#| = F(nu(t)) - B_u(t)
    umax = float(ustar.values[0])
    tgrid = np.linspace(0.0, umax, n_samples + 2)[1:-1]
    dt = tgrid[1] - tgrid[0]
    nu_t = _invert_profile(z, tgrid)
    b_v = z.F(nu_t)
    mu_t = _mu_from_ustar(ustar, tgrid)
    slopes = np.diff(lin.values) / np.diff(lin.edges)
    k = np.clip(np.searchsorted(lin.edges, mu_t, side="right") - 1,
                0, len(slopes) - 1)
    # int_{u#=t}|grad u#| = -(u*)'(mu(t)) n^2 omega^(2/n) mu(t)^(2-2/n)
    b_u = np.where(slopes[k] < 0,
                   base * mu_t ** (2.0 - 2.0 / n) * (-slopes[k]), 0.0)
    in_I = (b_v - b_u) > eps ** alpha_e
    I_measure = float(in_I.sum()) * dt
    out["I_measure"] = I_measure
    out["I_bound"] = _leq("I_measure_bound", I_measure,
                          2.0 * eps ** (1.0 - alpha_e), 2.0 * dt).to_dict()

    # |{|grad v| <= delta}| <= K2 delta^n at delta = eps^q
    delta = eps ** q_e
    sgrid = np.linspace(0.0, total, n_samples + 1)[1:]
    gv = z.grad_at_s(sgrid)
    sub_v = float((gv <= delta).sum()) / n_samples * total
    K2 = omega * n ** n
    out["grad_v_sublevel"] = _leq("grad_v_sublevel", sub_v,
                                  K2 * delta ** n,
                                  total / n_samples * 2.0).to_dict()

    # statement and proof bounds for the I^c piece of {|grad u#| < delta}
    gu = profile_gradient(lin, sgrid)
    t_of_s = ustar(sgrid)
    tpos = np.clip(np.searchsorted(tgrid, t_of_s), 0, len(tgrid) - 1)
    s_in_I = in_I[tpos]
    piece_ic = float(((gu < delta) & ~s_in_I & (t_of_s > 0)
                      & (t_of_s < t_eps)).sum()) / n_samples * total
    bound_stmt = (1.0 / n ** n) * (delta + eps ** (alpha_e - beta_e)
                                   / (n * omega ** (1.0 / n))) ** n
    bound_proof = omega * (n * delta + eps ** (alpha_e - beta_e)
                           / omega ** (1.0 / n)) ** n
    out["claim4"] = {
        "measure": piece_ic,
        "statement_bound": bound_stmt,
        "proof_bound": bound_proof,
        "verdict": _leq("claim4_proof_bound", piece_ic, bound_proof,
                        total / n_samples * 2.0).to_dict(),
    }

    # |u#^{-1}(I cap (0, t_eps))| <= K3 eps^theta4
    theta4 = min(1.0 - nprime * beta_e, 1.0 - alpha_e - q_e, n * q_e)
    K3 = 5.0 * n ** n * omega
    piece_i = float((s_in_I & (t_of_s > 0) & (t_of_s < t_eps)).sum()) \
        / n_samples * total
    out["claim5"] = _leq("claim5_I_piece", piece_i, K3 * eps ** theta4,
                         total / n_samples * 2.0).to_dict()

    # M(eps^r) <= K4 eps^theta5
    theta5 = min(n * r_e, n * (alpha_e - beta_e), theta4, nprime * beta_e)
    K4 = 7.0 * n ** n * omega
    ps = polya_szego_deficit(w, window=window)
    m_val = ps.M(eps ** r_e)
    out["theta4"] = theta4
    out["theta5"] = theta5
    out["M_bound"] = _leq("M_eps_r_bound", m_val, K4 * eps ** theta5,
                          1e-9, conditional=False).to_dict()
    return out


def _invert_profile(z: RadialSolution, t: np.ndarray) -> np.ndarray:
    lo = np.zeros(t.shape)
    hi = np.full(t.shape, z.total_measure)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        above = z.v_star(mid) > t
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def _mu_from_ustar(ustar: MonotoneProfile, t: np.ndarray) -> np.ndarray:
    """mu(t) = |{u* > t}| from the sorted step profile."""
    vals = ustar.values[::-1]           # ascending
    cnt = len(vals) - np.searchsorted(vals, t, side="right")
    h2 = ustar.edges[1] - ustar.edges[0]
    return cnt * h2


# ---------------------------------------------------------------------------
# L1 stability and the source comparison


def l1_stability(u: ScalarField, constants: StabilityConstants,
                 seeds: list[tuple[float, float]] | None = None) -> dict:
    """Best-center L1 (and L2) distance between u and its rearrangement.

    Coarse-to-fine center search: step 4h around the value centroid (and
    any extra seeds), then h and h/2 refinements.  Also reports the
    quantitative Polya-Szego bracket [M(E^r) + E]^s for the configured
    exponents (conditional: its constant is not explicit).
    """
    dom = u.domain
    h = dom.h
    ustar = decreasing_rearrangement(u)
    X, Y = dom.cell_centers()
    uvals = u.values
    h2 = h * h
    edges = ustar.edges
    total = ustar.total
    radius = math.sqrt(total / math.pi)

    # totals of the re-centered rearrangement (and its square) over the
    # full grid lattice depend on the center only through its fractional
    # offset relative to the lattice
    lattice_cache: dict[tuple[float, float], tuple[float, float]] = {}

    def lattice_profile_sums(cx, cy):
        tx = (cx - dom.origin[0]) / h - 0.5
        ty = (cy - dom.origin[1]) / h - 0.5
        fx, fy = tx - round(tx), ty - round(ty)
        key = (round(fx, 9), round(fy, 9))
        if key not in lattice_cache:
            k = int(math.ceil(radius / h)) + 2
            off = np.arange(-k, k + 1, dtype=float)
            r2 = ((off[:, None] - fx) ** 2 + (off[None, :] - fy) ** 2) * h2
            s = math.pi * r2.ravel()
            idx = np.searchsorted(edges, s, side="right") - 1
            good = (idx >= 0) & (s < total)
            vals = ustar.values[np.clip(idx, 0, len(ustar.values) - 1)[good]]
            lattice_cache[key] = (float(vals.sum()), float((vals ** 2).sum()))
        return lattice_cache[key]

    def distances(cx, cy):
        s = math.pi * ((X - cx) ** 2 + (Y - cy) ** 2)
        idx = np.searchsorted(edges, s, side="right") - 1
        ush = np.where((s < total) & (idx >= 0),
                       ustar.values[np.clip(idx, 0, len(ustar.values) - 1)],
                       0.0)
        sum_tot, sq_tot = lattice_profile_sums(cx, cy)
        inside_l1 = float(np.abs(uvals - ush).sum())
        inside_sh = float(ush.sum())
        d1 = (inside_l1 + sum_tot - inside_sh) * h2
        inside_l2 = float(((uvals - ush) ** 2).sum())
        sq_sh = float((ush ** 2).sum())
        d2 = math.sqrt(max(inside_l2 + sq_tot - sq_sh, 0.0) * h2)
        return d1, d2

    ci, cj = _value_centroid_index(u)
    c0 = (dom.origin[0] + (ci + 0.5) * h, dom.origin[1] + (cj + 0.5) * h)
    cands = [c0] + (list(seeds) if seeds else [])
    best = None
    for cx0, cy0 in cands:
        for di in range(-4, 5):
            for dj in range(-4, 5):
                c = (cx0 + 4 * h * di, cy0 + 4 * h * dj)
                d1, d2 = distances(*c)
                if best is None or d1 < best[0] - 1e-15:
                    best = (d1, d2, c)
    for step in (h, h / 2.0):
        cx0, cy0 = best[2]
        for di in range(-2, 3):
            for dj in range(-2, 3):
                c = (cx0 + step * di, cy0 + step * dj)
                d1, d2 = distances(*c)
                if d1 < best[0] - 1e-15:
                    best = (d1, d2, c)
    ps = polya_szego_deficit(u)
    E = max(ps.E_u, 0.0)
    bracket = (ps.M(E ** constants.r) + E) ** constants.s if E > 0 else 0.0
    return {"l1_inf_distance": best[0], "l2_distance": best[1],
            "center": best[2], "E_u": ps.E_u,
            "ps_bracket": bracket}


def f_stability(f: ScalarField, u: ScalarField, sol: RadialSolution,
                p: float = 2.0, q: float = 1.0,
                center: tuple[float, float] | None = None) -> dict:
    """Source-comparison pipeline: restrict f to the best-centered ball,
    bound ||f - g||_m by Holder, and evaluate the quantitative
    Hardy-Littlewood deficit of g against the radial solution, together
    with the energy chain that dominates the pairing gap."""
    m_exp = (q * p + 1.0) / (p + 1.0)
    if not m_exp < 2.0:
        raise ValueError("m must be < 2")
    dom = f.domain
    h2 = dom.h ** 2
    if center is None:
        center = l1_stability(u, StabilityConstants())["center"]
    ball = BallSpec(center=center, radius=sol.ball_radius)
    ball_mask = rasterize_ball(dom, ball)
    omega_sd = geo.symmetric_difference_measure(dom, ball)

    g = ScalarField(dom, np.where(ball_mask & dom.mask, f.values, 0.0),
                    nonnegative=True)

    # ||f - g||_m = ||f||_{L^m(Omega \ ball)} <= |Omega \ ball|^(1/m-1/2) ||f||_2
    outside = dom.mask & ~ball_mask
    fm = float((np.abs(f.values[outside]) ** m_exp).sum() * h2) ** (1.0 / m_exp)
    hol = (float(outside.sum()) * h2) ** (1.0 / m_exp - 0.5) * f.lp(2.0)
    holder = _leq("f_minus_g_holder", fm, hol, 1e-12 * (1.0 + hol))

    record = {"m": m_exp, "f_gap_m": fm, "holder": holder.to_dict(),
              "omega_sd": omega_sd}
    eps = talenti_gap(u, sol).eps_inf
    record["omega_sd_eps_ratio"] = omega_sd / max(eps, 1e-300) ** 0.25

    # quantitative Hardy-Littlewood deficit of g along v (radial about
    # the ball center)
    X, Y = dom.cell_centers()
    s_cells = math.pi * ((X - center[0]) ** 2 + (Y - center[1]) ** 2)
    v_cells = np.where((s_cells < sol.total_measure) & dom.mask,
                       sol.v_star(np.minimum(s_cells, sol.total_measure)), 0.0)
    v_field = ScalarField(dom, v_cells, nonnegative=True)
    hl = quantitative_hl_deficit(v_field, g, p, q)
    record["hl_deficit"] = {
        "lhs_gap": hl.lhs_gap, "deficit_term": hl.deficit_term,
        "lambda_norm": hl.lambda_norm, "diff_norm_m": hl.diff_norm_m,
        "verdict": hl.verdict, "reason": hl.reason,
    }

    # energy chain: int v g* - int v g <= int|grad v|^2 - int|grad u|^2
    #                                     + int f (u - u#)
    vprof = sol.v_profile(per_segment=64)
    grad_v_energy = profile_dirichlet_energy(vprof)
    grad_u_energy = dirichlet_energy(u)
    ustar = decreasing_rearrangement(u)
    idx = np.searchsorted(ustar.edges, s_cells, side="right") - 1
    u_desc = -np.sort(-u.masked())
    ush = np.where((s_cells < ustar.total) & (idx >= 0),
                   u_desc[np.clip(idx, 0, len(u_desc) - 1)], 0.0)
    int_f_diff = float((f.values * (u.values - ush)).sum()) * h2
    chain_rhs = grad_v_energy - grad_u_energy + int_f_diff
    record["energy_chain"] = _leq(
        "pairing_gap_energy_chain", hl.lhs_gap, chain_rhs,
        5.0 * dom.h * (1.0 + abs(chain_rhs))).to_dict()
    return record


# ---------------------------------------------------------------------------
# the L2 counterexample family


def counterexample_family(sigma_list, h: float, r_list=(1.0, 1.5, 2.0),
                          preconditioner: str | None = "amg") -> dict:
    """Source family f_sigma = 1 + sigma^{-1} on a sigma-ball at (1/2, 0)
    in the unit disk: the L2 distance to the rearranged source stays at
    sqrt(2 pi) while the solutions converge uniformly."""
    sigma_list = sorted(float(s) for s in sigma_list)
    for s in sigma_list:
        if not (0.0 < s <= 0.25):
            raise ValueError("sigma must be in (0, 1/4]")
        if h > s / 8.0:
            raise ValueError(f"h = {h} too coarse for sigma = {s} "
                             "(need h <= sigma/8)")
    spec = geo.DomainSpec.disk((0.0, 0.0), 1.0)
    dom = geo.rasterize(spec, h)
    X, Y = dom.cell_centers()
    rows = []
    for s in sigma_list:
        bump = (X - 0.5) ** 2 + Y ** 2 < s ** 2
        bump0 = X ** 2 + Y ** 2 < s ** 2
        f = ScalarField(dom, np.where(dom.mask, 1.0 + bump / s, 0.0),
                        nonnegative=True)
        fsh = np.where(dom.mask, 1.0 + bump0 / s, 0.0)
        diff = np.abs(f.values - fsh)[dom.mask]
        row = {"sigma": s}
        for r in r_list:
            row[f"l{r:g}_diff"] = float((diff ** r).sum() * h * h) ** (1.0 / r)
        u = solve_dirichlet(PoissonProblem(dom, f),
                            preconditioner=preconditioner)
        sol = radial_solution(decreasing_rearrangement(f),
                              measure(dom))
        scells = math.pi * (X ** 2 + Y ** 2)
        v_cells = np.where(scells < sol.total_measure,
                           sol.v_star(np.minimum(scells, sol.total_measure)),
                           0.0)
        row["sup_gap"] = float(np.abs(v_cells - u.values)[dom.mask].max())
        row["eps_inf"] = talenti_gap(u, sol).eps_inf
        rows.append(row)
    out = {"rows": rows}
    if len(sigma_list) >= 2:
        ls = np.log(sigma_list)
        slopes = {}
        for r in r_list:
            ln = np.log([row[f"l{r:g}_diff"] for row in rows])
            slopes[f"l{r:g}"] = float(np.polyfit(ls, ln, 1)[0])
        out["slopes"] = slopes
    return out


# ---------------------------------------------------------------------------
# L2 norm gap


def l2_asymmetry_bound(u: ScalarField, sol: RadialSolution, alpha: float,
                       s_om: float | None = None) -> dict:
    """|Omega| s_Omega^2 alpha^2 / 16 <= ||v||_2^2 - ||u||_2^2."""
    ustar = decreasing_rearrangement(u)
    if s_om is None:
        s_om = s_omega_value(ustar, alpha)
    v2 = sol.l2_norm_squared()
    u2 = u.lp(2.0) ** 2
    m = ustar.total
    lhs = m * s_om ** 2 * alpha ** 2 / 16.0
    gap = v2 - u2
    tol = 5e-4 * max(v2, u2)
    return {"lhs": lhs, "l2_norm_gap": gap, "v_l2_sq": v2, "u_l2_sq": u2,
            "s_omega": s_om,
            "verdict": _leq("l2_norm_gap_bound", lhs, gap, tol),
            "nonneg": _leq("l2_gap_nonneg", 0.0, gap, tol),
            "empirical_ratio": gap / lhs if lhs > 0 else math.inf}


# ---------------------------------------------------------------------------
# full instance audit


@dataclass
class DeficitReport:
    instance: dict
    quantities: dict
    verdicts: list[Verdict]
    solver: dict

    def to_json_dict(self) -> dict:
        return {"instance": self.instance,
                "quantities": self.quantities,
                "verdicts": [v.to_dict() for v in self.verdicts],
                "solver": self.solver}

    def failed(self, include_conditional: bool = False) -> list[Verdict]:
        return [v for v in self.verdicts
                if v.passed is False and (include_conditional or not v.conditional)]

    def csv_row(self) -> dict:
        row = {}
        for key, val in self.quantities.items():
            if isinstance(val, (int, float)):
                row[key] = val
        for v in self.verdicts:
            row[f"{v.name}_lhs"] = v.lhs
            row[f"{v.name}_rhs"] = v.rhs
            row[f"{v.name}_pass"] = v.passed
        return row


def audit_instance(spec, f_fn, h: float,
                   constants: StabilityConstants = StabilityConstants(),
                   preconditioner: str | None = None,
                   do_superlevel: bool = True,
                   do_section4: bool = True,
                   do_l1: bool = False,
                   do_f_stability: bool = False,
                   instance_name: str = "") -> DeficitReport:
    """Solve one instance and evaluate the full verdict set.

    ``spec`` is a DomainSpec, ``f_fn`` a callable (x, y) -> source values
    (or a constant).  Heavy searches (L1 centering, source comparison)
    are opt-in.
    """
    dom = geo.rasterize(spec, h)
    if callable(f_fn):
        f = ScalarField.from_function(dom, f_fn, nonnegative=True)
    else:
        f = ScalarField.constant(dom, float(f_fn))
    problem = PoissonProblem(dom, f)
    u = solve_dirichlet(problem, preconditioner=preconditioner)
    return audit_solution(problem, u, constants,
                          do_superlevel=do_superlevel,
                          do_section4=do_section4,
                          do_l1=do_l1, do_f_stability=do_f_stability,
                          instance={"name": instance_name,
                                    "domain": spec.to_json(), "h": h,
                                    "gamma_n": constants.gamma_n})


def audit_solution(problem: PoissonProblem, u: ScalarField,
                   constants: StabilityConstants = StabilityConstants(),
                   do_superlevel: bool = True,
                   do_section4: bool = True,
                   do_l1: bool = False,
                   do_f_stability: bool = False,
                   instance: dict | None = None) -> DeficitReport:
    """Evaluate the verdict set for an already-computed solution field."""
    from .elliptic import nu_ode_residual

    dom = problem.domain
    f = problem.source
    h = dom.h
    fstar = decreasing_rearrangement(f)
    sol = radial_solution(fstar, measure(dom))

    m = measure(dom)
    f_l1 = f.integral()
    verdicts: list[Verdict] = []
    q: dict = {"measure": m, "f_l1": f_l1, "h": h, "num_cells": dom.num_cells}

    tg = talenti_gap(u, sol)
    q["eps_inf"] = tg.eps_inf
    q["talenti_pointwise_min"] = tg.pointwise_min
    tal_tol = 5.0 * h * max(1.0, f_l1)
    verdicts.append(Verdict("talenti_comparison", tg.pointwise_min,
                            0.0, tal_tol,
                            bool(tg.pointwise_min >= -tal_tol)))

    grid_e = dirichlet_energy(u)
    ps = polya_szego_deficit(u, grid_energy=grid_e)
    q["grid_energy"] = grid_e
    q["profile_energy"] = ps.profile_energy
    q["E_u"] = ps.E_u
    # the profile reading carries an O(h) upward bias on coarse grids
    verdicts.append(_leq("polya_szego", ps.profile_energy,
                         1.02 * grid_e, 2.0 * h * grid_e))
    gap_tol = 5.0 * h * f_l1
    verdicts.append(_leq("energy_gap_lemma",
                         grid_e - ps.profile_energy,
                         2.0 * f_l1 * max(tg.eps_inf, 0.0), 10.0 * gap_tol))
    # summation by parts: int |grad u|^2 = int f u to solver tolerance
    fu = float((f.values * u.values)[dom.mask].sum()) * h * h
    verdicts.append(Verdict("weak_form_identity", grid_e, fu,
                            10.0 * problem.tolerance * max(1.0, abs(fu)),
                            bool(abs(grid_e - fu)
                                 <= 10.0 * problem.tolerance * max(1.0, abs(fu))
                                 + 1e-13)))

    norm = normalize(problem, u, sol)
    q["alpha"] = norm.alpha_raw
    q["alpha_normalized"] = norm.alpha
    q["eps_normalized"] = norm.eps
    q["rescale_a"] = norm.a
    q["rescale_b"] = norm.b
    q["rescaling_relations"] = norm.relations
    worst_rel = max(r["rel_residual"] for r in norm.relations)
    q["rescaling_worst_residual"] = worst_rel
    verdicts.append(_leq("rescaling_roundoff", worst_rel, 1e-12, 0.0))
    verdicts.append(_leq("alpha_invariance",
                         abs(norm.alpha - norm.alpha_raw), 10.0 * h, 0.0))

    verdicts.append(theorem_asymmetry_bound(norm.alpha, norm.eps, 1.0, 1.0,
                                            constants))
    wstar = decreasing_rearrangement(norm.w)
    s_om = s_omega_value(wstar, norm.alpha)
    q["s_omega_normalized"] = s_om
    verdicts.append(boosted_lemma(s_om, norm.alpha, norm.eps, constants))

    iso = isoperimetric_deficit(dom)
    q["isoperimetric_deficit"] = iso
    verdicts.append(Verdict("isoperimetric_nonneg", iso, 0.0, 5.0 * h,
                            bool(iso >= -5.0 * h)))
    verdicts.append(_leq("quantitative_isoperimetric",
                         norm.alpha_raw ** 2 / constants.gamma_n,
                         iso, 5.0 * h, conditional=True))

    l2rec = l2_asymmetry_bound(norm.w, norm.z, norm.alpha, s_om)
    q["l2_norm_gap_normalized"] = l2rec["l2_norm_gap"]
    q["l2_gap_empirical_ratio"] = l2rec["empirical_ratio"]
    verdicts.append(l2rec["verdict"])
    verdicts.append(l2rec["nonneg"])

    ode_res = nu_ode_residual(sol)
    q["nu_ode_residual"] = ode_res
    verdicts.append(_leq("nu_ode_residual", ode_res, 1e-4, 0.0))

    if do_section4:
        q["section4"] = section4_quantities(norm.w, norm.z, constants)
    if do_superlevel:
        umax = float(u.masked().max())
        fracs = (0.75, 0.5, 0.25)
        t_list = [float(tg.ustar(fr * m)) for fr in fracs]
        t_list = sorted({t for t in t_list if 0.0 < t < umax})
        q["superlevel"] = superlevel_audit(u, sol, t_list, constants,
                                           alpha_omega=norm.alpha_raw)
    if do_l1:
        q["l1_stability"] = l1_stability(u, constants)
    if do_f_stability:
        center = (q.get("l1_stability") or {}).get("center")
        q["f_stability"] = f_stability(f, u, sol, center=center)

    diag = getattr(u, "solver_diagnostics", {})
    return DeficitReport(instance=instance or {"h": h,
                                               "gamma_n": constants.gamma_n},
                         quantities=q, verdicts=verdicts, solver=diag)
