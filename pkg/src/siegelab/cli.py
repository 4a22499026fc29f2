"""Experiment harness: renders, named experiments, reporting and caching.

Reports are deterministic: numbers print with 17 significant digits, keys
are sorted, and volatile fields (timing) live under a single key that the
byte-compare canonicalization strips.  Exit codes: 0 pass, 1 fail,
2 inconclusive, 3 usage.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .cfrac import CFAngle, GOLDEN, PerturbationSpec, default_A
from .dynamics import QuadMap, postcritical_orbit
from .errors import NonConvergence, ReturnNotFound, SiegelabError
from .linearization import (
    LSetPredicate,
    SiegelDiskModel,
    SubdiskGate,
    conformal_radius,
    invariant_subdisk_boundary,
)
from .measure import (
    Disk,
    FilledJuliaPredicate,
    GridEstimate,
    KDeltaPredicate,
    KDeltaSpec,
    Region,
    density,
    density_profile,
    grid_area,
    hausdorff_semidistance,
)
from .perturbed import PerturbationData, StraighteningChart, XnDomain, g_sup_bound, residual_g

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3


# -- canonical serialization ------------------------------------------------------


def _canon(obj):
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, complex):
        return {"re": _canon(obj.real), "im": _canon(obj.imag)}
    if isinstance(obj, dict):
        return {k: _canon(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _canon(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, separators=(",", ":"))


def _strip_volatile(report):
    rep = {k: v for k, v in report.items() if k != "timing"}
    if "manifest" in rep:
        man = dict(rep["manifest"])
        man.pop("timing", None)
        rep["manifest"] = man
    return rep


def report_payload(report: dict) -> bytes:
    """The byte-compared content: the report minus volatile fields."""
    return canonical_json(_strip_volatile(report)).encode()


def params_digest(op: str, params: dict) -> str:
    return hashlib.sha256((op + "\n" + canonical_json(params)).encode()).hexdigest()


def make_manifest(op: str, params: dict, t0: float) -> dict:
    return {
        "experiment": op,
        "params": _canon(params),
        "params_digest": params_digest(op, params),
        "tool_version": __version__,
        "timing": {"seconds": time.time() - t0},
    }


# -- parameter files ----------------------------------------------------------------


def parse_params_text(text: str) -> dict:
    """Flat key=value lines; '#' comments; values auto-typed."""
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad params line: {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = _autotype(v.strip())
    return out


def _autotype(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    if v.lower() in ("true", "false"):
        return v.lower() == "true"
    return v


def load_params(path, overrides):
    params = {}
    if path:
        params.update(parse_params_text(Path(path).read_text()))
    for ov in overrides or []:
        params.update(parse_params_text(ov))
    return params


def angle_param(params: dict, key: str = "alpha", default: str = "0;[]|(1)") -> CFAngle:
    v = params.get(key, default)
    if isinstance(v, CFAngle):
        return v
    return CFAngle.parse(str(v))


# -- cache ---------------------------------------------------------------------------


class ResultCache:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, key, suffix=".json"):
        return self.root / f"{key}{suffix}"

    def get(self, key, suffix=".json"):
        p = self.path(key, suffix)
        return p.read_bytes() if p.exists() else None

    def put(self, key, payload: bytes, suffix=".json"):
        self.path(key, suffix).write_bytes(payload)

    def clear(self):
        n = 0
        for p in self.root.glob("*"):
            p.unlink()
            n += 1
        return n

    def stats(self):
        files = list(self.root.glob("*"))
        return {"entries": len(files), "bytes": sum(p.stat().st_size for p in files)}


def cache_root(out_dir):
    env = os.environ.get("SIEGELAB_CACHE")
    if env:
        return env
    return Path(out_dir) / "cache"


# -- renders ------------------------------------------------------------------------


def render_filled_julia(params, workers=1):
    alpha = angle_param(params)
    res = int(params.get("resolution", 512))
    m_max = int(params.get("m_max", 2000))
    fmap = QuadMap(alpha)
    pred = FilledJuliaPredicate(
        lam=complex(fmap.lam),
        m_max=m_max,
        escape_radius=float(params.get("escape_radius", 3.0)),
    )
    reg = Region(
        complex(params.get("center_re", -0.4), params.get("center_im", 0.0)),
        float(params.get("half_width", 2.0)),
    )
    est = grid_area(pred, reg, res, workers=workers, band_from_neighbors=True)
    return est, {"set": "filled-julia", "alpha": alpha.serialize(), **est.summary()}


def render_siegel(params, workers=1):
    alpha = angle_param(params)
    res = int(params.get("resolution", 512))
    model = SiegelDiskModel.build(alpha, boundary_samples=int(params.get("boundary_samples", 8192)))
    from .linearization import SubdiskGate

    gate = SubdiskGate(model.boundary, grid=512)

    class _SiegelPred:
        name = "siegel"

        def __call__(self, pts):
            from .measure import IN, OUT, UNDECIDED

            pts = np.asarray(pts, dtype=complex)
            v = np.full(pts.shape, OUT, dtype=np.uint8)
            v[gate.contains(pts)] = IN
            d = model.boundary.distance_approx(pts)
            v[d < model.boundary.max_gap] = UNDECIDED
            return v

    reg = Region(0j, float(params.get("half_width", 0.8)))
    est = grid_area(_SiegelPred(), reg, res, workers=1)
    return est, {
        "set": "siegel",
        "alpha": alpha.serialize(),
        "conformal_radius": model.conformal_radius,
        **est.summary(),
    }


def render_xn(params, workers=1):
    alpha = angle_param(params)
    n = int(params.get("n", 7))
    A_n = int(params.get("A_n", 10**10))
    rho = float(params.get("rho", 0.9))
    res = int(params.get("resolution", 1024))
    spec = PerturbationSpec(alpha, n, A_n, int(params.get("N", 1)))
    data = PerturbationData(spec, digits=60, chart_mode="none")
    dom = XnDomain(data, rho)

    class _XnPred:
        name = "xn"

        def __call__(self, pts):
            return dom.verdicts(np.asarray(pts, dtype=complex))

    reg = Region(0j, float(params.get("half_width", 1.0)))
    est = grid_area(_XnPred(), reg, res, workers=1)
    star = xn_star_like_check(dom, n_rays=int(params.get("star_rays", 256)))
    return est, {
        "set": "xn",
        "alpha": alpha.serialize(),
        "n": n,
        "A_n": A_n,
        "rho": rho,
        "s_n": dom.s_n,
        "star_like": bool(star),
        **est.summary(),
    }


def xn_star_like_check(dom, n_rays=256, n_samples=400, r_max=0.999):
    """Along each ray the in-verdict set must be an interval from 0."""
    ts = np.arange(n_rays) / n_rays
    rr = np.linspace(1e-4, r_max, n_samples)
    for t in ts:
        ray = rr * np.exp(2j * np.pi * t)
        inn = dom.membership_np(ray)
        if not inn[0]:
            return False
        # after the first exit there must be no re-entry
        first_out = np.argmin(inn) if not inn.all() else len(inn)
        if inn[first_out:].any():
            return False
    return True


def _kdelta_spec(params):
    alpha = angle_param(params)
    model = SiegelDiskModel.build(alpha)
    delta = float(params.get("delta", 0.1))
    m_max = int(params.get("m_max", 10000))
    if params.get("n"):
        spec = PerturbationSpec(
            alpha, int(params["n"]), int(params.get("A_n", default_A(alpha, int(params["n"])))),
            int(params.get("N", 1)),
        )
        lam = complex(QuadMap(spec.alpha_n).lam)
        flavor = "perturbed"
    else:
        lam = complex(model.map.lam)
        flavor = "base"
    return model, KDeltaSpec(model.boundary, delta, lam, m_max), flavor


def render_k_delta(params, workers=1):
    model, spec, flavor = _kdelta_spec(params)
    res = int(params.get("resolution", 512))
    reg = Region(0j, float(params.get("half_width", 0.8)))
    est = grid_area(KDeltaPredicate(spec), reg, res, workers=1, band_from_neighbors=True)
    return est, {"set": "k-delta", "flavor": flavor, "delta": spec.delta, **est.summary()}


def render_l_set(params, workers=1):
    alpha = angle_param(params)
    model = SiegelDiskModel.build(alpha)
    rho = float(params.get("rho", model.conformal_radius / 2))
    poly, _ = invariant_subdisk_boundary(model, rho)
    gate = SubdiskGate(poly)
    pred = LSetPredicate(model, gate, m_max=int(params.get("m_max", 2000)))
    res = int(params.get("resolution", 512))
    reg = Region(0j, float(params.get("half_width", 1.5)))
    est = grid_area(pred, reg, res, workers=1, band_from_neighbors=True)
    return est, {"set": "l-set", "rho": rho, **est.summary()}


RENDERS = {
    "filled-julia": render_filled_julia,
    "siegel": render_siegel,
    "xn": render_xn,
    "k-delta": render_k_delta,
    "l-set": render_l_set,
}


# -- experiments ----------------------------------------------------------------------


def exp_explosion_radius(params, workers=1):
    alpha = angle_param(params)
    J = int(params.get("J", 2000))
    k_max = int(params.get("k_max", 8))
    tol = float(params.get("tolerance", 0.05))
    r_s, e_s = conformal_radius(alpha, "series", J=J)
    r_e, e_e = conformal_radius(alpha, "explosion", k_max=k_max)
    rel = abs(r_s - r_e) / r_s
    return {
        "series": {"radius": r_s, "error": e_s, "J": J},
        "explosion": {"radius": r_e, "error": e_e, "k_max": k_max},
        "relative_spread": rel,
        "tolerance": tol,
        "verdict": "pass" if rel <= tol else "fail",
    }


def exp_xn_density(params, workers=1):
    alpha = angle_param(params)
    n = int(params.get("n", 7))
    A_n = int(params.get("A_n", 10**10))
    rho = float(params.get("rho", 0.9))
    res = int(params.get("resolution", 2048))
    threshold = float(params.get("threshold", 0.45))
    spec = PerturbationSpec(alpha, n, A_n, int(params.get("N", 1)))
    data = PerturbationData(spec, digits=60, chart_mode="none")
    dom = XnDomain(data, rho)
    U = Disk(complex(params.get("u_re", 0.0), params.get("u_im", 0.0)), float(params.get("u_radius", 0.5)))
    reg = Region(U.center, U.radius)
    pts = reg.pixel_centers(res)
    sel = U.contains(pts)
    inn = dom.membership_np(pts[sel])
    dens = float(np.count_nonzero(inn)) / int(np.count_nonzero(sel))
    return {
        "density": dens,
        "threshold": threshold,
        "resolution": res,
        "n": n,
        "A_n": A_n,
        "rho": rho,
        "verdict": "pass" if dens >= threshold else "fail",
    }


def exp_orbit_containment(params, workers=1):
    alpha = angle_param(params)
    n = int(params.get("n", 7))
    A_n = int(params.get("A_n", 10**10))
    rho = float(params.get("rho", 0.8))
    n_samples = int(params.get("samples", 200))
    m_max = int(params.get("m_max", 100000))
    delta = float(params.get("delta", 0.15))
    spec = PerturbationSpec(alpha, n, A_n, int(params.get("N", 1)))
    data = PerturbationData(spec, digits=60, chart_mode="linearizer", chart_scope=0.4)
    dom = XnDomain(data, rho)
    rng = np.random.default_rng(int(params.get("seed", 11)))
    ws = []
    while len(ws) < n_samples:
        w = complex(rng.uniform(-rho, rho), rng.uniform(-rho, rho))
        if abs(w) < rho and dom.membership_np(np.array([w]))[0]:
            ws.append(w)
    zs = data.limit_chart_np(np.array(ws))
    model = SiegelDiskModel.build(alpha)
    vn_spec = KDeltaSpec(model.boundary, delta, complex(QuadMap(spec.alpha_n).lam), m_max)
    verdicts, exits = __import__("siegelab.measure", fromlist=["k_delta_verdicts"]).k_delta_verdicts(
        vn_spec, zs, return_exit=True
    )
    from .measure import IN

    n_stay = int(np.count_nonzero(verdicts == IN))
    return {
        "samples": n_samples,
        "m_max": m_max,
        "delta": delta,
        "stayed": n_stay,
        "escaped_or_left": n_samples - n_stay,
        "verdict": "pass" if n_stay == n_samples else "fail",
    }


def exp_lift_residuals(params, workers=1):
    alpha = angle_param(params)
    ns = [int(x) for x in str(params.get("ns", "5,6,7")).split(",")]
    A_n = int(params.get("A_n", 10**10))
    r = float(params.get("r", 0.35))
    count = int(params.get("probes", 100))
    sup_cap = float(params.get("sup_cap", 0.1))
    r_n = float(params.get("r_n", 0.45))
    from mpmath import mpf, workdps

    sups = {}
    g_checks = {}
    for n in ns:
        spec = PerturbationSpec(alpha, n, A_n, int(params.get("N", 1)))
        data = PerturbationData(spec, digits=60)
        chart = StraighteningChart(data)
        with workdps(70):
            sup = mpf(0)
            for Z in chart.probe_grid(r, count):
                F = chart.lift_F(Z)
                sup = max(sup, abs(F - Z - 1))
        sups[n] = float(sup)
        # residual bound check (only where the chart reaches r_n comfortably)
        if r_n < data.chart_radius:
            rng = np.random.default_rng(5)
            xr = XnDomain(data, r)
            sup_g = 0.0
            cnt = 0
            with workdps(70):
                while cnt < 24:
                    z = complex(rng.uniform(-r, r), rng.uniform(-r, r))
                    if abs(z) < 0.02 or not xr.membership_np(np.array([z]))[0]:
                        continue
                    sup_g = max(sup_g, float(abs(residual_g(data, z))))
                    cnt += 1
            bound = g_sup_bound(data, r_n)
            g_checks[n] = {"sup_g": sup_g, "bound": bound, "r_n": r_n, "ok": sup_g <= bound}
    vals = [sups[n] for n in ns]
    decreasing = all(vals[i] > vals[i + 1] for i in range(len(vals) - 1))
    ok = max(vals) <= sup_cap and decreasing and all(c["ok"] for c in g_checks.values())
    return {
        "sup_F_minus_Z_minus_1": sups,
        "decreasing": decreasing,
        "sup_cap": sup_cap,
        "g_residual": g_checks,
        "r": r,
        "A_n": A_n,
        "verdict": "pass" if ok else "fail",
    }


def exp_fatou_residuals(params, workers=1):
    from .fatou import ISModelMap, attracting_fatou, perturbed_fatou, repelling_fatou

    model = ISModelMap()
    att = attracting_fatou(model)
    grid = [att.tau_inv(18 + 3 * j + 5j * k) for k in range(-4, 5) for j in range(11)]
    res_att = att.abel_residual(grid)
    phi_v = att.phi(model.v)
    rep = repelling_fatou(model, att)
    grid_rep = [rep.tau_inv(-18 - 3 * j + 5j * k) for k in range(-4, 5) for j in range(11)]
    res_rep = rep.abel_residual(grid_rep)
    acf = CFAngle.parse(str(params.get("alpha_pert", "0;[48]|(1)")))
    chart = perturbed_fatou(QuadMap(acf))
    res_pert = chart.abel_residual_grid(50)
    per = 1.0 / chart.alpha
    w = 11.3 + 2.1j
    lift_per = abs(chart.lift_F(w + per) - chart.lift_F(w) - per)
    ok = (
        res_att < 1e-8
        and res_rep < 1e-8
        and abs(phi_v - 1.0) < 1e-10
        and res_pert < 1e-7
        and lift_per < 1e-10
    )
    return {
        "abel_attracting": res_att,
        "abel_repelling": res_rep,
        "phi_at_critical_value": [phi_v.real, phi_v.imag],
        "abel_perturbed": res_pert,
        "lift_periodicity": float(lift_per),
        "tolerances": {"parabolic": 1e-8, "perturbed": 1e-7, "normalization": 1e-10, "periodicity": 1e-10},
        "verdict": "pass" if ok else "fail",
    }


def exp_claim1(params, workers=1):
    from .fatou import perturbed_fatou

    entries = [int(x) for x in str(params.get("entries", "48,97")).split(",")]
    n_probes = int(params.get("probes", 50))
    sups = []
    for e in entries:
        acf = CFAngle(0, (e,), (1,))
        ch = perturbed_fatou(QuadMap(acf))
        per = 1.0 / ch.alpha
        difs = []
        xs = np.linspace(0.15, 0.85, max(4, n_probes // 3))
        for xf in xs:
            for dh in (0.0, 0.7):
                w = xf * per + 1j * (ch.top_zone_height() + dh)
                difs.append(abs(ch.psi_quadrature(w) - ch.phi_top(w)))
            w = xf * per - 1j * (ch.bot_zone_height() + 0.3)
            difs.append(abs(ch.psi_quadrature(w) - ch.phi_bot(w)))
        sups.append(float(max(difs)))
    ok = sups[1] <= sups[0] * (1 + float(params.get("slack", 0.05)))
    return {
        "alphas": [f"0;[{e}]|(1)" for e in entries],
        "sup_phi_minus_psi": sups,
        "non_growth": ok,
        "verdict": "pass" if ok else "fail",
    }


def exp_renorm_derivative(params, workers=1):
    from .fatou import perturbed_fatou, renorm_derivative_target, renorm_step_sample
    import cmath

    entries = [int(x) for x in str(params.get("entries", "48,97")).split(",")]
    tol = float(params.get("tolerance", 1e-2))
    results = []
    ok = True
    for e in entries:
        acf = CFAngle(0, (e,), (1,))
        ch = perturbed_fatou(QuadMap(acf))
        samp = renorm_step_sample(ch)
        target = renorm_derivative_target(ch.alpha)
        got = cmath.phase(samp.derivative_estimate)
        diff = abs((got - target + math.pi) % (2 * math.pi) - math.pi)
        ok = ok and diff <= tol
        results.append(
            {
                "alpha": ch.alpha,
                "derivative": [samp.derivative_estimate.real, samp.derivative_estimate.imag],
                "arg": got,
                "target_arg_mod_2pi": target,
                "arg_diff": diff,
                "return_counts": samp.return_counts,
            }
        )
    return {"runs": results, "tolerance": tol, "verdict": "pass" if ok else "fail"}


def exp_mcmullen_profile(params, workers=1):
    alpha = angle_param(params)
    delta = float(params.get("delta", 0.1))
    m_max = int(params.get("m_max", 10000))
    px = int(params.get("px_per_radius", 48))
    final_cap = float(params.get("final_cap", 0.15))
    model = SiegelDiskModel.build(alpha)
    spec = KDeltaSpec(model.boundary, delta, complex(model.map.lam), m_max)
    z0 = complex(model.map.critical_point)
    radii = [2.0**-k for k in range(3, 8)]
    prof = density_profile(spec, z0, radii, px_per_radius=px)
    noise = float(params.get("noise", 0.02))
    mono = all(prof[i + 1] <= prof[i] + noise for i in range(len(prof) - 1))
    ok = mono and prof[-1] < final_cap
    return {
        "radii": radii,
        "complement_density": prof,
        "monotone_within_noise": mono,
        "final_cap": final_cap,
        "verdict": "pass" if ok else "fail",
    }


def exp_postcritical_trend(params, workers=1):
    from .fatou import postcritical_proximity

    alpha = angle_param(params)
    ns = [int(x) for x in str(params.get("ns", "5,6,7")).split(",")]
    m = int(params.get("m", 20000))
    slack = float(params.get("slack", 0.10))
    model = SiegelDiskModel.build(alpha)
    vals = []
    for n in ns:
        A = int(params.get("A_n", 0)) or default_A(alpha, n)
        spec = PerturbationSpec(alpha, n, A, int(params.get("N", 1)))
        vals.append(postcritical_proximity(alpha, spec, m, model=model))
    mono = all(vals[i + 1] <= vals[i] * (1 + slack) for i in range(len(vals) - 1))
    return {
        "ns": ns,
        "semidistance": vals,
        "non_increasing_within_slack": mono,
        "slack": slack,
        "verdict": "pass" if mono else "fail",
    }


def exp_semicontinuity(params, workers=1):
    alpha = angle_param(params)
    ns = [int(x) for x in str(params.get("ns", "4,5,6")).split(",")]
    res = int(params.get("resolution", 512))
    m_max = int(params.get("m_max", 2000))
    slack = float(params.get("slack", 0.03))
    reg = Region(complex(params.get("center_re", -0.4)), float(params.get("half_width", 2.0)))
    base_map = QuadMap(alpha)
    base = grid_area(
        FilledJuliaPredicate(complex(base_map.lam), m_max), reg, res,
        workers=workers, band_from_neighbors=True,
    )
    runs = []
    ok = True
    for n in ns:
        A = int(params.get("A_n", 0)) or default_A(alpha, n)
        spec = PerturbationSpec(alpha, n, A, int(params.get("N", 1)))
        pm = QuadMap(spec.alpha_n)
        est = grid_area(
            FilledJuliaPredicate(complex(pm.lam), m_max), reg, res,
            workers=workers, band_from_neighbors=True,
        )
        bound = base.area_in + base.area_undecided + est.area_undecided + slack * base.area_in
        runs.append({"n": n, "area": est.area_in, "bound": bound})
        ok = ok and est.area_in <= bound
    return {
        "base_area": base.area_in,
        "base_bracket": base.area_undecided,
        "runs": runs,
        "slack": slack,
        "verdict": "pass" if ok else "fail",
    }


def exp_density_one_trend(params, workers=1):
    alpha = angle_param(params)
    ns = [int(x) for x in str(params.get("ns", "5,6,7")).split(",")]
    delta = float(params.get("delta", 0.05))
    m_max = int(params.get("m_max", 10000))
    res = int(params.get("resolution", 256))
    floor = float(params.get("floor", 0.5))
    model = SiegelDiskModel.build(alpha)
    from .linearization import SubdiskGate

    gate = SubdiskGate(model.boundary, grid=768)
    v = model.boundary.vertices
    reg = Region(
        complex((v.real.min() + v.real.max()) / 2, (v.imag.min() + v.imag.max()) / 2),
        (v.real.max() - v.real.min()) / 2 * 1.02,
        (v.imag.max() - v.imag.min()) / 2 * 1.02,
    )
    pts = reg.pixel_centers(res)
    inside = gate.contains(pts.ravel()).reshape(pts.shape)
    dens = []
    from .measure import IN, k_delta_verdicts

    for n in ns:
        A = int(params.get("A_n", 0)) or default_A(alpha, n)
        spec = PerturbationSpec(alpha, n, A, int(params.get("N", 1)))
        kd = KDeltaSpec(model.boundary, delta, complex(QuadMap(spec.alpha_n).lam), m_max)
        verdicts = k_delta_verdicts(kd, pts[inside])
        dens.append(float(np.count_nonzero(verdicts == IN)) / int(np.count_nonzero(inside)))
    increasing = all(dens[i] < dens[i + 1] for i in range(len(dens) - 1))
    ok = increasing and dens[-1] > floor
    return {
        "ns": ns,
        "delta": delta,
        "dens_Delta_Kn": dens,
        "increasing": increasing,
        "floor": floor,
        "verdict": "pass" if ok else "fail",
    }


EXPERIMENTS = {
    "explosion-radius": exp_explosion_radius,
    "xn-density": exp_xn_density,
    "orbit-containment": exp_orbit_containment,
    "lift-residuals": exp_lift_residuals,
    "fatou-residuals": exp_fatou_residuals,
    "claim1": exp_claim1,
    "renorm-derivative": exp_renorm_derivative,
    "mcmullen-profile": exp_mcmullen_profile,
    "postcritical-trend": exp_postcritical_trend,
    "semicontinuity": exp_semicontinuity,
    "density-one-trend": exp_density_one_trend,
}


# -- command drivers -----------------------------------------------------------------


def run_render(name: str, params: dict, out_dir, workers=1, use_cache=True):
    t0 = time.time()
    key = params_digest("render-" + name, params)
    cache = ResultCache(cache_root(out_dir))
    est, summary = RENDERS[name](params, workers)
    report = {"manifest": make_manifest("render-" + name, params, t0), "summary": summary}
    p5 = est.to_p5()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.p5").write_bytes(p5)
    (out / f"{name}.json").write_text(canonical_json(_strip_volatile(report)) + "\n")
    if use_cache:
        cache.put(key, p5, ".p5")
        cache.put(key, report_payload(report))
    return report, p5


def run_experiment(name: str, params: dict, out_dir, workers=1, use_cache=True):
    t0 = time.time()
    key = params_digest("experiment-" + name, params)
    try:
        body = EXPERIMENTS[name](params, workers)
    except (NonConvergence, ReturnNotFound) as exc:
        body = {"verdict": "inconclusive", "reason": str(exc)}
    report = {"manifest": make_manifest("experiment-" + name, params, t0), "report": body}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(canonical_json(_strip_volatile(report)) + "\n")
    if use_cache:
        ResultCache(cache_root(out_dir)).put(key, report_payload(report))
    return report


def run_cache(action: str, out_dir, sample_frac=0.05, rng_seed=0):
    cache = ResultCache(cache_root(out_dir))
    if action == "clear":
        return {"cleared": cache.clear(), **cache.stats()}
    if action == "stats":
        return cache.stats()
    if action == "verify":
        # recompute a random sample from the stored manifests and compare bytes
        files = sorted(cache.root.glob("*.json"))
        rng = np.random.default_rng(rng_seed)
        n = max(1, math.ceil(len(files) * sample_frac)) if files else 0
        chosen = sorted(rng.choice(len(files), size=n, replace=False)) if n else []
        mismatches = []
        for i in chosen:
            p = files[int(i)]
            stored = p.read_bytes()
            man = json.loads(stored)["manifest"]
            op = man["experiment"]
            pars = man["params"]
            if op.startswith("experiment-"):
                fresh = EXPERIMENTS[op[len("experiment-"):]](pars, 1)
                fresh_payload = report_payload({"manifest": man, "report": fresh})
            elif op.startswith("render-"):
                est, summary = RENDERS[op[len("render-"):]](pars, 1)
                fresh_payload = report_payload({"manifest": man, "summary": summary})
                p5 = cache.get(p.stem, ".p5")
                if p5 is not None and p5 != est.to_p5():
                    mismatches.append(p.name + " (p5)")
            else:
                mismatches.append(p.name + " (unknown op)")
                continue
            if fresh_payload != stored:
                mismatches.append(p.name)
        return {"checked": int(n), "mismatches": mismatches, "ok": not mismatches}
    raise ValueError(f"unknown cache action {action}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="siegelab")
    sub = ap.add_subparsers(dest="command")
    for cmd, choices in (("render", sorted(RENDERS)), ("experiment", sorted(EXPERIMENTS))):
        p = sub.add_parser(cmd)
        p.add_argument("name", choices=choices)
        p.add_argument("--params", default=None)
        p.add_argument("--out", default="out")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--precision", type=int, default=None)
        p.add_argument("--set", action="append", default=[], help="key=value override")
    pc = sub.add_parser("cache")
    pc.add_argument("action", choices=["verify", "clear", "stats"])
    pc.add_argument("--out", default="out")
    try:
        args = ap.parse_args(argv)
    except SystemExit:
        return EXIT_USAGE
    if args.command is None:
        ap.print_help()
        return EXIT_USAGE
    try:
        if args.command == "render":
            params = load_params(args.params, args.set)
            if args.precision:
                params["precision"] = args.precision
            run_render(args.name, params, args.out, args.workers)
            return EXIT_PASS
        if args.command == "experiment":
            params = load_params(args.params, args.set)
            if args.precision:
                params["precision"] = args.precision
            report = run_experiment(args.name, params, args.out, args.workers)
            verdict = report["report"].get("verdict", "inconclusive")
            print(canonical_json(_strip_volatile(report)))
            return {"pass": EXIT_PASS, "fail": EXIT_FAIL}.get(verdict, EXIT_INCONCLUSIVE)
        if args.command == "cache":
            print(canonical_json(run_cache(args.action, args.out)))
            return EXIT_PASS
    except SiegelabError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (ValueError, KeyError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
