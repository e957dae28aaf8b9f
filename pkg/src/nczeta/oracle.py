"""Finite-dimensional matrix models that test the identities the symbolic layer relies on.

k is a random positive matrix, the derivations are inner, ``d_j(x) = [D_j, x]``
with hermitian D_j, tau0 is the normalized trace and ``Delta(x) = k^-2 x k^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, quad_vec

from .coeffring import ScalarPoly
from .ncalg import B0, DK, K, NCPoly
from .modular import (ModularExpr, ModularKey, SpectralFn, L_value, eval_spectral)

EIGENGAP = 1e-3


class OracleError(RuntimeError):
    pass


@dataclass
class MatrixModel:
    n: int
    k: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    seed: int = 0
    sigma: np.ndarray = field(init=False, repr=False)
    basis: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not np.allclose(self.k, self.k.conj().T):
            raise OracleError("k must be hermitian")
        sigma, basis = np.linalg.eigh(self.k)
        if sigma.min() <= 0:
            raise OracleError("k must be positive definite")
        self.sigma, self.basis = sigma, basis

    @property
    def kappa(self) -> np.ndarray:
        """Eigenvalues of k^2."""
        return self.sigma ** 2

    def kpow(self, p: float) -> np.ndarray:
        return (self.basis * self.sigma ** p) @ self.basis.conj().T

    def log_k(self) -> np.ndarray:
        return (self.basis * np.log(self.sigma)) @ self.basis.conj().T

    def delta(self, j: int, x: np.ndarray) -> np.ndarray:
        d = self.d1 if j == 1 else self.d2
        return d @ x - x @ d

    def dk(self, a: int, b: int) -> np.ndarray:
        x = self.k
        for _ in range(a):
            x = self.delta(1, x)
        for _ in range(b):
            x = self.delta(2, x)
        return x

    def tau0(self, x: np.ndarray) -> complex:
        return np.trace(x) / self.n

    def phi(self, x: np.ndarray) -> complex:
        return self.tau0(x @ self.kpow(-2))

    def delta_ratios(self) -> np.ndarray:
        """Eigenvalue of Delta on the matrix unit E_ab (k eigenbasis): kappa_b / kappa_a."""
        kap = self.kappa
        return kap[None, :] / kap[:, None]


def _random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def _random_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def min_ratio_gap(sigma) -> float:
    kap = np.asarray(sigma) ** 2
    ratios = kap[None, :] / kap[:, None]
    off = ratios[~np.eye(len(kap), dtype=bool)]
    return float(np.min(np.abs(off - 1))) if off.size else math.inf


def random_model(n: int, seed: int, spread: float = 1.0, guard: bool = True) -> MatrixModel:
    """Random model; eigenvalues of k are exp(spread * N(0,1)/2), regenerated until the
    eigenvalue ratios of Delta are at least EIGENGAP away from 1."""
    rng = np.random.default_rng(seed)
    while True:
        sigma = np.exp(spread * rng.normal(size=n) / 2)
        if not guard or min_ratio_gap(sigma) >= EIGENGAP:
            break
    v = _random_unitary(rng, n)
    k = (v * sigma) @ v.conj().T
    k = (k + k.conj().T) / 2
    return MatrixModel(n, k, _random_hermitian(rng, n), _random_hermitian(rng, n), seed)


def near_degenerate_model(n: int, seed: int, width: float = 0.02) -> MatrixModel:
    """All Delta eigenvalues within the series window around 1."""
    rng = np.random.default_rng(seed)
    sigma = 1.3 * np.exp(width * rng.uniform(-1, 1, size=n) / 4)
    v = _random_unitary(rng, n)
    k = (v * sigma) @ v.conj().T
    return MatrixModel(n, (k + k.conj().T) / 2, _random_hermitian(rng, n),
                       _random_hermitian(rng, n), seed)


# -- functional calculus ----------------------------------------------------------------

def functional_calculus(F, x: np.ndarray, model: MatrixModel, point: dict | None = None) -> np.ndarray:
    """F(Delta)(x); F is a SpectralFn (tau-dependent coefficients read from ``point``)
    or a vectorized callable of the eigenvalue."""
    v = model.basis
    xe = v.conj().T @ x @ v
    ratios = model.delta_ratios()
    if isinstance(F, SpectralFn):
        vals = eval_spectral(F, ratios.ravel(), point).reshape(ratios.shape)
    else:
        vals = np.asarray(F(ratios), dtype=complex)
    return v @ (xe * vals) @ v.conj().T


def key_function(key: ModularKey) -> SpectralFn:
    return SpectralFn({(key.twist, key.m): 1})


def bilinear(model: MatrixModel, F, i: int, j: int, point: dict | None = None) -> complex:
    """phi(F(Delta)(d_i k) d_j k)."""
    lhs = functional_calculus(F, model.dk(*_unit(i)), model, point)
    return model.phi(lhs @ model.dk(*_unit(j)))


def _unit(i):
    return (1, 0) if i == 1 else (0, 1)


def _scalar(c: ScalarPoly, tau1: float, tau2: float) -> float:
    return float(c.evaluate({"tau1": tau1, "tau2": tau2, "pi": math.pi}))


# -- identity checks --------------------------------------------------------------------

def check_lemma_Dm(model: MatrixModel, m: int, trials: int = 1, tol: float = 1e-8,
                   rng=None) -> dict:
    """Quadrature of int_0^inf k^(2m+2) u^m (k^2u+1)^-(m+1) rho (k^2u+1)^-1 du vs L_m(Delta)(rho).

    The matrix integrand is built from inverses only (no eigenbasis); [0, 1] is integrated
    in u and [1, inf) in s = 1/u, where it becomes (k^2 (k^2+s)^-1)^(m+1) rho (k^2+s)^-1.
    """
    rng = rng or np.random.default_rng(model.seed + 1000 * m)
    k2 = model.k @ model.k
    eye = np.eye(model.n)
    worst = 0.0
    for _ in range(trials):
        rho = rng.normal(size=(model.n, model.n)) + 1j * rng.normal(size=(model.n, model.n))

        def head(u):
            inv = np.linalg.inv(k2 * u + eye)
            g = k2 @ inv
            return np.linalg.matrix_power(u * g, m) @ g @ rho @ inv

        def tail(s):
            inv = np.linalg.inv(k2 + s * eye)
            return np.linalg.matrix_power(k2 @ inv, m + 1) @ rho @ inv

        total = 0
        for fn in (head, tail):
            val, err = quad_vec(fn, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=400)
            if not np.isfinite(err) or err > tol:
                raise OracleError(f"quadrature did not converge (error estimate {err:g})")
            total = total + val
        exact = functional_calculus(lambda r: L_value(m, r), rho, model)
        worst = max(worst, float(np.max(np.abs(total - exact))))
    return {"check": "lemma_Dm", "m": m, "max_error": worst, "pass": worst <= tol}


def slot_sum(model: MatrixModel, expr: ModularExpr, tau1: float, tau2: float) -> dict:
    """The four prefactored terms (2pi/tau2) F_ij-bilinears of a ModularExpr."""
    pre = _scalar(expr.prefactor, tau1, tau2)
    point = {"tau1": tau1, "tau2": tau2}
    return {(i, j): pre * bilinear(model, fn, i, j, point)
            for (i, j), fn in sorted(expr.slots.items())}


def check_final_identity(model: MatrixModel, f: SpectralFn, tau1: float, tau2: float,
                         tol: float = 1e-9) -> dict:
    pre = 2 * math.pi / tau2
    B = {(i, j): bilinear(model, f, i, j) for i in (1, 2) for j in (1, 2)}
    ratios = {(1, 1): 1.0, (2, 2): tau1 ** 2 + tau2 ** 2, (1, 2): tau1, (2, 1): tau1}
    terms = {ij: pre * ratios[ij] * B[ij] for ij in B}
    total = sum(terms.values())
    scale = max(max(abs(t) for t in terms.values()), max(abs(b) for b in B.values()), 1e-300)
    anti = max(abs(B[1, 2] + B[2, 1]), abs(B[1, 1]), abs(B[2, 2])) / max(abs(b) for b in B.values()) \
        if any(B.values()) else 0.0
    rel = abs(total) / scale if scale > 1e-300 else 0.0
    return {"check": "final_identity", "relative_sum": rel, "antisymmetry": anti,
            "pass": rel <= tol and anti <= tol}


def _word_matrix(model: MatrixModel, word, r: float | None = None) -> np.ndarray:
    out = np.eye(model.n, dtype=complex)
    b0 = None
    for at in word:
        if at.kind == K:
            out = out @ model.kpow(at.a)
        elif at.kind == B0:
            if b0 is None:
                if r is None:
                    raise OracleError("b0 needs a radius")
                b0 = np.linalg.inv(r * r * (model.k @ model.k) + np.eye(model.n))
            out = out @ np.linalg.matrix_power(b0, at.a)
        elif at.kind == DK and not at.twist:
            out = out @ model.dk(at.a, at.b)
        else:
            raise OracleError(f"atom {at} not supported by the oracle")
    return out


def eval_direct(model: MatrixModel, x: NCPoly, tau1: float, tau2: float) -> complex:
    """tau0 of a final-stage word list, evaluated word by word."""
    return sum(_scalar(c, tau1, tau2) * model.tau0(_word_matrix(model, w))
               for w, c in x.terms.items())


def eval_modular_terms(model: MatrixModel, terms: dict, tau1: float, tau2: float) -> complex:
    """tau0 of sum c * k^-2 F(Delta)(d_i k) d_j k, each term evaluated on its own."""
    total = 0j
    for key, c in terms.items():
        total += _scalar(c, tau1, tau2) * bilinear(model, key_function(key), key.i, key.j)
    return total


def check_regrouping(model: MatrixModel, terms: dict, direct: NCPoly, expr: ModularExpr,
                     f: SpectralFn, unsymmetrized: dict, tau1: float, tau2: float,
                     tol: float = 1e-9) -> dict:
    """Term-by-term bracket (with the sign change) vs the regrouped f-form; also the two
    routes for the symmetrized split."""
    pre = 2 * math.pi / tau2
    pieces = [_scalar(c, tau1, tau2) * model.tau0(_word_matrix(model, w))
              for w, c in direct.terms.items()]
    pieces += [_scalar(c, tau1, tau2) * bilinear(model, key_function(k), k.i, k.j)
               for k, c in terms.items()]
    premain = -pre * sum(pieces)
    ratios = {(1, 1): 1.0, (2, 2): tau1 ** 2 + tau2 ** 2, (1, 2): tau1, (2, 1): tau1}
    regrouped = pre * sum(ratios[i, j] * bilinear(model, f, i, j) for (i, j) in ratios)
    scale = max(max(abs(p) for p in pieces) * pre, 1e-300)
    rel = abs(premain - regrouped) / scale
    slot_form = sum(slot_sum(model, expr, tau1, tau2).values())
    rel_slots = abs(slot_form - regrouped) / scale
    sym = eval_modular_terms(model, terms, tau1, tau2)
    plain = eval_modular_terms(model, unsymmetrized, tau1, tau2)
    split_scale = max(abs(sym), abs(plain), max(abs(p) for p in pieces), 1e-300)
    rel_split = abs(sym - plain) / split_scale
    return {"check": "regrouping", "relative_difference": rel, "slot_form_difference": rel_slots,
            "split_difference": rel_split,
            "pass": rel <= tol and rel_slots <= tol and rel_split <= tol}


def check_log_transport(model: MatrixModel, tol: float = 1e-10) -> dict:
    """k^-1 d_j(k) = 2 (Delta^1/2 - 1)/log(Delta) (d_j(log k))."""
    logk = model.log_k()

    def transport(ratio):
        x = np.log(ratio)
        small = np.abs(x) < 1e-8
        safe = np.where(small, 1.0, x)
        return np.where(small, 1.0 + x / 4, 2 * np.expm1(safe / 2) / safe)

    worst = 0.0
    for j in (1, 2):
        lhs = model.kpow(-1) @ model.dk(*_unit(j))
        rhs = functional_calculus(transport, model.delta(j, logk), model)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(lhs)), 1e-300)))
    return {"check": "log_transport", "max_relative_error": worst, "pass": worst <= tol}


def check_log_delta_property(model: MatrixModel, samples: int = 3, tol: float = 1e-10,
                             rng=None) -> dict:
    """tau0(a F(log Delta)(b)) = tau0(F(-log Delta)(a) b) for random polynomials F."""
    rng = rng or np.random.default_rng(model.seed + 77)
    worst = 0.0
    for _ in range(samples):
        coeffs = rng.normal(size=4)
        F = np.polynomial.Polynomial(coeffs)
        a = rng.normal(size=(model.n, model.n)) + 1j * rng.normal(size=(model.n, model.n))
        b = rng.normal(size=(model.n, model.n)) + 1j * rng.normal(size=(model.n, model.n))
        lhs = model.tau0(a @ functional_calculus(lambda v: F(np.log(v)), b, model))
        rhs = model.tau0(functional_calculus(lambda v: F(-np.log(v)), a, model) @ b)
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    return {"check": "log_delta_property", "max_relative_error": worst, "pass": worst <= tol}


def check_trace_of_derivation(model: MatrixModel, tol: float = 1e-13, rng=None) -> dict:
    rng = rng or np.random.default_rng(model.seed + 99)
    x = rng.normal(size=(model.n, model.n)) + 1j * rng.normal(size=(model.n, model.n))
    worst = max(abs(model.tau0(model.delta(j, x))) / max(np.abs(x).max(), 1.0) for j in (1, 2))
    return {"check": "trace_of_derivation", "max_abs": float(worst), "pass": worst <= tol}


def _radial_integrand(model: MatrixModel, x: NCPoly, tau1: float, tau2: float):
    """tau0 of an r-stage word list as a function of r (coefficients pre-evaluated)."""
    point = {"tau1": tau1, "tau2": tau2}
    prepared = []
    for w, c in x.terms.items():
        powers = {key[0]: float(rest.evaluate(point)) for key, rest in c.split("r").items()}
        prepared.append((w, powers))

    def value(r):
        return sum(sum(v * r ** e for e, v in powers.items()) * model.tau0(_word_matrix(model, w, r))
                   for w, powers in prepared).real

    return value


def _integrate_r(fn):
    """int_0^inf fn(r) dr split at r = 1, with r = 1/s on the tail."""
    head, _ = quad(fn, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    tail, _ = quad(lambda s: fn(1 / s) / (s * s) if s > 0 else 0.0, 0.0, 1.0,
                   epsabs=1e-13, epsrel=1e-12, limit=200)
    return head + tail


def check_radial_integration(model: MatrixModel, groups: dict, final_direct: NCPoly,
                             terms: dict, tau1: float, tau2: float, tol: float = 1e-8) -> dict:
    """Integrate each word family of the r-list numerically over r and compare with its
    closed form (Beta integrals; modified-logarithm bilinears). ``groups`` maps the
    family name to its r-stage NCPoly."""
    from .integrate import ALL_LEFT, SINGLE_MIDDLE, SQUARED_MIDDLE
    left_q = _integrate_r(_radial_integrand(model, groups[ALL_LEFT], tau1, tau2))
    middle = groups[SINGLE_MIDDLE] + groups[SQUARED_MIDDLE]
    mid_q = _integrate_r(_radial_integrand(model, middle, tau1, tau2))
    left_pieces = [_scalar(c, tau1, tau2) * model.tau0(_word_matrix(model, w))
                   for w, c in final_direct.terms.items()]
    mid_pieces = [_scalar(c, tau1, tau2) * bilinear(model, key_function(k), k.i, k.j)
                  for k, c in terms.items()]
    out = {"check": "radial_integration"}
    worst = 0.0
    for name, q, pieces in (("all_left", left_q, left_pieces), ("middle", mid_q, mid_pieces)):
        closed = sum(pieces).real
        scale = max(max(abs(p) for p in pieces), 1e-300)
        rel = abs(q - closed) / scale
        out[name] = {"quadrature": q, "closed_form": closed, "relative_difference": rel}
        worst = max(worst, rel)
    out["relative_difference"] = worst
    out["pass"] = worst <= tol
    return out


def _plain(x):
    """numpy scalars to Python ones, recursively (for JSON output)."""
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_plain(v) for v in x]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def run_battery(bundle, trials: int = 100, seed: int = 0, dims=(3, 4, 5), tol: float = 1e-9,
                dm_tol: float = 1e-8, transport_tol: float = 1e-10, radial_trials: int = 5,
                degenerate_trials: int = 5) -> dict:
    """All checks over ``trials`` seeded models; ``bundle`` supplies pipeline outputs
    (attributes terms, direct, expr, f, unsymmetrized, groups).

    The first ``degenerate_trials`` seeds also get a near-degenerate model whose Delta
    spectrum sits inside the series window of L_m."""
    rows = []
    for t in range(trials):
        s = seed + t
        n = dims[t % len(dims)]
        model = random_model(n, s)
        rng = np.random.default_rng(s + 12345)
        tau1 = float(rng.uniform(-2, 2))
        tau2 = float(rng.uniform(0.2, 3))
        checks = [check_lemma_Dm(model, m, tol=dm_tol) for m in (1, 2, 3)]
        checks.append(check_final_identity(model, bundle.f, tau1, tau2, tol))
        checks.append(check_regrouping(model, bundle.terms, bundle.direct, bundle.expr, bundle.f,
                                       bundle.unsymmetrized, tau1, tau2, tol))
        checks.append(check_log_transport(model, transport_tol))
        checks.append(check_log_delta_property(model, tol=transport_tol))
        checks.append(check_trace_of_derivation(model))
        if t < radial_trials:
            checks.append(check_radial_integration(model, bundle.groups, bundle.direct,
                                                   bundle.terms, tau1, tau2))
        if t < degenerate_trials:
            near = near_degenerate_model(n, s + 50000)
            extra = [check_lemma_Dm(near, m, tol=dm_tol) for m in (1, 2, 3)]
            extra.append(check_final_identity(near, bundle.f, tau1, tau2, tol))
            for c in extra:
                c["check"] += "_near_degenerate"
            checks += extra
        rows.append({"seed": s, "dim": n, "tau1": tau1, "tau2": tau2, "checks": checks,
                     "pass": all(c["pass"] for c in checks)})
    rows = [_plain(r) for r in rows]
    summary: dict = {}
    for row in rows:
        for c in row["checks"]:
            name = c["check"] + (f"_m{c['m']}" if "m" in c else "")
            cur = summary.setdefault(name, {"worst": 0.0, "failures": 0, "runs": 0, "metrics": {}})
            for key, v in c.items():
                if isinstance(v, float):
                    cur["metrics"][key] = max(cur["metrics"].get(key, 0.0), v)
            cur["worst"] = max(cur["metrics"].values())
            cur["runs"] += 1
            cur["failures"] += 0 if c["pass"] else 1
    return {"trials": trials, "seed": seed, "dims": list(dims), "summary": summary,
            "rows": rows, "pass": all(r["pass"] for r in rows)}
